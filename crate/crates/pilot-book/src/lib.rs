//! Placeholder: populated alongside the book chapters.
