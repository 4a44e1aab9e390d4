//! Verification toolkit for consent-management protocols built on the PILOT
//! privacy-policy language: policy subsumption, an abstract operational
//! semantics of policy and data exchange, program graphs as implementation
//! design language, and an explicit-state checker proving consent invariants
//! and refinements with replayable counterexample traces.
//!
//! The accompanying guide under `book/` walks through every concept; its
//! code snippets are compiled and run as doc-tests.

pub mod checker;
pub mod ontology;
pub mod policy;
pub mod report;
pub mod systems;
pub mod model;
pub mod pg;
pub mod semantics;

pub use checker::{
    pr1, pr2,
    check_invariant, check_refinement, explore, replay, CheckError, ExploreError, ExploreSummary,
    InvariantSpec, RefinementFailure, RefinementMapping, RefinementVerdict, Trace,
    TransitionSystem, Verdict,
};
pub use ontology::{
    DeviceId, EntityId, ItemId, Ontology, OntologyDecl, OntologyError, PartialOrder, PurposeId,
    Role, SymId, TypeId, Value,
};
pub use policy::{
    active_policy, active_transfer, comparable, eval_condition, eval_item_condition,
    subsumes_dcr, subsumes_dur, subsumes_policy, AbstractOrder, CommEvent, CondEnv, CondVal,
    Condition, DataCommunicationRule, DataUsageRule, Interpretation, PilotPolicy, PolicyError,
    PolicyId, PolicyPool, Term, Truth,
};
pub use semantics::{
    abstract_ts, apply_request, apply_send, apply_transfer, enabled_events, AbstractTs,
    ConfigError, Event, ModelConfig, NotEnabled, PolicyMode, SystemState,
};
pub use pg::{
    compose, ComposeError, ComposedSystem, CompositionMode, CompositionState, PgAction,
    PgTransition, ProgramGraph, StepLabel,
};
pub use systems::{
    build_direct_system, build_indirect_system, mapped_invariant, BuildError, BuiltSystem,
    Mutation, SystemSpec,
};
pub use model::{LoadedModel, ModelDocument, ModelError};
