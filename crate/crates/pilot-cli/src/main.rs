//! Command-line front end: loads a model document, dispatches checks, and
//! renders verdicts, traces and graphs.
//!
//! Exit codes: 0 for pass, 1 for a violation or failed refinement, 2 for
//! usage or model errors.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pilot_core::checker::{check_invariant, check_refinement, InvariantSpec, TransitionSystem};
use pilot_core::model::{LoadedModel, ModelDocument};
use pilot_core::pg::{compose, ComposedSystem};
use pilot_core::report;
use pilot_core::semantics::{abstract_ts, AbstractTs};
use pilot_core::systems::{
    build_direct_system, build_indirect_system, mapped_invariant, BuiltSystem,
};

#[derive(Parser)]
#[command(
    name = "pilot",
    about = "Explicit-state verification for PILOT consent-management models",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Target {
    /// The abstract policy-exchange semantics.
    Abstract,
    /// The program-graph system declared in the model document.
    System,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct ModelArgs {
    /// Path to the model document.
    #[arg(long)]
    model: PathBuf,
    /// State bound for exploration (overrides the document's config.bound).
    #[arg(long)]
    bound: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a state invariant on every reachable state.
    Check {
        #[command(flatten)]
        model: ModelArgs,
        /// `pr1`, `pr2`, or an invariant declared in the document.
        #[arg(long)]
        invariant: String,
        /// Which system to check; program-graph systems are checked through
        /// their refinement mapping.
        #[arg(long, value_enum, default_value = "abstract")]
        target: Target,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Verify that the document's program-graph system refines the abstract
    /// semantics under the built-in mapping.
    Refine {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Print one random trace of the selected system.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to the document's system when one is declared.
        #[arg(long, value_enum)]
        target: Option<Target>,
    },
    /// Write the reachable transition graph in DOT format.
    ExportDot {
        #[command(flatten)]
        model: ModelArgs,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        target: Option<Target>,
    },
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load(path: &PathBuf) -> Result<(ModelDocument, LoadedModel)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read model '{}'", path.display()))?;
    let doc = ModelDocument::from_json_str(&text)?;
    let model = doc.load()?;
    Ok((doc, model))
}

enum BuiltTarget {
    Abstract(AbstractTs),
    Built(Box<BuiltSystem>),
    Custom(Box<ComposedSystem>),
}

fn build_target(doc: &ModelDocument, model: &LoadedModel, target: Target) -> Result<BuiltTarget> {
    match target {
        Target::Abstract => Ok(BuiltTarget::Abstract(abstract_ts(model.cfg.clone()))),
        Target::System => {
            if let Some(spec) = &model.system {
                let built = match doc.system_kind() {
                    Some("direct") => build_direct_system(model.cfg.clone(), spec)?,
                    Some("indirect") => build_indirect_system(model.cfg.clone(), spec)?,
                    other => bail!("unsupported system kind {other:?}"),
                };
                Ok(BuiltTarget::Built(Box::new(built)))
            } else if !model.custom_pgs.is_empty() {
                let sys = compose(
                    model.cfg.clone(),
                    model.custom_pgs.clone(),
                    pilot_core::pg::CompositionMode::Async,
                )?;
                Ok(BuiltTarget::Custom(Box::new(sys)))
            } else {
                bail!("the model declares neither a 'system' nor 'program_graphs'")
            }
        }
    }
}

fn resolve_invariant(
    model: &LoadedModel,
    name: &str,
) -> Result<InvariantSpec<pilot_core::SystemState>> {
    match name {
        "pr1" => Ok(pilot_core::pr1(&model.cfg)),
        "pr2" => Ok(pilot_core::pr2(&model.cfg)),
        other => model.invariants.get(other).cloned().ok_or_else(|| {
            let mut known: Vec<&str> = vec!["pr1", "pr2"];
            known.extend(model.invariants.keys().map(|s| s.as_str()));
            anyhow!("unknown invariant '{other}' (available: {})", known.join(", "))
        }),
    }
}

fn run_check<T: TransitionSystem>(
    ts: &T,
    inv: &InvariantSpec<T::State>,
    bound: Option<usize>,
    format: Format,
) -> Result<u8> {
    let verdict = check_invariant(ts, inv, bound)?;
    match format {
        Format::Text => {
            print!("{}", report::check_report_text(ts, &inv.name, inv.note.as_deref(), &verdict))
        }
        Format::Json => println!(
            "{}",
            serde_json::to_string_pretty(&report::check_report_json(
                ts,
                &inv.name,
                inv.note.as_deref(),
                &verdict
            ))?
        ),
    }
    Ok(if verdict.passed() { 0 } else { 1 })
}

fn run_simulate<T: TransitionSystem>(ts: &T, steps: usize, seed: u64) -> Result<u8> {
    if ts.initial_states().is_empty() {
        bail!("system has no initial states");
    }
    let trace = report::simulate(ts, steps, seed);
    println!("simulated {} steps (seed {seed}):", trace.len());
    print!("{}", report::trace_text(ts, &trace));
    Ok(0)
}

fn run_export<T: TransitionSystem>(ts: &T, out: &PathBuf, bound: Option<usize>) -> Result<u8> {
    let dot = report::export_dot(ts, bound);
    std::fs::write(out, dot).with_context(|| format!("cannot write '{}'", out.display()))?;
    println!("wrote {}", out.display());
    Ok(0)
}

fn run() -> Result<u8> {
    let cli = Cli::parse();
    match cli.command {
        Command::Check { model: margs, invariant, target, format } => {
            let (doc, model) = load(&margs.model)?;
            let bound = margs.bound.or(model.bound);
            let inv = resolve_invariant(&model, &invariant)?;
            match build_target(&doc, &model, target)? {
                BuiltTarget::Abstract(ts) => run_check(&ts, &inv, bound, format),
                BuiltTarget::Built(built) => {
                    let mapped = mapped_invariant(&inv, &built.mapping);
                    run_check(&built.system, &mapped, bound, format)
                }
                BuiltTarget::Custom(_) => bail!(
                    "custom program_graphs have no refinement mapping; \
                     declare a built 'system' to check mapped invariants"
                ),
            }
        }
        Command::Refine { model: margs, format } => {
            let (doc, model) = load(&margs.model)?;
            let bound = margs.bound.or(model.bound);
            let BuiltTarget::Built(built) = build_target(&doc, &model, Target::System)? else {
                bail!("refine needs a 'system' section selecting a built architecture");
            };
            let verdict = check_refinement(&built.system, &model.cfg, &built.mapping, bound)?;
            match format {
                Format::Text => print!(
                    "{}",
                    report::refine_report_text(&built.system, &built.mapping.name, &verdict)
                ),
                Format::Json => println!(
                    "{}",
                    serde_json::to_string_pretty(&report::refine_report_json(
                        &built.system,
                        &built.mapping.name,
                        &verdict
                    ))?
                ),
            }
            Ok(if verdict.passed() { 0 } else { 1 })
        }
        Command::Simulate { model: margs, steps, seed, target } => {
            let (doc, model) = load(&margs.model)?;
            let target = target.unwrap_or(
                if model.system.is_some() || !model.custom_pgs.is_empty() {
                    Target::System
                } else {
                    Target::Abstract
                },
            );
            match build_target(&doc, &model, target)? {
                BuiltTarget::Abstract(ts) => run_simulate(&ts, steps, seed),
                BuiltTarget::Built(built) => run_simulate(&built.system, steps, seed),
                BuiltTarget::Custom(sys) => run_simulate(sys.as_ref(), steps, seed),
            }
        }
        Command::ExportDot { model: margs, out, target } => {
            let (doc, model) = load(&margs.model)?;
            let bound = margs.bound.or(model.bound);
            let target = target.unwrap_or(
                if model.system.is_some() || !model.custom_pgs.is_empty() {
                    Target::System
                } else {
                    Target::Abstract
                },
            );
            match build_target(&doc, &model, target)? {
                BuiltTarget::Abstract(ts) => run_export(&ts, &out, bound),
                BuiltTarget::Built(built) => run_export(&built.system, &out, bound),
                BuiltTarget::Custom(sys) => run_export(sys.as_ref(), &out, bound),
            }
        }
    }
}
