//! Rendering of verdicts, traces and graphs: a human-readable form with
//! numbered steps showing the changed state components, and a structured
//! JSON form. Both are deterministic for equal inputs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::checker::{
    ExploreSummary, RefinementVerdict, Trace, TransitionSystem, Verdict,
};

fn diff_json(prev: &serde_json::Value, next: &serde_json::Value, path: &str, out: &mut Vec<String>) {
    match (prev, next) {
        (serde_json::Value::Object(a), serde_json::Value::Object(b)) => {
            for (k, vb) in b {
                let sub = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match a.get(k) {
                    Some(va) if va == vb => {}
                    Some(va) => diff_json(va, vb, &sub, out),
                    None => out.push(format!("{sub} := {vb}")),
                }
            }
            for (k, va) in a {
                if !b.contains_key(k) {
                    let sub = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                    out.push(format!("{sub} dropped (was {va})"));
                }
            }
        }
        _ if prev == next => {}
        _ => out.push(format!("{path}: {prev} -> {next}")),
    }
}

/// One line per changed state component, computed on the structured view.
pub fn state_diff<T: TransitionSystem>(ts: &T, prev: &T::State, next: &T::State) -> String {
    let mut lines = Vec::new();
    diff_json(&ts.state_value(prev), &ts.state_value(next), "", &mut lines);
    if lines.is_empty() {
        "(state unchanged)".to_string()
    } else {
        lines.join("; ")
    }
}

pub fn trace_text<T: TransitionSystem>(ts: &T, trace: &Trace<T::State, T::Label>) -> String {
    let mut out = String::new();
    out.push_str(&format!("  0: {}\n", ts.display_state(&trace.states[0])));
    for (i, label) in trace.labels.iter().enumerate() {
        out.push_str(&format!(
            "  {}: [{}] {}\n",
            i + 1,
            ts.display_label(label),
            state_diff(ts, &trace.states[i], &trace.states[i + 1]),
        ));
    }
    out
}

pub fn trace_json<T: TransitionSystem>(ts: &T, trace: &Trace<T::State, T::Label>) -> serde_json::Value {
    json!({
        "states": trace.states.iter().map(|s| ts.state_value(s)).collect::<Vec<_>>(),
        "labels": trace.labels.iter().map(|l| ts.display_label(l)).collect::<Vec<_>>(),
    })
}

pub fn check_report_text<T: TransitionSystem>(
    ts: &T,
    invariant: &str,
    note: Option<&str>,
    verdict: &Verdict<T::State, T::Label>,
) -> String {
    let mut out = String::new();
    match verdict {
        Verdict::Pass { states, transitions } => {
            out.push_str(&format!(
                "invariant {invariant}: PASS ({states} states, {transitions} transitions)\n"
            ));
        }
        Verdict::Fail { trace, obligation } => {
            out.push_str(&format!("invariant {invariant}: FAIL\n"));
            out.push_str(&format!("counterexample ({} steps):\n", trace.len()));
            out.push_str(&trace_text(ts, trace));
            out.push_str(&format!("violated: {obligation}\n"));
        }
    }
    if let Some(n) = note {
        out.push_str(&format!("note: {n}\n"));
    }
    out
}

pub fn check_report_json<T: TransitionSystem>(
    ts: &T,
    invariant: &str,
    note: Option<&str>,
    verdict: &Verdict<T::State, T::Label>,
) -> serde_json::Value {
    let mut report = match verdict {
        Verdict::Pass { states, transitions } => json!({
            "command": "check",
            "invariant": invariant,
            "result": "pass",
            "states": states,
            "transitions": transitions,
        }),
        Verdict::Fail { trace, obligation } => json!({
            "command": "check",
            "invariant": invariant,
            "result": "fail",
            "obligation": obligation,
            "trace": trace_json(ts, trace),
        }),
    };
    if let Some(n) = note {
        report["note"] = json!(n);
    }
    report
}

pub fn refine_report_text<T: TransitionSystem>(
    ts: &T,
    mapping: &str,
    verdict: &RefinementVerdict<T::State, T::Label>,
) -> String {
    match verdict {
        RefinementVerdict::Pass { states, transitions } => format!(
            "refinement {mapping}: PASS ({states} states, {transitions} transitions)\n"
        ),
        RefinementVerdict::Fail { trace, obligation, .. } => {
            let mut out = format!("refinement {mapping}: FAIL\n");
            out.push_str(&format!("counterexample ({} steps):\n", trace.len()));
            out.push_str(&trace_text(ts, trace));
            out.push_str(&format!("violated: {obligation}\n"));
            out
        }
    }
}

pub fn refine_report_json<T: TransitionSystem>(
    ts: &T,
    mapping: &str,
    verdict: &RefinementVerdict<T::State, T::Label>,
) -> serde_json::Value {
    match verdict {
        RefinementVerdict::Pass { states, transitions } => json!({
            "command": "refine",
            "mapping": mapping,
            "result": "pass",
            "states": states,
            "transitions": transitions,
        }),
        RefinementVerdict::Fail { trace, obligation, .. } => json!({
            "command": "refine",
            "mapping": mapping,
            "result": "fail",
            "obligation": obligation,
            "trace": trace_json(ts, trace),
        }),
    }
}

pub fn summary_text(summary: &ExploreSummary) -> String {
    format!(
        "{} states, {} transitions, depth {}\n",
        summary.states, summary.transitions, summary.depth
    )
}

/// A seeded random walk. Every emitted step is one of the enumerated
/// successors, so printed traces always replay.
pub fn simulate<T: TransitionSystem>(
    ts: &T,
    steps: usize,
    seed: u64,
) -> Trace<T::State, T::Label> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initials = ts.initial_states();
    let mut current = initials
        .choose(&mut rng)
        .expect("system has at least one initial state")
        .clone();
    let mut trace = Trace { states: vec![current.clone()], labels: Vec::new() };
    for _ in 0..steps {
        let succs = ts.successors(&current);
        let Some((label, next)) = succs.choose(&mut rng) else { break };
        trace.labels.push(label.clone());
        trace.states.push(next.clone());
        current = next.clone();
    }
    trace
}

/// The reachable fragment as a DOT digraph, up to an optional state bound.
pub fn export_dot<T: TransitionSystem>(ts: &T, bound: Option<usize>) -> String {
    use std::collections::{HashMap, VecDeque};
    let mut ids: HashMap<T::State, usize> = HashMap::new();
    let mut order: Vec<T::State> = Vec::new();
    let mut queue = VecDeque::new();
    let mut edges: Vec<(usize, String, usize)> = Vec::new();
    for s in ts.initial_states() {
        if !ids.contains_key(&s) {
            ids.insert(s.clone(), order.len());
            order.push(s.clone());
            queue.push_back(s);
        }
    }
    let limit = bound.unwrap_or(usize::MAX);
    while let Some(state) = queue.pop_front() {
        let from = ids[&state];
        for (label, succ) in ts.successors(&state) {
            if !ids.contains_key(&succ) {
                if order.len() >= limit {
                    continue;
                }
                ids.insert(succ.clone(), order.len());
                order.push(succ.clone());
                queue.push_back(succ.clone());
            }
            edges.push((from, ts.display_label(&label), ids[&succ]));
        }
    }
    let escape = |s: &str| s.replace('\\', "\\\\").replace('"', "\\\"");
    let mut out = String::from("digraph system {\n  rankdir=LR;\n  node [shape=box, fontsize=9];\n");
    let initial_count = ts.initial_states().len();
    for (i, state) in order.iter().enumerate() {
        let style = if i < initial_count { ", style=bold" } else { "" };
        out.push_str(&format!(
            "  n{} [label=\"{}\"{}];\n",
            i,
            escape(&ts.display_state(state)),
            style
        ));
    }
    for (from, label, to) in edges {
        out.push_str(&format!("  n{from} -> n{to} [label=\"{}\"];\n", escape(&label)));
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checker::replay;
    use crate::semantics::{abstract_ts, tests::small_cfg};

    #[test]
    fn simulation_steps_are_valid() {
        let ts = abstract_ts(small_cfg(true));
        let trace = simulate(&ts, 12, 7);
        assert!(replay(&ts, &trace));
    }

    #[test]
    fn simulation_deterministic_per_seed() {
        let ts = abstract_ts(small_cfg(true));
        let a = simulate(&ts, 10, 42);
        let b = simulate(&ts, 10, 42);
        assert_eq!(a.states, b.states);
        let c = simulate(&ts, 10, 43);
        assert!(a.states != c.states || a.labels != c.labels || trace_text(&ts, &a) == trace_text(&ts, &c));
    }

    #[test]
    fn dot_well_formed() {
        let ts = abstract_ts(small_cfg(true));
        let dot = export_dot(&ts, Some(40));
        assert!(dot.starts_with("digraph system {"));
        assert!(dot.trim_end().ends_with('}'));
        assert!(dot.contains("->"));
    }

    #[test]
    fn diff_shows_changes_only() {
        let ts = abstract_ts(small_cfg(true));
        let st = ts.cfg.initial_states().remove(0);
        let (_, next) = crate::semantics::enabled_events(&ts.cfg, &st).remove(0);
        let diff = state_diff(&ts, &st, &next);
        assert!(diff.contains("base"), "request should change a policy base: {diff}");
        assert_eq!(state_diff(&ts, &st, &st), "(state unchanged)");
    }
}
