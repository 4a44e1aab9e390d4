//! Explicit-state checking: breadth-first reachability, safety-invariant
//! verification with shortest counterexample traces, the built-in privacy
//! requirements, and refinement of implementation systems against the
//! abstract semantics.

use std::collections::{HashMap, HashSet, VecDeque};
use std::hash::Hash;
use std::sync::Arc;

use thiserror::Error;

use crate::ontology::Role;
use crate::semantics::{enabled_events, ModelConfig, SystemState};

/// A finitely branching transition system with deterministic, canonically
/// ordered successor enumeration. Implemented by the abstract semantics and
/// by program-graph compositions.
pub trait TransitionSystem {
    type State: Clone + Eq + Hash + Ord;
    type Label: Clone + Eq + Ord;

    fn initial_states(&self) -> Vec<Self::State>;
    fn successors(&self, state: &Self::State) -> Vec<(Self::Label, Self::State)>;

    fn display_state(&self, state: &Self::State) -> String;
    fn display_label(&self, label: &Self::Label) -> String;

    /// Structured rendering for machine-readable reports.
    fn state_value(&self, state: &Self::State) -> serde_json::Value {
        serde_json::Value::String(self.display_state(state))
    }
}

/// Counts from a completed breadth-first exploration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExploreSummary {
    pub states: usize,
    pub transitions: usize,
    pub depth: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExploreError {
    #[error("state bound exceeded after {} states and {} transitions", partial.states, partial.transitions)]
    BoundExceeded { partial: ExploreSummary },
}

/// Breadth-first reachability over the whole system, up to an optional
/// state bound. Hitting the bound is reported, never silent.
pub fn explore<T: TransitionSystem>(
    ts: &T,
    bound: Option<usize>,
) -> Result<ExploreSummary, ExploreError> {
    let mut visited: HashSet<T::State> = HashSet::new();
    let mut queue: VecDeque<(T::State, usize)> = VecDeque::new();
    let mut transitions = 0usize;
    let mut depth = 0usize;
    for s in ts.initial_states() {
        if visited.insert(s.clone()) {
            queue.push_back((s, 0));
        }
    }
    if let Some(b) = bound {
        if visited.len() > b {
            return Err(ExploreError::BoundExceeded {
                partial: ExploreSummary { states: visited.len(), transitions, depth },
            });
        }
    }
    while let Some((state, d)) = queue.pop_front() {
        depth = depth.max(d);
        for (_, succ) in ts.successors(&state) {
            transitions += 1;
            if visited.insert(succ.clone()) {
                if let Some(b) = bound {
                    if visited.len() > b {
                        return Err(ExploreError::BoundExceeded {
                            partial: ExploreSummary { states: visited.len(), transitions, depth },
                        });
                    }
                }
                queue.push_back((succ, d + 1));
            }
        }
    }
    Ok(ExploreSummary { states: visited.len(), transitions, depth })
}

/// A named state predicate. Predicates must be total on reachable states.
pub struct InvariantSpec<S> {
    pub name: String,
    /// Shown in reports; carries caveats the model author should know.
    pub note: Option<String>,
    predicate: Arc<dyn Fn(&S) -> bool + Send + Sync>,
}

impl<S> Clone for InvariantSpec<S> {
    fn clone(&self) -> Self {
        InvariantSpec {
            name: self.name.clone(),
            note: self.note.clone(),
            predicate: self.predicate.clone(),
        }
    }
}

impl<S> std::fmt::Debug for InvariantSpec<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InvariantSpec").field("name", &self.name).finish()
    }
}

impl<S> InvariantSpec<S> {
    pub fn new(name: &str, predicate: impl Fn(&S) -> bool + Send + Sync + 'static) -> Self {
        InvariantSpec { name: name.to_string(), note: None, predicate: Arc::new(predicate) }
    }

    pub fn with_note(mut self, note: &str) -> Self {
        self.note = Some(note.to_string());
        self
    }

    pub fn holds(&self, state: &S) -> bool {
        (self.predicate)(state)
    }

    /// The same predicate precomposed with a state mapping, for checking an
    /// abstract-state invariant directly on an implementation system.
    pub fn compose<T: 'static>(
        &self,
        name: &str,
        map: impl Fn(&T) -> S + Send + Sync + 'static,
    ) -> InvariantSpec<T>
    where
        S: 'static,
    {
        let inner = self.predicate.clone();
        InvariantSpec {
            name: name.to_string(),
            note: self.note.clone(),
            predicate: Arc::new(move |t: &T| inner(&map(t))),
        }
    }
}

/// An alternating state/label trace from an initial state. `states` has one
/// more entry than `labels`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace<S, L> {
    pub states: Vec<S>,
    pub labels: Vec<L>,
}

impl<S, L> Trace<S, L> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn final_state(&self) -> &S {
        self.states.last().expect("trace holds at least the initial state")
    }
}

/// Re-executes a trace against the system: every step must be one of the
/// enumerated successors of its predecessor and the first state initial.
pub fn replay<T: TransitionSystem>(ts: &T, trace: &Trace<T::State, T::Label>) -> bool {
    if trace.states.len() != trace.labels.len() + 1 {
        return false;
    }
    let Some(first) = trace.states.first() else { return false };
    if !ts.initial_states().contains(first) {
        return false;
    }
    for (i, label) in trace.labels.iter().enumerate() {
        let from = &trace.states[i];
        let to = &trace.states[i + 1];
        let matched = ts
            .successors(from)
            .into_iter()
            .any(|(l, s)| &l == label && &s == to);
        if !matched {
            return false;
        }
    }
    true
}

/// Result of a check: pass with exploration counts, or fail with a
/// replayable counterexample and the violated obligation.
#[derive(Debug, Clone)]
pub enum Verdict<S, L> {
    Pass { states: usize, transitions: usize },
    Fail { trace: Trace<S, L>, obligation: String },
}

impl<S, L> Verdict<S, L> {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass { .. })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckError {
    #[error(transparent)]
    Explore(#[from] ExploreError),
    #[error("refinement mapping undefined on a reachable state: {0}")]
    MappingPartial(String),
}

fn reconstruct<S: Clone + Eq + Hash, L: Clone>(
    parents: &HashMap<S, (S, L)>,
    end: &S,
) -> (Vec<S>, Vec<L>) {
    let mut states = vec![end.clone()];
    let mut labels = Vec::new();
    let mut cur = end.clone();
    while let Some((prev, label)) = parents.get(&cur) {
        states.push(prev.clone());
        labels.push(label.clone());
        cur = prev.clone();
    }
    states.reverse();
    labels.reverse();
    (states, labels)
}

/// Checks a state invariant on every reachable state. Fails with a
/// shortest-by-BFS counterexample; ties are broken by the canonical
/// successor order, so equal inputs yield identical traces.
pub fn check_invariant<T: TransitionSystem>(
    ts: &T,
    inv: &InvariantSpec<T::State>,
    bound: Option<usize>,
) -> Result<Verdict<T::State, T::Label>, CheckError> {
    let mut visited: HashSet<T::State> = HashSet::new();
    let mut parents: HashMap<T::State, (T::State, T::Label)> = HashMap::new();
    let mut queue: VecDeque<T::State> = VecDeque::new();
    let mut transitions = 0usize;

    let fail = |parents: &HashMap<T::State, (T::State, T::Label)>, bad: &T::State| {
        let (states, labels) = reconstruct(parents, bad);
        Verdict::Fail {
            trace: Trace { states, labels },
            obligation: format!("invariant {} violated", inv.name),
        }
    };

    for s in ts.initial_states() {
        if visited.insert(s.clone()) {
            if !inv.holds(&s) {
                return Ok(fail(&parents, &s));
            }
            queue.push_back(s);
        }
    }
    while let Some(state) = queue.pop_front() {
        for (label, succ) in ts.successors(&state) {
            transitions += 1;
            if visited.insert(succ.clone()) {
                parents.insert(succ.clone(), (state.clone(), label));
                if !inv.holds(&succ) {
                    return Ok(fail(&parents, &succ));
                }
                if let Some(b) = bound {
                    if visited.len() > b {
                        return Err(CheckError::Explore(ExploreError::BoundExceeded {
                            partial: ExploreSummary { states: visited.len(), transitions, depth: 0 },
                        }));
                    }
                }
                queue.push_back(succ);
            }
        }
    }
    Ok(Verdict::Pass { states: visited.len(), transitions })
}

/// Subject policy compliance: every item a controller holds is governed by
/// a policy that subsumes each of the owner's own policies applying to the
/// item's datatype.
pub fn pr1(cfg: &Arc<ModelConfig>) -> InvariantSpec<SystemState> {
    let cfg = cfg.clone();
    InvariantSpec::new("pr1", move |st: &SystemState| {
        let ont = &cfg.ontology;
        for (dc, _) in ont.devices().filter(|(_, d)| d.role == Role::Controller) {
            for (_, item, policy) in st.received(dc) {
                let owner = ont.owner_of(item);
                let item_type = ont.type_of(item);
                for (from, own) in st.base(owner) {
                    if from != owner || !cfg.applies_to(own, item_type) {
                        continue;
                    }
                    if !cfg.subsumes(policy, own) {
                        return false;
                    }
                }
            }
        }
        true
    })
    .with_note(
        "checked against every owner policy whose datatype bounds the item's type; \
         owners declaring several overlapping policies are held to each of them",
    )
}

/// Informed consent for collection: whenever a device holds an item received
/// directly from its owner, the owner's base already contains a policy of
/// the collector covering the item's datatype.
pub fn pr2(cfg: &Arc<ModelConfig>) -> InvariantSpec<SystemState> {
    let cfg = cfg.clone();
    InvariantSpec::new("pr2", move |st: &SystemState| {
        let ont = &cfg.ontology;
        for (rcv, _) in ont.devices() {
            for (sndr, item, _) in st.received(rcv) {
                if ont.owner_of(item) != sndr {
                    continue;
                }
                let item_type = ont.type_of(item);
                let informed = st
                    .base(sndr)
                    .any(|(from, p)| from == rcv && cfg.applies_to(p, item_type));
                if !informed {
                    return false;
                }
            }
        }
        true
    })
}

/// A total map from implementation states to abstract system states.
pub struct RefinementMapping<S> {
    pub name: String,
    map: Arc<dyn Fn(&S) -> Result<SystemState, String> + Send + Sync>,
}

impl<S> Clone for RefinementMapping<S> {
    fn clone(&self) -> Self {
        RefinementMapping { name: self.name.clone(), map: self.map.clone() }
    }
}

impl<S> std::fmt::Debug for RefinementMapping<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RefinementMapping").field("name", &self.name).finish()
    }
}

impl<S> RefinementMapping<S> {
    pub fn new(
        name: &str,
        map: impl Fn(&S) -> Result<SystemState, String> + Send + Sync + 'static,
    ) -> Self {
        RefinementMapping { name: name.to_string(), map: Arc::new(map) }
    }

    pub fn apply(&self, s: &S) -> Result<SystemState, String> {
        (self.map)(s)
    }
}

/// Why a refinement check failed, with the offending implementation step.
#[derive(Debug, Clone)]
pub enum RefinementFailure<S, L> {
    /// An initial implementation state maps outside the abstract initial set.
    InitialUnmatched { state: S },
    /// A reachable step neither stutters nor matches any abstract event.
    StepUnmatched { from: S, label: L, to: S },
}

/// Outcome of a refinement check against the abstract semantics.
#[derive(Debug, Clone)]
pub enum RefinementVerdict<S, L> {
    Pass { states: usize, transitions: usize },
    Fail { trace: Trace<S, L>, failure: RefinementFailure<S, L>, obligation: String },
}

impl<S, L> RefinementVerdict<S, L> {
    pub fn passed(&self) -> bool {
        matches!(self, RefinementVerdict::Pass { .. })
    }
}

/// Verifies that `impl_ts` refines the abstract semantics of `cfg` under
/// mapping `m`: mapped initial states are abstract initial states, and every
/// reachable implementation step either leaves the mapped state unchanged or
/// corresponds to an enabled abstract event. The logical clock is ignored on
/// both sides; it tracks implementation step counts, not abstract time.
pub fn check_refinement<T: TransitionSystem>(
    impl_ts: &T,
    cfg: &Arc<ModelConfig>,
    m: &RefinementMapping<T::State>,
    bound: Option<usize>,
) -> Result<RefinementVerdict<T::State, T::Label>, CheckError> {
    let normalize = |st: SystemState| st.with_clock(0);
    let map = |s: &T::State| -> Result<SystemState, CheckError> {
        m.apply(s).map(normalize).map_err(CheckError::MappingPartial)
    };

    let abstract_initials: HashSet<SystemState> =
        cfg.initial_states().into_iter().map(normalize).collect();
    let mut abstract_succs: HashMap<SystemState, HashSet<SystemState>> = HashMap::new();
    let mut abstract_successors = |st: &SystemState| -> HashSet<SystemState> {
        if let Some(cached) = abstract_succs.get(st) {
            return cached.clone();
        }
        let set: HashSet<SystemState> = enabled_events(cfg, st)
            .into_iter()
            .map(|(_, s)| normalize(s))
            .collect();
        abstract_succs.insert(st.clone(), set.clone());
        set
    };

    let mut visited: HashSet<T::State> = HashSet::new();
    let mut parents: HashMap<T::State, (T::State, T::Label)> = HashMap::new();
    let mut queue: VecDeque<T::State> = VecDeque::new();
    let mut transitions = 0usize;

    for s in impl_ts.initial_states() {
        if visited.insert(s.clone()) {
            let mapped = map(&s)?;
            if !abstract_initials.contains(&mapped) {
                return Ok(RefinementVerdict::Fail {
                    trace: Trace { states: vec![s.clone()], labels: vec![] },
                    failure: RefinementFailure::InitialUnmatched { state: s },
                    obligation: format!(
                        "refinement {}: mapped initial state is not an abstract initial state",
                        m.name
                    ),
                });
            }
            queue.push_back(s);
        }
    }

    while let Some(state) = queue.pop_front() {
        let mapped_from = map(&state)?;
        let succs_of_mapped = abstract_successors(&mapped_from);
        for (label, succ) in impl_ts.successors(&state) {
            transitions += 1;
            let mapped_to = map(&succ)?;
            let stutter = mapped_from == mapped_to;
            if !stutter && !succs_of_mapped.contains(&mapped_to) {
                let (mut states, mut labels) = reconstruct(&parents, &state);
                states.push(succ.clone());
                labels.push(label.clone());
                return Ok(RefinementVerdict::Fail {
                    trace: Trace { states, labels },
                    failure: RefinementFailure::StepUnmatched { from: state, label, to: succ },
                    obligation: format!(
                        "refinement {}: step has no abstract counterpart and is not a stutter",
                        m.name
                    ),
                });
            }
            if visited.insert(succ.clone()) {
                parents.insert(succ.clone(), (state.clone(), label));
                if let Some(b) = bound {
                    if visited.len() > b {
                        return Err(CheckError::Explore(ExploreError::BoundExceeded {
                            partial: ExploreSummary { states: visited.len(), transitions, depth: 0 },
                        }));
                    }
                }
                queue.push_back(succ);
            }
        }
    }
    Ok(RefinementVerdict::Pass { states: visited.len(), transitions })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A tiny hand-rolled counter system for checker unit tests.
    struct Counter {
        limit: u64,
    }

    impl TransitionSystem for Counter {
        type State = u64;
        type Label = &'static str;

        fn initial_states(&self) -> Vec<u64> {
            vec![0]
        }

        fn successors(&self, state: &u64) -> Vec<(&'static str, u64)> {
            if *state < self.limit {
                vec![("inc", state + 1)]
            } else {
                vec![]
            }
        }

        fn display_state(&self, s: &u64) -> String {
            s.to_string()
        }

        fn display_label(&self, l: &&'static str) -> String {
            l.to_string()
        }
    }

    #[test]
    fn explore_counts() {
        let ts = Counter { limit: 5 };
        let summary = explore(&ts, None).unwrap();
        assert_eq!(summary.states, 6);
        assert_eq!(summary.transitions, 5);
        assert_eq!(summary.depth, 5);
    }

    #[test]
    fn explore_single_deadlock() {
        let ts = Counter { limit: 0 };
        let summary = explore(&ts, None).unwrap();
        assert_eq!(summary.states, 1);
        assert_eq!(summary.transitions, 0);
    }

    #[test]
    fn explore_bound_exceeded() {
        let ts = Counter { limit: 100 };
        let err = explore(&ts, Some(10)).unwrap_err();
        let ExploreError::BoundExceeded { partial } = err;
        assert!(partial.states > 10);
    }

    #[test]
    fn invariant_pass_and_fail() {
        let ts = Counter { limit: 5 };
        let ok = InvariantSpec::new("small", |s: &u64| *s <= 5);
        assert!(check_invariant(&ts, &ok, None).unwrap().passed());

        let bad = InvariantSpec::new("tiny", |s: &u64| *s < 3);
        match check_invariant(&ts, &bad, None).unwrap() {
            Verdict::Fail { trace, .. } => {
                assert_eq!(trace.states, vec![0, 1, 2, 3]);
                assert_eq!(trace.labels.len(), 3);
                assert!(replay(&ts, &trace));
                assert!(!bad.holds(trace.final_state()));
            }
            Verdict::Pass { .. } => panic!("expected violation"),
        }
    }

    #[test]
    fn constant_false_fails_at_initial() {
        let ts = Counter { limit: 5 };
        let never = InvariantSpec::new("never", |_: &u64| false);
        match check_invariant(&ts, &never, None).unwrap() {
            Verdict::Fail { trace, .. } => {
                assert_eq!(trace.states.len(), 1);
                assert!(trace.labels.is_empty());
                assert!(replay(&ts, &trace));
            }
            Verdict::Pass { .. } => panic!("expected violation"),
        }
    }

    #[test]
    fn replay_rejects_forged_trace() {
        let ts = Counter { limit: 5 };
        let forged = Trace { states: vec![0, 2], labels: vec!["inc"] };
        assert!(!replay(&ts, &forged));
        let wrong_start = Trace { states: vec![1, 2], labels: vec!["inc"] };
        assert!(!replay(&ts, &wrong_start));
    }
}
