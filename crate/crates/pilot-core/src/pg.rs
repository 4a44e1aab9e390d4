//! Program graphs: guarded extended state machines with effect assignments,
//! composed either synchronously (rendezvous on paired send/receive actions)
//! or asynchronously through a set of messages in transit.
//!
//! Guards are evaluated with the policy condition evaluator extended by the
//! `subsumes` and `applies_to` predicates, so machines can branch on policy
//! comparisons.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::checker::TransitionSystem;
use crate::ontology::TypeId;
use crate::policy::{eval_condition, eval_term, CondEnv, CondVal, Condition, PolicyId, Term};
use crate::semantics::ModelConfig;

/// Index of a variable local to one program graph.
pub type VarIdx = u32;
/// Index of a location local to one program graph.
pub type LocIdx = u32;

/// Transition label kinds: internal steps, message emission with payload
/// terms, and message reception binding payload values to variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PgAction {
    /// Internal step (`tau` or a named local action such as `init`).
    Internal(String),
    /// Sending half of a handshake action; terms are evaluated at fire time.
    Send(String, Vec<Term<VarIdx>>),
    /// Receiving half: payload values are bound to the listed variables
    /// before the guard is evaluated.
    Recv(String, Vec<VarIdx>),
}

/// One guarded transition. Assignments run after the guard holds (for
/// receives, after payload binding); cleared variables are reset to
/// undefined last, which lets receive edges use scratch variables without
/// polluting the state.
#[derive(Debug, Clone)]
pub struct PgTransition {
    pub from: LocIdx,
    pub to: LocIdx,
    pub action: PgAction,
    pub guard: Condition<VarIdx>,
    pub assigns: Vec<(VarIdx, Term<VarIdx>)>,
    pub clears: Vec<VarIdx>,
}

/// A single machine: locations, variables, guarded transitions, one initial
/// location and a set of initial valuations. Several initial valuations
/// model machine-level initializers that choose nondeterministically from a
/// finite pool; the checker explores every choice.
#[derive(Debug, Clone)]
pub struct ProgramGraph {
    pub name: String,
    pub locations: Vec<String>,
    pub initial_location: LocIdx,
    pub variables: Vec<String>,
    /// Dense rows over `variables`; must be nonempty.
    pub initial_valuations: Vec<Vec<CondVal>>,
    pub transitions: Vec<PgTransition>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ComposeError {
    #[error("action '{action}': sending components '{first}' and '{second}' both claim it")]
    AmbiguousHandshake { action: String, first: String, second: String },
    #[error("action '{action}': used with arities {a} and {b}")]
    ArityMismatch { action: String, a: usize, b: usize },
    #[error("variable '{0}' declared by more than one component")]
    DuplicateVariable(String),
    #[error("component '{component}': {reason}")]
    Malformed { component: String, reason: String },
}

/// How paired actions synchronize: `Sync` fuses sender and receiver into a
/// joint step; `Async` routes payloads through the set of in-transit
/// messages, with emission and consumption as separate steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompositionMode {
    Sync,
    Async,
}

#[derive(Debug, Clone)]
enum GAction {
    Internal(String),
    Send(u32, Vec<Term<VarIdx>>),
    Recv(u32, Vec<VarIdx>),
}

#[derive(Debug, Clone)]
struct GTransition {
    from: LocIdx,
    to: LocIdx,
    action: GAction,
    guard: Condition<VarIdx>,
    assigns: Vec<(VarIdx, Term<VarIdx>)>,
    clears: Vec<VarIdx>,
}

#[derive(Debug, Clone)]
struct Component {
    name: String,
    locations: Vec<String>,
    initial_location: LocIdx,
    initial_valuations: Vec<Vec<(VarIdx, CondVal)>>,
    transitions: Vec<GTransition>,
}

/// A configuration of the composed system: one location per component, a
/// valuation over the union of variables, and the messages in transit
/// (empty and unused in synchronous mode). Message entries coalesce: the
/// transit pool is a set, not a multiset.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CompositionState {
    pub locs: Vec<LocIdx>,
    pub eta: Vec<CondVal>,
    pub msgs: BTreeSet<(u32, Vec<CondVal>)>,
}

/// A step of the composed system.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StepLabel {
    /// Internal action of one component.
    Internal { component: u32, action: String },
    /// Asynchronous emission of a message.
    Emit { component: u32, action: u32, payload: Vec<CondVal> },
    /// Asynchronous consumption of a message.
    Consume { component: u32, action: u32, payload: Vec<CondVal> },
    /// Synchronous joint step of sender and receiver.
    Handshake { action: u32, payload: Vec<CondVal> },
}

/// The synchronous or asynchronous product of a list of program graphs.
#[derive(Debug)]
pub struct ComposedSystem {
    pub cfg: Arc<ModelConfig>,
    pub mode: CompositionMode,
    components: Vec<Component>,
    actions: Vec<String>,
    var_names: Vec<String>,
}

struct GuardEnv<'a> {
    eta: &'a [CondVal],
    cfg: &'a ModelConfig,
}

impl CondEnv<VarIdx> for GuardEnv<'_> {
    fn lookup(&self, r: &VarIdx) -> CondVal {
        self.eta[*r as usize]
    }

    fn policy_subsumes(&self, a: PolicyId, b: PolicyId) -> Option<bool> {
        Some(self.cfg.subsumes(a, b))
    }

    fn policy_applies_to(&self, p: PolicyId, t: TypeId) -> Option<bool> {
        Some(self.cfg.applies_to(p, t))
    }
}

/// Composes program graphs over the actions paired by matching send and
/// receive edges. Every action name must have a unique sending component;
/// several components may receive it (delivery is then nondeterministic,
/// matching a shared broadcast channel).
pub fn compose(
    cfg: Arc<ModelConfig>,
    pgs: Vec<ProgramGraph>,
    mode: CompositionMode,
) -> Result<ComposedSystem, ComposeError> {
    let mut var_names: Vec<String> = Vec::new();
    let mut seen_vars: BTreeMap<String, usize> = BTreeMap::new();
    let mut action_index: BTreeMap<String, u32> = BTreeMap::new();
    let mut actions: Vec<String> = Vec::new();
    let mut action_arity: BTreeMap<u32, usize> = BTreeMap::new();
    let mut action_sender: BTreeMap<u32, String> = BTreeMap::new();

    let mut components = Vec::with_capacity(pgs.len());
    for pg in &pgs {
        if pg.initial_valuations.is_empty() {
            return Err(ComposeError::Malformed {
                component: pg.name.clone(),
                reason: "no initial valuation".into(),
            });
        }
        if pg.initial_location as usize >= pg.locations.len() {
            return Err(ComposeError::Malformed {
                component: pg.name.clone(),
                reason: "initial location out of range".into(),
            });
        }
        let base = var_names.len() as u32;
        for v in &pg.variables {
            if seen_vars.insert(v.clone(), var_names.len()).is_some() {
                return Err(ComposeError::DuplicateVariable(v.clone()));
            }
            var_names.push(v.clone());
        }
        fn shift_term(t: &Term<VarIdx>, base: u32) -> Term<VarIdx> {
            match t {
                Term::Ref(v) => Term::Ref(v + base),
                Term::Nat(n) => Term::Nat(*n),
                Term::Sym(s) => Term::Sym(*s),
                Term::Dev(d) => Term::Dev(*d),
                Term::Policy(p) => Term::Policy(*p),
                Term::Type(ty) => Term::Type(*ty),
                Term::Apply(f, args) => {
                    Term::Apply(*f, args.iter().map(|a| shift_term(a, base)).collect())
                }
            }
        }
        fn shift_cond(c: &Condition<VarIdx>, base: u32) -> Condition<VarIdx> {
            match c {
                Condition::True => Condition::True,
                Condition::False => Condition::False,
                Condition::Pred(p, a, b) => {
                    Condition::Pred(*p, shift_term(a, base), shift_term(b, base))
                }
                Condition::Not(inner) => Condition::not(shift_cond(inner, base)),
                Condition::And(a, b) => Condition::and(shift_cond(a, base), shift_cond(b, base)),
            }
        }

        let mut transitions = Vec::with_capacity(pg.transitions.len());
        for tr in &pg.transitions {
            if tr.from as usize >= pg.locations.len() || tr.to as usize >= pg.locations.len() {
                return Err(ComposeError::Malformed {
                    component: pg.name.clone(),
                    reason: "transition endpoint out of range".into(),
                });
            }
            let check_var = |v: &VarIdx| (*v as usize) < pg.variables.len();
            let action = match &tr.action {
                PgAction::Internal(name) => GAction::Internal(name.clone()),
                PgAction::Send(name, terms) => {
                    let id = *action_index.entry(name.clone()).or_insert_with(|| {
                        actions.push(name.clone());
                        (actions.len() - 1) as u32
                    });
                    if let Some(&arity) = action_arity.get(&id) {
                        if arity != terms.len() {
                            return Err(ComposeError::ArityMismatch {
                                action: name.clone(),
                                a: arity,
                                b: terms.len(),
                            });
                        }
                    } else {
                        action_arity.insert(id, terms.len());
                    }
                    if let Some(prev) = action_sender.get(&id) {
                        if prev != &pg.name {
                            return Err(ComposeError::AmbiguousHandshake {
                                action: name.clone(),
                                first: prev.clone(),
                                second: pg.name.clone(),
                            });
                        }
                    } else {
                        action_sender.insert(id, pg.name.clone());
                    }
                    GAction::Send(id, terms.iter().map(|t| shift_term(t, base)).collect())
                }
                PgAction::Recv(name, params) => {
                    let id = *action_index.entry(name.clone()).or_insert_with(|| {
                        actions.push(name.clone());
                        (actions.len() - 1) as u32
                    });
                    if let Some(&arity) = action_arity.get(&id) {
                        if arity != params.len() {
                            return Err(ComposeError::ArityMismatch {
                                action: name.clone(),
                                a: arity,
                                b: params.len(),
                            });
                        }
                    } else {
                        action_arity.insert(id, params.len());
                    }
                    if !params.iter().all(check_var) {
                        return Err(ComposeError::Malformed {
                            component: pg.name.clone(),
                            reason: format!("receive parameter out of range for '{name}'"),
                        });
                    }
                    GAction::Recv(id, params.iter().map(|v| v + base).collect())
                }
            };
            if !tr.assigns.iter().all(|(v, _)| check_var(v)) || !tr.clears.iter().all(check_var) {
                return Err(ComposeError::Malformed {
                    component: pg.name.clone(),
                    reason: "assignment target out of range".into(),
                });
            }
            transitions.push(GTransition {
                from: tr.from,
                to: tr.to,
                action,
                guard: shift_cond(&tr.guard, base),
                assigns: tr
                    .assigns
                    .iter()
                    .map(|(v, t)| (v + base, shift_term(t, base)))
                    .collect(),
                clears: tr.clears.iter().map(|v| v + base).collect(),
            });
        }
        components.push(Component {
            name: pg.name.clone(),
            locations: pg.locations.clone(),
            initial_location: pg.initial_location,
            initial_valuations: pg
                .initial_valuations
                .iter()
                .map(|row| {
                    row.iter()
                        .enumerate()
                        .map(|(i, v)| (i as u32 + base, *v))
                        .collect()
                })
                .collect(),
            transitions,
        });
    }

    Ok(ComposedSystem { cfg, mode, components, actions, var_names })
}

impl ComposedSystem {
    pub fn component_names(&self) -> Vec<&str> {
        self.components.iter().map(|c| c.name.as_str()).collect()
    }

    /// Global index of `component.variable`, for refinement mappings.
    pub fn var_index(&self, name: &str) -> Option<u32> {
        self.var_names.iter().position(|v| v == name).map(|i| i as u32)
    }

    /// Identifier of a handshake action, for refinement mappings that track
    /// in-flight messages.
    pub fn action_id(&self, name: &str) -> Option<u32> {
        self.actions.iter().position(|a| a == name).map(|i| i as u32)
    }

    pub fn action_name(&self, id: u32) -> &str {
        &self.actions[id as usize]
    }

    fn guard_ok(&self, guard: &Condition<VarIdx>, eta: &[CondVal]) -> bool {
        let env = GuardEnv { eta, cfg: &self.cfg };
        matches!(
            eval_condition(&env, &self.cfg.interp, guard),
            Ok(crate::policy::Truth::True)
        )
    }

    fn eval_payload(&self, terms: &[Term<VarIdx>], eta: &[CondVal]) -> Option<Vec<CondVal>> {
        let env = GuardEnv { eta, cfg: &self.cfg };
        terms
            .iter()
            .map(|t| eval_term(&env, &self.cfg.interp, t).ok())
            .collect()
    }

    fn apply_effects(
        &self,
        eta: &mut Vec<CondVal>,
        assigns: &[(VarIdx, Term<VarIdx>)],
        clears: &[VarIdx],
    ) -> bool {
        let mut staged = Vec::with_capacity(assigns.len());
        {
            let env = GuardEnv { eta, cfg: &self.cfg };
            for (v, t) in assigns {
                match eval_term(&env, &self.cfg.interp, t) {
                    Ok(val) => staged.push((*v, val)),
                    Err(_) => return false,
                }
            }
        }
        for (v, val) in staged {
            eta[v as usize] = val;
        }
        for v in clears {
            eta[*v as usize] = CondVal::Undefined;
        }
        true
    }

    pub fn display_value(&self, v: &CondVal) -> String {
        match v {
            CondVal::Undefined => "_".to_string(),
            CondVal::Nat(n) => n.to_string(),
            CondVal::Sym(s) => self.cfg.ontology.constant_name(*s).to_string(),
            CondVal::Dev(d) => self.cfg.ontology.device(*d).name.clone(),
            CondVal::Policy(p) => self.cfg.pool.name(*p).to_string(),
            CondVal::Type(t) => self.cfg.ontology.datatypes.name(t.0).to_string(),
        }
    }

    fn payload_text(&self, payload: &[CondVal]) -> String {
        payload.iter().map(|v| self.display_value(v)).collect::<Vec<_>>().join(",")
    }
}

impl TransitionSystem for ComposedSystem {
    type State = CompositionState;
    type Label = StepLabel;

    fn initial_states(&self) -> Vec<CompositionState> {
        let locs: Vec<LocIdx> = self.components.iter().map(|c| c.initial_location).collect();
        let mut states = vec![CompositionState {
            locs,
            eta: vec![CondVal::Undefined; self.var_names.len()],
            msgs: BTreeSet::new(),
        }];
        for comp in &self.components {
            let mut next = Vec::with_capacity(states.len() * comp.initial_valuations.len());
            for st in &states {
                for row in &comp.initial_valuations {
                    let mut eta = st.eta.clone();
                    for (v, val) in row {
                        eta[*v as usize] = *val;
                    }
                    next.push(CompositionState { locs: st.locs.clone(), eta, msgs: BTreeSet::new() });
                }
            }
            states = next;
        }
        states
    }

    fn successors(&self, state: &CompositionState) -> Vec<(StepLabel, CompositionState)> {
        let mut out = Vec::new();
        for (ci, comp) in self.components.iter().enumerate() {
            for tr in comp.transitions.iter().filter(|t| t.from == state.locs[ci]) {
                match &tr.action {
                    GAction::Internal(name) => {
                        if !self.guard_ok(&tr.guard, &state.eta) {
                            continue;
                        }
                        let mut eta = state.eta.clone();
                        if !self.apply_effects(&mut eta, &tr.assigns, &tr.clears) {
                            continue;
                        }
                        let mut locs = state.locs.clone();
                        locs[ci] = tr.to;
                        out.push((
                            StepLabel::Internal { component: ci as u32, action: name.clone() },
                            CompositionState { locs, eta, msgs: state.msgs.clone() },
                        ));
                    }
                    GAction::Send(action, terms) => {
                        if self.mode != CompositionMode::Async {
                            continue;
                        }
                        if !self.guard_ok(&tr.guard, &state.eta) {
                            continue;
                        }
                        let Some(payload) = self.eval_payload(terms, &state.eta) else { continue };
                        let mut eta = state.eta.clone();
                        if !self.apply_effects(&mut eta, &tr.assigns, &tr.clears) {
                            continue;
                        }
                        let mut msgs = state.msgs.clone();
                        msgs.insert((*action, payload.clone()));
                        let mut locs = state.locs.clone();
                        locs[ci] = tr.to;
                        out.push((
                            StepLabel::Emit { component: ci as u32, action: *action, payload },
                            CompositionState { locs, eta, msgs },
                        ));
                    }
                    GAction::Recv(action, params) => {
                        if self.mode != CompositionMode::Async {
                            continue;
                        }
                        for (msg_action, payload) in &state.msgs {
                            if msg_action != action || payload.len() != params.len() {
                                continue;
                            }
                            let mut eta = state.eta.clone();
                            for (v, val) in params.iter().zip(payload) {
                                eta[*v as usize] = *val;
                            }
                            if !self.guard_ok(&tr.guard, &eta) {
                                continue;
                            }
                            if !self.apply_effects(&mut eta, &tr.assigns, &tr.clears) {
                                continue;
                            }
                            let mut msgs = state.msgs.clone();
                            msgs.remove(&(*msg_action, payload.clone()));
                            let mut locs = state.locs.clone();
                            locs[ci] = tr.to;
                            out.push((
                                StepLabel::Consume {
                                    component: ci as u32,
                                    action: *action,
                                    payload: payload.clone(),
                                },
                                CompositionState { locs, eta, msgs },
                            ));
                        }
                    }
                }
            }
        }
        if self.mode == CompositionMode::Sync {
            for (ci, sender) in self.components.iter().enumerate() {
                for str_ in sender.transitions.iter().filter(|t| t.from == state.locs[ci]) {
                    let GAction::Send(action, terms) = &str_.action else { continue };
                    if !self.guard_ok(&str_.guard, &state.eta) {
                        continue;
                    }
                    let Some(payload) = self.eval_payload(terms, &state.eta) else { continue };
                    for (cj, receiver) in self.components.iter().enumerate() {
                        if cj == ci {
                            continue;
                        }
                        for rtr in receiver.transitions.iter().filter(|t| t.from == state.locs[cj]) {
                            let GAction::Recv(raction, params) = &rtr.action else { continue };
                            if raction != action {
                                continue;
                            }
                            let mut eta = state.eta.clone();
                            for (v, val) in params.iter().zip(&payload) {
                                eta[*v as usize] = *val;
                            }
                            if !self.guard_ok(&rtr.guard, &eta) {
                                continue;
                            }
                            if !self.apply_effects(&mut eta, &str_.assigns, &str_.clears) {
                                continue;
                            }
                            if !self.apply_effects(&mut eta, &rtr.assigns, &rtr.clears) {
                                continue;
                            }
                            let mut locs = state.locs.clone();
                            locs[ci] = str_.to;
                            locs[cj] = rtr.to;
                            out.push((
                                StepLabel::Handshake { action: *action, payload: payload.clone() },
                                CompositionState { locs, eta, msgs: state.msgs.clone() },
                            ));
                        }
                    }
                }
            }
        }
        out
    }

    fn display_state(&self, state: &CompositionState) -> String {
        let locs: Vec<String> = self
            .components
            .iter()
            .zip(&state.locs)
            .map(|(c, l)| format!("{}@{}", c.name, c.locations[*l as usize]))
            .collect();
        let vars: Vec<String> = self
            .var_names
            .iter()
            .zip(&state.eta)
            .filter(|(_, v)| v.is_defined())
            .map(|(n, v)| format!("{}={}", n, self.display_value(v)))
            .collect();
        let msgs: Vec<String> = state
            .msgs
            .iter()
            .map(|(a, payload)| format!("{}({})", self.actions[*a as usize], self.payload_text(payload)))
            .collect();
        format!("[{}] {} msgs{{{}}}", locs.join(" "), vars.join(" "), msgs.join(", "))
    }

    fn display_label(&self, label: &StepLabel) -> String {
        match label {
            StepLabel::Internal { component, action } => {
                format!("{}: {}", self.components[*component as usize].name, action)
            }
            StepLabel::Emit { component, action, payload } => format!(
                "{}: !{}({})",
                self.components[*component as usize].name,
                self.actions[*action as usize],
                self.payload_text(payload)
            ),
            StepLabel::Consume { component, action, payload } => format!(
                "{}: ?{}({})",
                self.components[*component as usize].name,
                self.actions[*action as usize],
                self.payload_text(payload)
            ),
            StepLabel::Handshake { action, payload } => format!(
                "{}({})",
                self.actions[*action as usize],
                self.payload_text(payload)
            ),
        }
    }

    fn state_value(&self, state: &CompositionState) -> serde_json::Value {
        let mut locs = serde_json::Map::new();
        for (c, l) in self.components.iter().zip(&state.locs) {
            locs.insert(c.name.clone(), serde_json::Value::String(c.locations[*l as usize].clone()));
        }
        let mut vars = serde_json::Map::new();
        for (n, v) in self.var_names.iter().zip(&state.eta) {
            if v.is_defined() {
                vars.insert(n.clone(), serde_json::Value::String(self.display_value(v)));
            }
        }
        let msgs: Vec<serde_json::Value> = state
            .msgs
            .iter()
            .map(|(a, payload)| {
                serde_json::json!({
                    "action": self.actions[*a as usize],
                    "payload": payload.iter().map(|v| self.display_value(v)).collect::<Vec<_>>(),
                })
            })
            .collect();
        serde_json::json!({ "locations": locs, "vars": vars, "msgs": msgs })
    }
}
