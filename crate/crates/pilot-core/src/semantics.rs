//! The abstract operational semantics of policy and data exchange: system
//! states, the request/send/transfer events, and their firing rules,
//! packaged as an explorable transition system.
//!
//! States are values and every rule application is a pure function, so the
//! checker can enumerate successors without coordination.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::checker::TransitionSystem;
use crate::ontology::{DeviceId, ItemId, Ontology, Role, TypeId, Value};
use crate::policy::{
    active_policy, active_transfer, subsumes_policy, AbstractOrder, CommEvent, Interpretation,
    PilotPolicy, PolicyId, PolicyPool,
};

/// A system state: per-device item values, per-device policy bases, and
/// per-device received-data sets, plus the logical clock.
///
/// Canonical form: absent value entries mean undefined, and base/received
/// maps never hold empty sets, so structural equality is semantic equality.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SystemState {
    values: BTreeMap<(DeviceId, ItemId), Value>,
    bases: BTreeMap<DeviceId, BTreeSet<(DeviceId, PolicyId)>>,
    received: BTreeMap<DeviceId, BTreeSet<(DeviceId, ItemId, PolicyId)>>,
    clock: u64,
}

impl SystemState {
    pub fn empty() -> Self {
        SystemState {
            values: BTreeMap::new(),
            bases: BTreeMap::new(),
            received: BTreeMap::new(),
            clock: 0,
        }
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn with_clock(mut self, clock: u64) -> Self {
        self.clock = clock;
        self
    }

    /// The local value of `item` at `device`; undefined when absent.
    pub fn value(&self, device: DeviceId, item: ItemId) -> Value {
        self.values.get(&(device, item)).copied().unwrap_or(Value::Undefined)
    }

    pub fn with_value(mut self, device: DeviceId, item: ItemId, value: Value) -> Self {
        match value {
            Value::Undefined => {
                self.values.remove(&(device, item));
            }
            v => {
                self.values.insert((device, item), v);
            }
        }
        self
    }

    /// The policy base of `device`: pairs of (originating device, policy).
    pub fn base(&self, device: DeviceId) -> impl Iterator<Item = (DeviceId, PolicyId)> + '_ {
        self.bases.get(&device).into_iter().flatten().copied()
    }

    pub fn base_contains(&self, device: DeviceId, entry: (DeviceId, PolicyId)) -> bool {
        self.bases.get(&device).is_some_and(|s| s.contains(&entry))
    }

    pub fn with_base_entry(mut self, device: DeviceId, from: DeviceId, policy: PolicyId) -> Self {
        self.bases.entry(device).or_default().insert((from, policy));
        self
    }

    /// The received-data set of `device`: (source, item, governing policy).
    pub fn received(&self, device: DeviceId) -> impl Iterator<Item = (DeviceId, ItemId, PolicyId)> + '_ {
        self.received.get(&device).into_iter().flatten().copied()
    }

    pub fn with_received_entry(
        mut self,
        device: DeviceId,
        source: DeviceId,
        item: ItemId,
        policy: PolicyId,
    ) -> Self {
        self.received.entry(device).or_default().insert((source, item, policy));
        self
    }

    pub fn bases(&self) -> &BTreeMap<DeviceId, BTreeSet<(DeviceId, PolicyId)>> {
        &self.bases
    }

    pub fn received_map(&self) -> &BTreeMap<DeviceId, BTreeSet<(DeviceId, ItemId, PolicyId)>> {
        &self.received
    }

    pub fn values_map(&self) -> &BTreeMap<(DeviceId, ItemId), Value> {
        &self.values
    }

    fn replace_base(&mut self, device: DeviceId, set: BTreeSet<(DeviceId, PolicyId)>) {
        if set.is_empty() {
            self.bases.remove(&device);
        } else {
            self.bases.insert(device, set);
        }
    }
}

/// The three communication events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Event {
    /// A device communicates a policy for a datatype it wants to collect.
    Request { sndr: DeviceId, rcv: DeviceId, datatype: TypeId, policy: PolicyId },
    /// Collection: the receiver records the item under its own policy.
    Send { sndr: DeviceId, rcv: DeviceId, item: ItemId },
    /// Onward sharing of previously collected data.
    Transfer { sndr: DeviceId, rcv: DeviceId, item: ItemId },
}

/// A rule did not fire: its premises are unsatisfied in the given state.
/// Distinguishes "not enabled" from malformed input.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("event not enabled: {reason}")]
pub struct NotEnabled {
    pub reason: &'static str,
}

impl NotEnabled {
    fn new(reason: &'static str) -> Self {
        NotEnabled { reason }
    }
}

/// Whether structural subsumption or an explicitly declared preorder
/// decides policy comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyMode {
    Structural,
    Abstract,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config: {0}")]
    Invalid(String),
}

/// Everything a run needs: the ontology, the interpretation, the policy
/// pool, per-device initial policy pools, per-item initial value pools, and
/// the mode flags. Comparison matrices are precomputed at construction.
pub struct ModelConfig {
    pub ontology: Arc<Ontology>,
    pub interp: Arc<Interpretation>,
    pub pool: PolicyPool,
    pub initial_policies: BTreeMap<DeviceId, Vec<PolicyId>>,
    pub initial_values: BTreeMap<ItemId, Vec<Value>>,
    pub always_active: bool,
    pub policy_mode: PolicyMode,
    abstract_order: Option<AbstractOrder>,
    /// `subs[a][b]` iff pool policy `a` subsumes pool policy `b`, in the
    /// active mode.
    subs: Vec<Vec<bool>>,
    /// Per holder policy, per transfer rule index, which pool policies
    /// subsume the induced transfer policy (structural mode).
    transfer_subs: Vec<Vec<Vec<bool>>>,
    clock_ceiling: u64,
}

impl ModelConfig {
    pub fn new(
        ontology: Arc<Ontology>,
        interp: Arc<Interpretation>,
        pool: PolicyPool,
        initial_policies: BTreeMap<DeviceId, Vec<PolicyId>>,
        initial_values: BTreeMap<ItemId, Vec<Value>>,
        always_active: bool,
        policy_mode: PolicyMode,
        abstract_order: Option<AbstractOrder>,
    ) -> Result<Self, ConfigError> {
        let n = pool.len();
        if policy_mode == PolicyMode::Abstract {
            if !always_active {
                return Err(ConfigError::Invalid(
                    "abstract policy mode requires always_active".into(),
                ));
            }
            let order = abstract_order
                .as_ref()
                .ok_or_else(|| ConfigError::Invalid("abstract policy mode needs a policy_order section".into()))?;
            if order.leq.len() != n || order.transfer_targets.len() != n {
                return Err(ConfigError::Invalid(
                    "policy_order tables must cover the whole policy pool".into(),
                ));
            }
        }

        let subs = match policy_mode {
            PolicyMode::Structural => {
                let mut m = vec![vec![false; n]; n];
                for a in 0..n {
                    for b in 0..n {
                        m[a][b] = subsumes_policy(
                            &ontology,
                            pool.get(PolicyId(a as u32)),
                            pool.get(PolicyId(b as u32)),
                        );
                    }
                }
                m
            }
            PolicyMode::Abstract => abstract_order.as_ref().unwrap().leq.clone(),
        };

        let mut transfer_subs = Vec::with_capacity(n);
        for h in 0..n {
            let holder = pool.get(PolicyId(h as u32));
            let mut per_tr = Vec::new();
            match policy_mode {
                PolicyMode::Structural => {
                    for tr in holder.transfers() {
                        let view = holder.transfer_view(tr).expect("rule taken from the policy");
                        let mut row = vec![false; n];
                        for (r, slot) in row.iter_mut().enumerate() {
                            *slot = subsumes_policy(&ontology, pool.get(PolicyId(r as u32)), &view);
                        }
                        per_tr.push(row);
                    }
                }
                PolicyMode::Abstract => {
                    let order = abstract_order.as_ref().unwrap();
                    for target in &order.transfer_targets[h] {
                        let mut row = vec![false; n];
                        for (r, slot) in row.iter_mut().enumerate() {
                            *slot = order.leq[r][target.0 as usize];
                        }
                        per_tr.push(row);
                    }
                }
            }
            transfer_subs.push(per_tr);
        }

        // Once every retention deadline has passed, larger clocks are
        // indistinguishable; saturating there keeps the state space finite.
        let clock_ceiling = if always_active {
            0
        } else {
            pool.ids()
                .map(|id| match pool.get(id) {
                    PilotPolicy::Bottom => 0,
                    PilotPolicy::Policy { dcr, transfers, .. } => transfers
                        .iter()
                        .map(|t| t.dur.retention)
                        .chain([dcr.dur.retention])
                        .max()
                        .unwrap_or(0),
                })
                .max()
                .unwrap_or(0)
        };

        for (d, pol) in &initial_policies {
            if d.0 as usize >= ontology.device_count() {
                return Err(ConfigError::Invalid("initial policy for undeclared device".into()));
            }
            if pol.iter().any(|p| p.0 as usize >= n) {
                return Err(ConfigError::Invalid("initial policy outside the pool".into()));
            }
        }
        for i in initial_values.keys() {
            if i.0 as usize >= ontology.item_count() {
                return Err(ConfigError::Invalid("initial value for undeclared item".into()));
            }
        }

        Ok(ModelConfig {
            ontology,
            interp,
            pool,
            initial_policies,
            initial_values,
            always_active,
            policy_mode,
            abstract_order,
            subs,
            transfer_subs,
            clock_ceiling,
        })
    }

    pub fn abstract_order(&self) -> Option<&AbstractOrder> {
        self.abstract_order.as_ref()
    }

    /// Policy subsumption in the configured mode.
    pub fn subsumes(&self, a: PolicyId, b: PolicyId) -> bool {
        self.subs[a.0 as usize][b.0 as usize]
    }

    pub fn comparable(&self, a: PolicyId, b: PolicyId) -> bool {
        self.subsumes(a, b) || self.subsumes(b, a)
    }

    /// Whether `p` applies to items of datatype `t`.
    pub fn applies_to(&self, p: PolicyId, t: TypeId) -> bool {
        match self.pool.get(p).datatype() {
            None => false,
            Some(pt) => self.ontology.type_leq(t, pt),
        }
    }

    pub fn transfer_rule_count(&self, p: PolicyId) -> usize {
        self.transfer_subs[p.0 as usize].len()
    }

    /// Whether `candidate` subsumes the policy induced by transfer rule
    /// `tr_idx` of `holder`.
    pub fn subsumes_transfer_view(&self, candidate: PolicyId, holder: PolicyId, tr_idx: usize) -> bool {
        self.transfer_subs[holder.0 as usize][tr_idx][candidate.0 as usize]
    }

    pub fn clock_ceiling(&self) -> u64 {
        self.clock_ceiling
    }

    fn bump_clock(&self, clock: u64) -> u64 {
        (clock + 1).min(self.clock_ceiling)
    }

    /// All initial states: every combination of one policy per device pool
    /// and one value per item pool, in canonical order.
    pub fn initial_states(&self) -> Vec<SystemState> {
        let mut states = vec![SystemState::empty()];
        for (device, pool) in &self.initial_policies {
            if pool.is_empty() {
                continue;
            }
            let mut next = Vec::with_capacity(states.len() * pool.len());
            for st in &states {
                for p in pool {
                    next.push(st.clone().with_base_entry(*device, *device, *p));
                }
            }
            states = next;
        }
        for (item, pool) in &self.initial_values {
            if pool.is_empty() {
                continue;
            }
            let owner = self.ontology.owner_of(*item);
            let mut next = Vec::with_capacity(states.len() * pool.len());
            for st in &states {
                for v in pool {
                    next.push(st.clone().with_value(owner, *item, *v));
                }
            }
            states = next;
        }
        states
    }

    fn item_lookup<'a>(&self, st: &'a SystemState, device: DeviceId) -> impl Fn(ItemId) -> Value + 'a {
        move |item| st.value(device, item)
    }

    /// Activity of a pool policy for the given communication, honoring
    /// always-active mode (membership elsewhere plus type compatibility).
    /// Evaluation faults block activity rather than failing the rule.
    pub fn policy_active(&self, st: &SystemState, p: PolicyId, ev: CommEvent) -> bool {
        let item_type = self.ontology.type_of(ev.item);
        if self.always_active {
            return self.applies_to(p, item_type);
        }
        active_policy(
            &self.ontology,
            &self.interp,
            self.item_lookup(st, ev.sender),
            self.pool.get(p),
            ev,
            st.clock(),
        )
        .unwrap_or(false)
    }

    fn transfer_rule_active(&self, st: &SystemState, holder: PolicyId, tr_idx: usize, ev: CommEvent) -> bool {
        if self.always_active {
            return true;
        }
        let policy = self.pool.get(holder);
        let tr = &policy.transfers()[tr_idx];
        active_transfer(
            &self.ontology,
            &self.interp,
            self.item_lookup(st, ev.sender),
            tr,
            policy,
            ev,
            st.clock(),
        )
        .unwrap_or(false)
    }
}

impl std::fmt::Debug for ModelConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelConfig")
            .field("policies", &self.pool.len())
            .field("always_active", &self.always_active)
            .field("policy_mode", &self.policy_mode)
            .finish()
    }
}

/// Request rules: adds the sender's policy to the receiver's base, or
/// replaces every comparable policy previously received from that sender.
pub fn apply_request(
    cfg: &ModelConfig,
    st: &SystemState,
    sndr: DeviceId,
    rcv: DeviceId,
    datatype: TypeId,
    policy: PolicyId,
) -> Result<SystemState, NotEnabled> {
    if !st.base_contains(sndr, (sndr, policy)) {
        return Err(NotEnabled::new("policy is not in the sender's own base"));
    }
    if cfg.pool.get(policy).datatype() != Some(datatype) {
        return Err(NotEnabled::new("policy does not match the requested datatype"));
    }
    let mut base: BTreeSet<_> = st.base(rcv).collect();
    let comparable: Vec<_> = base
        .iter()
        .copied()
        .filter(|(from, q)| *from == sndr && cfg.comparable(policy, *q))
        .collect();
    if comparable.is_empty() {
        base.insert((sndr, policy));
    } else {
        for entry in comparable {
            base.remove(&entry);
        }
        base.insert((sndr, policy));
    }
    let mut next = st.clone();
    next.replace_base(rcv, base);
    next.clock = cfg.bump_clock(st.clock);
    Ok(next)
}

/// Send rule: collection of an item. Fires when the sender holds an active
/// policy of the receiver subsumed by one of the sender's own active
/// policies and the value is defined. The receiver records the item under
/// the receiver's policy. With several eligible receiver policies the
/// lowest-numbered one is recorded, which keeps the successor a function of
/// the event.
pub fn apply_send(
    cfg: &ModelConfig,
    st: &SystemState,
    sndr: DeviceId,
    rcv: DeviceId,
    item: ItemId,
) -> Result<SystemState, NotEnabled> {
    if sndr == rcv {
        return Err(NotEnabled::new("sender and receiver coincide"));
    }
    if !st.value(sndr, item).is_defined() {
        return Err(NotEnabled::new("item undefined at the sender"));
    }
    let ev = CommEvent { sender: sndr, receiver: rcv, item };
    let rcv_policies: Vec<PolicyId> =
        st.base(sndr).filter(|(from, _)| *from == rcv).map(|(_, p)| p).collect();
    let own_policies: Vec<PolicyId> =
        st.base(sndr).filter(|(from, _)| *from == sndr).map(|(_, p)| p).collect();
    for p_rcv in &rcv_policies {
        if !cfg.policy_active(st, *p_rcv, ev) {
            continue;
        }
        let witness = own_policies
            .iter()
            .any(|p_own| cfg.policy_active(st, *p_own, ev) && cfg.subsumes(*p_rcv, *p_own));
        if witness {
            let mut next = st
                .clone()
                .with_received_entry(rcv, sndr, item, *p_rcv)
                .with_value(rcv, item, st.value(sndr, item));
            next.clock = cfg.bump_clock(st.clock);
            return Ok(next);
        }
    }
    Err(NotEnabled::new("no active receiver policy subsumed by an active sender policy"))
}

/// Transfer rule: onward sharing of held data. Fires when the sender holds
/// the item under some policy with an active transfer rule, and holds an
/// active policy of the receiver that subsumes the induced transfer policy.
/// The receiver's policy is recorded; the lowest-numbered eligible one wins.
pub fn apply_transfer(
    cfg: &ModelConfig,
    st: &SystemState,
    sndr: DeviceId,
    rcv: DeviceId,
    item: ItemId,
) -> Result<SystemState, NotEnabled> {
    if sndr == rcv {
        return Err(NotEnabled::new("sender and receiver coincide"));
    }
    if !st.value(sndr, item).is_defined() {
        return Err(NotEnabled::new("item undefined at the sender"));
    }
    let ev = CommEvent { sender: sndr, receiver: rcv, item };
    let holdings: Vec<PolicyId> = st
        .received(sndr)
        .filter(|(_, i, _)| *i == item)
        .map(|(_, _, p)| p)
        .collect();
    if holdings.is_empty() {
        return Err(NotEnabled::new("sender has not received the item"));
    }
    let rcv_policies: Vec<PolicyId> =
        st.base(sndr).filter(|(from, _)| *from == rcv).map(|(_, p)| p).collect();
    for p_rcv in &rcv_policies {
        if !cfg.policy_active(st, *p_rcv, ev) {
            continue;
        }
        let witness = holdings.iter().any(|holder| {
            (0..cfg.transfer_rule_count(*holder)).any(|tr_idx| {
                cfg.transfer_rule_active(st, *holder, tr_idx, ev)
                    && cfg.subsumes_transfer_view(*p_rcv, *holder, tr_idx)
            })
        });
        if witness {
            let mut next = st
                .clone()
                .with_received_entry(rcv, sndr, item, *p_rcv)
                .with_value(rcv, item, st.value(sndr, item));
            next.clock = cfg.bump_clock(st.clock);
            return Ok(next);
        }
    }
    Err(NotEnabled::new("no active receiver policy subsumes an active transfer rule"))
}

/// Every event instance whose rule fires in `st`, paired with its successor,
/// in canonical event order. Deterministic for equal states.
pub fn enabled_events(cfg: &ModelConfig, st: &SystemState) -> Vec<(Event, SystemState)> {
    let mut out = Vec::new();
    let devices: Vec<DeviceId> = cfg.ontology.devices().map(|(d, _)| d).collect();
    for &sndr in &devices {
        let own: Vec<PolicyId> =
            st.base(sndr).filter(|(from, _)| *from == sndr).map(|(_, p)| p).collect();
        for p in own {
            let Some(datatype) = cfg.pool.get(p).datatype() else { continue };
            for &rcv in &devices {
                if rcv == sndr {
                    continue;
                }
                if let Ok(next) = apply_request(cfg, st, sndr, rcv, datatype, p) {
                    out.push((Event::Request { sndr, rcv, datatype, policy: p }, next));
                }
            }
        }
    }
    let items: Vec<ItemId> = cfg.ontology.items().map(|(i, _)| i).collect();
    for &sndr in &devices {
        for &rcv in &devices {
            if rcv == sndr {
                continue;
            }
            for &item in &items {
                if let Ok(next) = apply_send(cfg, st, sndr, rcv, item) {
                    out.push((Event::Send { sndr, rcv, item }, next));
                }
                if let Ok(next) = apply_transfer(cfg, st, sndr, rcv, item) {
                    out.push((Event::Transfer { sndr, rcv, item }, next));
                }
            }
        }
    }
    out.sort_by(|(a, _), (b, _)| a.cmp(b));
    out
}

/// The abstract semantics as a transition system over [`SystemState`].
#[derive(Clone)]
pub struct AbstractTs {
    pub cfg: Arc<ModelConfig>,
}

/// Packages a configuration as the checker-facing transition system.
pub fn abstract_ts(cfg: Arc<ModelConfig>) -> AbstractTs {
    AbstractTs { cfg }
}

impl AbstractTs {
    pub fn event_text(&self, ev: &Event) -> String {
        let ont = &self.cfg.ontology;
        match ev {
            Event::Request { sndr, rcv, datatype, policy } => format!(
                "request({} -> {}, {}, {})",
                ont.device(*sndr).name,
                ont.device(*rcv).name,
                ont.datatypes.name(datatype.0),
                self.cfg.pool.name(*policy),
            ),
            Event::Send { sndr, rcv, item } => format!(
                "send({} -> {}, {})",
                ont.device(*sndr).name,
                ont.device(*rcv).name,
                ont.item(*item).name,
            ),
            Event::Transfer { sndr, rcv, item } => format!(
                "transfer({} -> {}, {})",
                ont.device(*sndr).name,
                ont.device(*rcv).name,
                ont.item(*item).name,
            ),
        }
    }

    pub fn state_text(&self, st: &SystemState) -> String {
        let ont = &self.cfg.ontology;
        let mut parts = Vec::new();
        let values: Vec<String> = st
            .values_map()
            .iter()
            .map(|((d, i), v)| {
                format!("{}.{}={}", ont.device(*d).name, ont.item(*i).name, ont.value_text(*v))
            })
            .collect();
        parts.push(format!("values{{{}}}", values.join(", ")));
        let bases: Vec<String> = st
            .bases()
            .iter()
            .map(|(d, set)| {
                let entries: Vec<String> = set
                    .iter()
                    .map(|(from, p)| {
                        format!("({},{})", ont.device(*from).name, self.cfg.pool.name(*p))
                    })
                    .collect();
                format!("{}:{{{}}}", ont.device(*d).name, entries.join(","))
            })
            .collect();
        parts.push(format!("base{{{}}}", bases.join(" ")));
        let received: Vec<String> = st
            .received_map()
            .iter()
            .map(|(d, set)| {
                let entries: Vec<String> = set
                    .iter()
                    .map(|(from, i, p)| {
                        format!(
                            "({},{},{})",
                            ont.device(*from).name,
                            ont.item(*i).name,
                            self.cfg.pool.name(*p)
                        )
                    })
                    .collect();
                format!("{}:{{{}}}", ont.device(*d).name, entries.join(","))
            })
            .collect();
        parts.push(format!("received{{{}}}", received.join(" ")));
        parts.push(format!("clock={}", st.clock()));
        parts.join(" ")
    }

    pub fn state_json(&self, st: &SystemState) -> serde_json::Value {
        let ont = &self.cfg.ontology;
        let mut values = serde_json::Map::new();
        for ((d, i), v) in st.values_map() {
            values
                .entry(ont.device(*d).name.clone())
                .or_insert_with(|| serde_json::Value::Object(Default::default()))
                .as_object_mut()
                .unwrap()
                .insert(ont.item(*i).name.clone(), serde_json::Value::String(ont.value_text(*v)));
        }
        let mut bases = serde_json::Map::new();
        for (d, set) in st.bases() {
            let entries: Vec<serde_json::Value> = set
                .iter()
                .map(|(from, p)| {
                    serde_json::json!([ont.device(*from).name, self.cfg.pool.name(*p)])
                })
                .collect();
            bases.insert(ont.device(*d).name.clone(), serde_json::Value::Array(entries));
        }
        let mut received = serde_json::Map::new();
        for (d, set) in st.received_map() {
            let entries: Vec<serde_json::Value> = set
                .iter()
                .map(|(from, i, p)| {
                    serde_json::json!([
                        ont.device(*from).name,
                        ont.item(*i).name,
                        self.cfg.pool.name(*p)
                    ])
                })
                .collect();
            received.insert(ont.device(*d).name.clone(), serde_json::Value::Array(entries));
        }
        serde_json::json!({
            "values": values,
            "base": bases,
            "received": received,
            "clock": st.clock(),
        })
    }
}

impl TransitionSystem for AbstractTs {
    type State = SystemState;
    type Label = Event;

    fn initial_states(&self) -> Vec<SystemState> {
        self.cfg.initial_states()
    }

    fn successors(&self, state: &SystemState) -> Vec<(Event, SystemState)> {
        enabled_events(&self.cfg, state)
    }

    fn display_state(&self, state: &SystemState) -> String {
        self.state_text(state)
    }

    fn display_label(&self, label: &Event) -> String {
        self.event_text(label)
    }

    fn state_value(&self, state: &SystemState) -> serde_json::Value {
        self.state_json(state)
    }
}

/// Devices of a given role, in id order.
pub fn devices_with_role(ontology: &Ontology, role: Role) -> Vec<DeviceId> {
    ontology
        .devices()
        .filter(|(_, d)| d.role == role)
        .map(|(id, _)| id)
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::ontology::{EntityId, OntologyDecl, PurposeId, SymId};
    use crate::policy::{Condition, DataCommunicationRule, DataUsageRule};

    /// One subject, two controllers, one item, three policies with
    /// p1 below p2 as the only nontrivial relation.
    pub(crate) fn small_cfg(always_active: bool) -> Arc<ModelConfig> {
        let ont = Arc::new(
            Ontology::new(OntologyDecl {
                entities: vec!["alice".into(), "acme".into(), "beta".into(), "any_controller".into()],
                entity_edges: vec![
                    ("acme".into(), "any_controller".into()),
                    ("beta".into(), "any_controller".into()),
                ],
                datatypes: vec!["cookie".into()],
                datatype_edges: vec![],
                purposes: vec!["analytics".into(), "marketing".into()],
                purpose_edges: vec![],
                devices: vec![
                    ("phone".into(), "alice".into(), Role::Subject),
                    ("acme_srv".into(), "acme".into(), Role::Controller),
                    ("beta_srv".into(), "beta".into(), Role::Controller),
                ],
                items: vec![("cookie_a".into(), "cookie".into(), "phone".into())],
                constants: vec!["c0".into()],
            })
            .unwrap(),
        );
        let cookie = TypeId(ont.datatypes.id("cookie").unwrap());
        let any = EntityId(ont.entities.id("any_controller").unwrap());
        let analytics = PurposeId(ont.purposes.id("analytics").unwrap());
        let marketing = PurposeId(ont.purposes.id("marketing").unwrap());
        let mk = |purposes: Vec<PurposeId>, retention: u64| {
            let dcr = DataCommunicationRule {
                condition: Condition::True,
                entity: any,
                dur: DataUsageRule { purposes: purposes.into_iter().collect(), retention },
            };
            PilotPolicy::new(cookie, dcr.clone(), vec![dcr])
        };
        let mut pool = PolicyPool::new(ont.clone());
        let p1 = pool.insert("p1", mk(vec![analytics], 5)).unwrap();
        let p2 = pool.insert("p2", mk(vec![analytics, marketing], 9)).unwrap();
        let p3 = pool.insert("p3", mk(vec![marketing], 99)).unwrap();
        let phone = ont.device_id("phone").unwrap();
        let acme = ont.device_id("acme_srv").unwrap();
        let beta = ont.device_id("beta_srv").unwrap();
        let item = ont.item_id("cookie_a").unwrap();
        let c0 = Value::Sym(SymId(ont.constant_id("c0").unwrap().0));
        let cfg = ModelConfig::new(
            ont,
            Arc::new(Interpretation::new()),
            pool,
            [(phone, vec![p1, p2, p3]), (acme, vec![p1, p2, p3]), (beta, vec![p1, p2, p3])]
                .into_iter()
                .collect(),
            [(item, vec![c0])].into_iter().collect(),
            always_active,
            PolicyMode::Structural,
            None,
        )
        .unwrap();
        Arc::new(cfg)
    }

    fn ids(cfg: &ModelConfig) -> (DeviceId, DeviceId, DeviceId, ItemId, PolicyId, PolicyId, PolicyId) {
        let ont = &cfg.ontology;
        (
            ont.device_id("phone").unwrap(),
            ont.device_id("acme_srv").unwrap(),
            ont.device_id("beta_srv").unwrap(),
            ont.item_id("cookie_a").unwrap(),
            cfg.pool.id("p1").unwrap(),
            cfg.pool.id("p2").unwrap(),
            cfg.pool.id("p3").unwrap(),
        )
    }

    fn cookie_type(cfg: &ModelConfig) -> TypeId {
        TypeId(cfg.ontology.datatypes.id("cookie").unwrap())
    }

    #[test]
    fn pool_order_is_as_declared() {
        let cfg = small_cfg(true);
        let (_, _, _, _, p1, p2, p3) = ids(&cfg);
        assert!(cfg.subsumes(p1, p2));
        assert!(!cfg.subsumes(p2, p1));
        assert!(!cfg.comparable(p1, p3));
        assert!(!cfg.comparable(p2, p3));
        assert!(cfg.subsumes(p1, p1) && cfg.subsumes(p2, p2) && cfg.subsumes(p3, p3));
    }

    #[test]
    fn request_adds_fresh_policy() {
        let cfg = small_cfg(true);
        let (phone, acme, _, _, p1, _, _) = ids(&cfg);
        let st = SystemState::empty().with_base_entry(acme, acme, p1);
        let next = apply_request(&cfg, &st, acme, phone, cookie_type(&cfg), p1).unwrap();
        assert!(next.base_contains(phone, (acme, p1)));
        assert_eq!(next.base(phone).count(), 1);
    }

    #[test]
    fn request_replaces_comparable() {
        let cfg = small_cfg(true);
        let (phone, acme, _, _, p1, p2, _) = ids(&cfg);
        let st = SystemState::empty()
            .with_base_entry(acme, acme, p2)
            .with_base_entry(phone, acme, p1);
        let next = apply_request(&cfg, &st, acme, phone, cookie_type(&cfg), p2).unwrap();
        assert!(next.base_contains(phone, (acme, p2)));
        assert!(!next.base_contains(phone, (acme, p1)));
        assert_eq!(next.base(phone).count(), 1);
    }

    #[test]
    fn request_keeps_incomparable() {
        let cfg = small_cfg(true);
        let (phone, acme, _, _, p1, _, p3) = ids(&cfg);
        let st = SystemState::empty()
            .with_base_entry(acme, acme, p3)
            .with_base_entry(phone, acme, p1);
        let next = apply_request(&cfg, &st, acme, phone, cookie_type(&cfg), p3).unwrap();
        assert!(next.base_contains(phone, (acme, p1)));
        assert!(next.base_contains(phone, (acme, p3)));
    }

    #[test]
    fn request_needs_own_policy() {
        let cfg = small_cfg(true);
        let (phone, acme, _, _, p1, _, _) = ids(&cfg);
        let st = SystemState::empty();
        assert!(apply_request(&cfg, &st, acme, phone, cookie_type(&cfg), p1).is_err());
    }

    #[test]
    fn send_records_receiver_policy_and_value() {
        let cfg = small_cfg(true);
        let (phone, acme, _, item, p1, p2, _) = ids(&cfg);
        let st = SystemState::empty()
            .with_value(phone, item, Value::Nat(7))
            .with_base_entry(phone, phone, p2)
            .with_base_entry(phone, acme, p1);
        let next = apply_send(&cfg, &st, phone, acme, item).unwrap();
        assert!(next.received(acme).any(|e| e == (phone, item, p1)));
        assert_eq!(next.value(acme, item), Value::Nat(7));
    }

    #[test]
    fn send_blocked_without_subsumption() {
        let cfg = small_cfg(true);
        let (phone, acme, _, item, _, p2, p3) = ids(&cfg);
        // Receiver offered p2, subject holds p3: p2 does not subsume p3.
        let st = SystemState::empty()
            .with_value(phone, item, Value::Nat(7))
            .with_base_entry(phone, phone, p3)
            .with_base_entry(phone, acme, p2);
        assert!(apply_send(&cfg, &st, phone, acme, item).is_err());
    }

    #[test]
    fn send_blocked_on_undefined_value() {
        let cfg = small_cfg(true);
        let (phone, acme, _, item, p1, p2, _) = ids(&cfg);
        let st = SystemState::empty()
            .with_base_entry(phone, phone, p2)
            .with_base_entry(phone, acme, p1);
        let err = apply_send(&cfg, &st, phone, acme, item).unwrap_err();
        assert!(err.reason.contains("undefined"));
    }

    #[test]
    fn transfer_relays_under_receiver_policy() {
        let cfg = small_cfg(true);
        let (phone, acme, beta, item, p1, _, _) = ids(&cfg);
        // acme already collected under p1 (whose transfer set holds its own
        // rule); beta's p1 subsumes the induced transfer policy (p1 itself).
        let st = SystemState::empty()
            .with_value(phone, item, Value::Nat(7))
            .with_value(acme, item, Value::Nat(7))
            .with_received_entry(acme, phone, item, p1)
            .with_base_entry(acme, beta, p1);
        let next = apply_transfer(&cfg, &st, acme, beta, item).unwrap();
        assert!(next.received(beta).any(|e| e == (acme, item, p1)));
        assert_eq!(next.value(beta, item), Value::Nat(7));
    }

    #[test]
    fn transfer_requires_holding() {
        let cfg = small_cfg(true);
        let (phone, acme, beta, item, p1, _, _) = ids(&cfg);
        let st = SystemState::empty()
            .with_value(acme, item, Value::Nat(7))
            .with_base_entry(acme, beta, p1);
        let err = apply_transfer(&cfg, &st, acme, beta, item).unwrap_err();
        assert!(err.reason.contains("not received"));
        let _ = phone;
    }

    #[test]
    fn transfer_blocked_without_rule() {
        // A pool whose policies carry no transfer rules can never transfer.
        let cfg = small_cfg(true);
        let (phone, acme, beta, item, p1, p2, _) = ids(&cfg);
        // Build a state where acme holds the item under p2 but p2's induced
        // transfer policies are not subsumed by p1... here instead check the
        // incomparable receiver policy path.
        let st = SystemState::empty()
            .with_value(acme, item, Value::Nat(1))
            .with_received_entry(acme, phone, item, p2)
            .with_base_entry(acme, beta, p2);
        // p2's transfer view is p2 itself; beta offered p2 which subsumes it,
        // so this fires.
        assert!(apply_transfer(&cfg, &st, acme, beta, item).is_ok());
        // But p3 offered against a p1 holding does not.
        let p3 = cfg.pool.id("p3").unwrap();
        let st2 = SystemState::empty()
            .with_value(acme, item, Value::Nat(1))
            .with_received_entry(acme, phone, item, p1)
            .with_base_entry(acme, beta, p3);
        assert!(apply_transfer(&cfg, &st2, acme, beta, item).is_err());
    }

    #[test]
    fn clock_saturates_at_ceiling() {
        let cfg = small_cfg(false);
        assert_eq!(cfg.clock_ceiling(), 99);
        let (phone, acme, _, _, p1, _, _) = ids(&cfg);
        let st = SystemState::empty().with_base_entry(acme, acme, p1).with_clock(98);
        let next = apply_request(&cfg, &st, acme, phone, cookie_type(&cfg), p1).unwrap();
        assert_eq!(next.clock(), 99);
        let again = apply_request(&cfg, &next, acme, phone, cookie_type(&cfg), p1).unwrap();
        assert_eq!(again.clock(), 99);
    }

    #[test]
    fn retention_expiry_disables_send() {
        let cfg = small_cfg(false);
        let (phone, acme, _, item, p1, p2, _) = ids(&cfg);
        let st = SystemState::empty()
            .with_value(phone, item, Value::Nat(7))
            .with_base_entry(phone, phone, p2)
            .with_base_entry(phone, acme, p1);
        // p1's retention is 5: at clock 4 the send still fires, at 5 it does not.
        assert!(apply_send(&cfg, &st.clone().with_clock(4), phone, acme, item).is_ok());
        assert!(apply_send(&cfg, &st.with_clock(5), phone, acme, item).is_err());
    }

    #[test]
    fn initial_states_fan_out() {
        let cfg = small_cfg(true);
        // Three devices with three choices each, one item with one value.
        assert_eq!(cfg.initial_states().len(), 27);
        for st in cfg.initial_states() {
            assert_eq!(st.clock(), 0);
            assert_eq!(st.base(cfg.ontology.device_id("phone").unwrap()).count(), 1);
        }
    }

    #[test]
    fn enabled_events_initially_requests_only() {
        let cfg = small_cfg(true);
        let st = cfg.initial_states().into_iter().next().unwrap();
        let events = enabled_events(&cfg, &st);
        assert!(!events.is_empty());
        assert!(events.iter().all(|(e, _)| matches!(e, Event::Request { .. })));
        // Deterministic output.
        assert_eq!(events, enabled_events(&cfg, &st));
    }

    #[test]
    fn empty_model_deadlocks() {
        let ont = Arc::new(
            Ontology::new(OntologyDecl { ..Default::default() }).unwrap(),
        );
        let cfg = ModelConfig::new(
            ont.clone(),
            Arc::new(Interpretation::new()),
            PolicyPool::new(ont),
            BTreeMap::new(),
            BTreeMap::new(),
            true,
            PolicyMode::Structural,
            None,
        )
        .unwrap();
        let states = cfg.initial_states();
        assert_eq!(states.len(), 1);
        assert!(enabled_events(&cfg, &states[0]).is_empty());
    }

    #[test]
    fn successors_replayable_via_apply() {
        let cfg = small_cfg(true);
        let st = cfg.initial_states().into_iter().next().unwrap();
        for (ev, succ) in enabled_events(&cfg, &st) {
            let replayed = match ev {
                Event::Request { sndr, rcv, datatype, policy } => {
                    apply_request(&cfg, &st, sndr, rcv, datatype, policy).unwrap()
                }
                Event::Send { sndr, rcv, item } => apply_send(&cfg, &st, sndr, rcv, item).unwrap(),
                Event::Transfer { sndr, rcv, item } => {
                    apply_transfer(&cfg, &st, sndr, rcv, item).unwrap()
                }
            };
            assert_eq!(replayed, succ);
        }
    }
}
