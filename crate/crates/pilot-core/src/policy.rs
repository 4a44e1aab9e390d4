//! PILOT policies and the operations the checker is built on: the three
//! subsumption relations, the tri-valued condition evaluator, and the
//! activity predicates that gate sends and transfers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::ontology::{DeviceId, EntityId, ItemId, Ontology, PurposeId, SymId, TypeId, Value};

/// Index into a model's policy pool (see the semantics module).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PolicyId(pub u32);

/// Index into an [`Interpretation`]'s function table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FnId(pub u32);

/// Index into an [`Interpretation`]'s predicate table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PredId(pub u32);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolicyError {
    #[error("unknown purpose id {0:?}")]
    UnknownPurpose(PurposeId),
    #[error("unknown entity id {0:?}")]
    UnknownEntity(EntityId),
    #[error("policies compare over different ontologies")]
    OntologyMismatch,
    #[error("unknown function or predicate symbol '{0}'")]
    UnknownSymbol(String),
    #[error("symbol '{name}' applied to {got} arguments, declared arity {want}")]
    ArityMismatch { name: String, want: usize, got: usize },
    #[error("'{symbol}' applied to {value} (expected a natural number)")]
    KindMismatch { symbol: String, value: String },
    #[error("predicate '{0}' is not available in this evaluation context")]
    UnsupportedInContext(String),
    #[error("transfer rule is not part of the policy's transfer set")]
    TransferNotInPolicy,
}

/// Three-valued result of condition evaluation. `Undefined` is strict: it
/// propagates through every predicate and connective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Truth {
    False,
    True,
    Undefined,
}

impl Truth {
    pub fn is_true(self) -> bool {
        self == Truth::True
    }

    pub fn from_bool(b: bool) -> Self {
        if b {
            Truth::True
        } else {
            Truth::False
        }
    }
}

/// A term of the condition language. The reference type `R` is the item
/// identifier in policy conditions and the variable identifier in program
/// graph guards. Device, policy and datatype constants only occur in guards.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term<R> {
    Ref(R),
    Nat(u64),
    Sym(SymId),
    Dev(DeviceId),
    Policy(PolicyId),
    Type(TypeId),
    Apply(FnId, Vec<Term<R>>),
}

/// A condition: binary predicates over terms, negation, conjunction, and the
/// two truth constants.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Condition<R> {
    True,
    False,
    Pred(PredId, Term<R>, Term<R>),
    Not(Box<Condition<R>>),
    And(Box<Condition<R>>, Box<Condition<R>>),
}

impl<R> Condition<R> {
    pub fn and(a: Condition<R>, b: Condition<R>) -> Condition<R> {
        Condition::And(Box::new(a), Box::new(b))
    }

    pub fn not(c: Condition<R>) -> Condition<R> {
        Condition::Not(Box::new(c))
    }

    /// All references occurring in the condition, for load-time validation.
    pub fn refs(&self) -> Vec<&R> {
        fn term_refs<'a, R>(t: &'a Term<R>, out: &mut Vec<&'a R>) {
            match t {
                Term::Ref(r) => out.push(r),
                Term::Nat(_) | Term::Sym(_) | Term::Dev(_) | Term::Policy(_) | Term::Type(_) => {}
                Term::Apply(_, args) => args.iter().for_each(|a| term_refs(a, out)),
            }
        }
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(c) = stack.pop() {
            match c {
                Condition::True | Condition::False => {}
                Condition::Pred(_, a, b) => {
                    term_refs(a, &mut out);
                    term_refs(b, &mut out);
                }
                Condition::Not(inner) => stack.push(inner),
                Condition::And(a, b) => {
                    stack.push(a);
                    stack.push(b);
                }
            }
        }
        out
    }
}

/// Values flowing through condition evaluation. Policy conditions only ever
/// see data values; program-graph guards additionally carry devices,
/// policies and datatypes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CondVal {
    Undefined,
    Nat(u64),
    Sym(SymId),
    Dev(DeviceId),
    Policy(PolicyId),
    Type(TypeId),
}

impl From<Value> for CondVal {
    fn from(v: Value) -> Self {
        match v {
            Value::Undefined => CondVal::Undefined,
            Value::Nat(n) => CondVal::Nat(n),
            Value::Sym(s) => CondVal::Sym(s),
        }
    }
}

impl CondVal {
    pub fn is_defined(&self) -> bool {
        !matches!(self, CondVal::Undefined)
    }
}

/// Resolution context for condition evaluation: resolves references to
/// values and, in guard contexts, answers policy queries.
pub trait CondEnv<R> {
    fn lookup(&self, r: &R) -> CondVal;

    /// `a` subsumes `b` in the active policy order. Unavailable in plain
    /// policy-condition evaluation.
    fn policy_subsumes(&self, _a: PolicyId, _b: PolicyId) -> Option<bool> {
        None
    }

    /// Whether policy `p` applies to datatype `t`. Unavailable in plain
    /// policy-condition evaluation.
    fn policy_applies_to(&self, _p: PolicyId, _t: TypeId) -> Option<bool> {
        None
    }
}

/// Evaluates items of a single device against a value lookup.
pub struct ItemEnv<'a, F: Fn(ItemId) -> Value> {
    pub lookup: &'a F,
}

impl<'a, F: Fn(ItemId) -> Value> CondEnv<ItemId> for ItemEnv<'a, F> {
    fn lookup(&self, r: &ItemId) -> CondVal {
        (self.lookup)(*r).into()
    }
}

enum FnImpl {
    Plus,
    Minus,
    Table { map: BTreeMap<Vec<CondVal>, CondVal>, default: CondVal },
}

enum PredImpl {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Subsumes,
    AppliesTo,
    Table { map: BTreeMap<Vec<CondVal>, bool>, default: bool },
}

struct FnDef {
    name: String,
    arity: usize,
    imp: FnImpl,
}

struct PredDef {
    name: String,
    imp: PredImpl,
}

/// Registry of function and binary-predicate symbols shared by every device.
///
/// Built-ins: `=`, `!=`, `<`, `<=`, `>`, `>=` (numeric comparisons require
/// naturals; equality is structural), `+` and `-` over naturals (`-`
/// saturates at 0), and the guard-only predicates `subsumes` and
/// `applies_to`. Models may register additional symbols as finite tables
/// with a default, so every registered symbol is total.
pub struct Interpretation {
    fns: Vec<FnDef>,
    fn_index: BTreeMap<String, FnId>,
    preds: Vec<PredDef>,
    pred_index: BTreeMap<String, PredId>,
}

impl Default for Interpretation {
    fn default() -> Self {
        Self::new()
    }
}

impl Interpretation {
    pub fn new() -> Self {
        let mut interp = Interpretation {
            fns: Vec::new(),
            fn_index: BTreeMap::new(),
            preds: Vec::new(),
            pred_index: BTreeMap::new(),
        };
        interp.add_fn("+", 2, FnImpl::Plus);
        interp.add_fn("-", 2, FnImpl::Minus);
        for (name, imp) in [
            ("=", PredImpl::Eq),
            ("!=", PredImpl::Ne),
            ("<", PredImpl::Lt),
            ("<=", PredImpl::Le),
            (">", PredImpl::Gt),
            (">=", PredImpl::Ge),
            ("subsumes", PredImpl::Subsumes),
            ("applies_to", PredImpl::AppliesTo),
        ] {
            interp.add_pred(name, imp);
        }
        interp
    }

    fn add_fn(&mut self, name: &str, arity: usize, imp: FnImpl) {
        let id = FnId(self.fns.len() as u32);
        self.fns.push(FnDef { name: name.to_string(), arity, imp });
        self.fn_index.insert(name.to_string(), id);
    }

    fn add_pred(&mut self, name: &str, imp: PredImpl) {
        let id = PredId(self.preds.len() as u32);
        self.preds.push(PredDef { name: name.to_string(), imp });
        self.pred_index.insert(name.to_string(), id);
    }

    /// Registers a table-backed function. Fails on duplicate names.
    pub fn register_fn_table(
        &mut self,
        name: &str,
        arity: usize,
        map: BTreeMap<Vec<CondVal>, CondVal>,
        default: CondVal,
    ) -> Result<FnId, PolicyError> {
        if self.fn_index.contains_key(name) {
            return Err(PolicyError::UnknownSymbol(format!("duplicate function '{name}'")));
        }
        let id = FnId(self.fns.len() as u32);
        self.fns.push(FnDef { name: name.to_string(), arity, imp: FnImpl::Table { map, default } });
        self.fn_index.insert(name.to_string(), id);
        Ok(id)
    }

    /// Registers a table-backed predicate. Fails on duplicate names.
    pub fn register_pred_table(
        &mut self,
        name: &str,
        map: BTreeMap<Vec<CondVal>, bool>,
        default: bool,
    ) -> Result<PredId, PolicyError> {
        if self.pred_index.contains_key(name) {
            return Err(PolicyError::UnknownSymbol(format!("duplicate predicate '{name}'")));
        }
        let id = PredId(self.preds.len() as u32);
        self.preds.push(PredDef { name: name.to_string(), imp: PredImpl::Table { map, default } });
        self.pred_index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn fn_id(&self, name: &str) -> Result<FnId, PolicyError> {
        self.fn_index
            .get(name)
            .copied()
            .ok_or_else(|| PolicyError::UnknownSymbol(name.to_string()))
    }

    pub fn pred_id(&self, name: &str) -> Result<PredId, PolicyError> {
        self.pred_index
            .get(name)
            .copied()
            .ok_or_else(|| PolicyError::UnknownSymbol(name.to_string()))
    }

    pub fn fn_name(&self, id: FnId) -> &str {
        &self.fns[id.0 as usize].name
    }

    pub fn pred_name(&self, id: PredId) -> &str {
        &self.preds[id.0 as usize].name
    }

    pub fn fn_arity(&self, id: FnId) -> usize {
        self.fns[id.0 as usize].arity
    }

    fn nat(&self, symbol: &str, v: CondVal) -> Result<u64, PolicyError> {
        match v {
            CondVal::Nat(n) => Ok(n),
            other => Err(PolicyError::KindMismatch {
                symbol: symbol.to_string(),
                value: format!("{other:?}"),
            }),
        }
    }

    fn apply_fn(&self, id: FnId, args: &[CondVal]) -> Result<CondVal, PolicyError> {
        let def = &self.fns[id.0 as usize];
        if args.len() != def.arity {
            return Err(PolicyError::ArityMismatch {
                name: def.name.clone(),
                want: def.arity,
                got: args.len(),
            });
        }
        match &def.imp {
            FnImpl::Plus => {
                let a = self.nat(&def.name, args[0])?;
                let b = self.nat(&def.name, args[1])?;
                Ok(CondVal::Nat(a.saturating_add(b)))
            }
            FnImpl::Minus => {
                let a = self.nat(&def.name, args[0])?;
                let b = self.nat(&def.name, args[1])?;
                Ok(CondVal::Nat(a.saturating_sub(b)))
            }
            FnImpl::Table { map, default } => Ok(*map.get(args).unwrap_or(default)),
        }
    }

    fn apply_pred<R>(
        &self,
        env: &impl CondEnv<R>,
        id: PredId,
        a: CondVal,
        b: CondVal,
    ) -> Result<bool, PolicyError> {
        let def = &self.preds[id.0 as usize];
        match &def.imp {
            PredImpl::Eq => Ok(a == b),
            PredImpl::Ne => Ok(a != b),
            PredImpl::Lt => Ok(self.nat(&def.name, a)? < self.nat(&def.name, b)?),
            PredImpl::Le => Ok(self.nat(&def.name, a)? <= self.nat(&def.name, b)?),
            PredImpl::Gt => Ok(self.nat(&def.name, a)? > self.nat(&def.name, b)?),
            PredImpl::Ge => Ok(self.nat(&def.name, a)? >= self.nat(&def.name, b)?),
            PredImpl::Subsumes => match (a, b) {
                (CondVal::Policy(x), CondVal::Policy(y)) => env
                    .policy_subsumes(x, y)
                    .ok_or_else(|| PolicyError::UnsupportedInContext(def.name.clone())),
                _ => Err(PolicyError::KindMismatch {
                    symbol: def.name.clone(),
                    value: format!("{a:?}, {b:?}"),
                }),
            },
            PredImpl::AppliesTo => match (a, b) {
                (CondVal::Policy(p), CondVal::Type(t)) => env
                    .policy_applies_to(p, t)
                    .ok_or_else(|| PolicyError::UnsupportedInContext(def.name.clone())),
                _ => Err(PolicyError::KindMismatch {
                    symbol: def.name.clone(),
                    value: format!("{a:?}, {b:?}"),
                }),
            },
            PredImpl::Table { map, default } => Ok(*map.get(&vec![a, b]).unwrap_or(default)),
        }
    }
}

/// Term evaluation: undefined propagates through every function application.
pub fn eval_term<R>(
    env: &impl CondEnv<R>,
    interp: &Interpretation,
    term: &Term<R>,
) -> Result<CondVal, PolicyError> {
    match term {
        Term::Ref(r) => Ok(env.lookup(r)),
        Term::Nat(n) => Ok(CondVal::Nat(*n)),
        Term::Sym(s) => Ok(CondVal::Sym(*s)),
        Term::Dev(d) => Ok(CondVal::Dev(*d)),
        Term::Policy(p) => Ok(CondVal::Policy(*p)),
        Term::Type(t) => Ok(CondVal::Type(*t)),
        Term::Apply(f, args) => {
            let mut vals = Vec::with_capacity(args.len());
            for a in args {
                let v = eval_term(env, interp, a)?;
                if !v.is_defined() {
                    return Ok(CondVal::Undefined);
                }
                vals.push(v);
            }
            interp.apply_fn(*f, &vals)
        }
    }
}

/// Condition evaluation per the strict three-valued scheme: `tt` and `ff`
/// evaluate to themselves, and any subterm or subformula that comes out
/// undefined makes the enclosing predicate or connective undefined.
pub fn eval_condition<R>(
    env: &impl CondEnv<R>,
    interp: &Interpretation,
    cond: &Condition<R>,
) -> Result<Truth, PolicyError> {
    match cond {
        Condition::True => Ok(Truth::True),
        Condition::False => Ok(Truth::False),
        Condition::Pred(p, t1, t2) => {
            let a = eval_term(env, interp, t1)?;
            let b = eval_term(env, interp, t2)?;
            if !a.is_defined() || !b.is_defined() {
                return Ok(Truth::Undefined);
            }
            Ok(Truth::from_bool(interp.apply_pred(env, *p, a, b)?))
        }
        Condition::Not(inner) => match eval_condition(env, interp, inner)? {
            Truth::Undefined => Ok(Truth::Undefined),
            Truth::True => Ok(Truth::False),
            Truth::False => Ok(Truth::True),
        },
        Condition::And(x, y) => {
            let a = eval_condition(env, interp, x)?;
            let b = eval_condition(env, interp, y)?;
            if a == Truth::Undefined || b == Truth::Undefined {
                return Ok(Truth::Undefined);
            }
            Ok(Truth::from_bool(a.is_true() && b.is_true()))
        }
    }
}

/// Convenience wrapper evaluating a policy condition at one device's data.
pub fn eval_item_condition(
    lookup: impl Fn(ItemId) -> Value,
    interp: &Interpretation,
    cond: &Condition<ItemId>,
) -> Result<Truth, PolicyError> {
    eval_condition(&ItemEnv { lookup: &lookup }, interp, cond)
}

/// Allowed purposes plus the retention deadline (a logical time bound).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DataUsageRule {
    pub purposes: BTreeSet<PurposeId>,
    pub retention: u64,
}

/// Condition, receiving entity, and usage rule for one communication edge.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DataCommunicationRule {
    pub condition: Condition<ItemId>,
    pub entity: EntityId,
    pub dur: DataUsageRule,
}

/// A PILOT policy: either the distinguished empty policy, or a datatype with
/// a communication rule and a set of transfer rules.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PilotPolicy {
    /// The empty policy: most restrictive, subsumed by everything, never
    /// active, and never the source of communication.
    Bottom,
    Policy {
        datatype: TypeId,
        dcr: DataCommunicationRule,
        /// Kept sorted and deduplicated; order-independent equality.
        transfers: Vec<DataCommunicationRule>,
    },
}

impl PilotPolicy {
    pub fn new(
        datatype: TypeId,
        dcr: DataCommunicationRule,
        mut transfers: Vec<DataCommunicationRule>,
    ) -> Self {
        transfers.sort();
        transfers.dedup();
        PilotPolicy::Policy { datatype, dcr, transfers }
    }

    pub fn is_bottom(&self) -> bool {
        matches!(self, PilotPolicy::Bottom)
    }

    pub fn datatype(&self) -> Option<TypeId> {
        match self {
            PilotPolicy::Bottom => None,
            PilotPolicy::Policy { datatype, .. } => Some(*datatype),
        }
    }

    pub fn dcr(&self) -> Option<&DataCommunicationRule> {
        match self {
            PilotPolicy::Bottom => None,
            PilotPolicy::Policy { dcr, .. } => Some(dcr),
        }
    }

    pub fn transfers(&self) -> &[DataCommunicationRule] {
        match self {
            PilotPolicy::Bottom => &[],
            PilotPolicy::Policy { transfers, .. } => transfers,
        }
    }

    /// The policy a transfer rule induces: the holder's datatype, the
    /// transfer rule as communication rule, and the holder's transfer set.
    pub fn transfer_view(&self, tr: &DataCommunicationRule) -> Result<PilotPolicy, PolicyError> {
        match self {
            PilotPolicy::Bottom => Err(PolicyError::TransferNotInPolicy),
            PilotPolicy::Policy { datatype, transfers, .. } => {
                if !transfers.contains(tr) {
                    return Err(PolicyError::TransferNotInPolicy);
                }
                Ok(PilotPolicy::Policy {
                    datatype: *datatype,
                    dcr: tr.clone(),
                    transfers: transfers.clone(),
                })
            }
        }
    }
}

/// Usage-rule subsumption: every allowed purpose is bounded by an allowed
/// purpose of the wider rule, and the retention deadline is no later.
pub fn subsumes_dur(ont: &Ontology, a: &DataUsageRule, b: &DataUsageRule) -> bool {
    a.retention <= b.retention
        && a.purposes
            .iter()
            .all(|p1| b.purposes.iter().any(|p2| ont.purpose_leq(*p1, *p2)))
}

/// Communication-rule subsumption compares the receiving entity and the
/// usage rule. Conditions are deliberately not ordered.
pub fn subsumes_dcr(ont: &Ontology, a: &DataCommunicationRule, b: &DataCommunicationRule) -> bool {
    ont.entity_leq(a.entity, b.entity) && subsumes_dur(ont, &a.dur, &b.dur)
}

/// Policy subsumption `a ⊑ b`: `a` is at most as permissive as `b`. The
/// empty policy is below everything; nothing else is below the empty policy.
pub fn subsumes_policy(ont: &Ontology, a: &PilotPolicy, b: &PilotPolicy) -> bool {
    match (a, b) {
        (PilotPolicy::Bottom, _) => true,
        (_, PilotPolicy::Bottom) => false,
        (
            PilotPolicy::Policy { datatype: t1, dcr: d1, transfers: tr1 },
            PilotPolicy::Policy { datatype: t2, dcr: d2, transfers: tr2 },
        ) => {
            ont.type_leq(*t1, *t2)
                && subsumes_dcr(ont, d1, d2)
                && tr1.iter().all(|x| tr2.iter().any(|y| subsumes_dcr(ont, x, y)))
        }
    }
}

/// Whether either policy subsumes the other.
pub fn comparable(ont: &Ontology, a: &PilotPolicy, b: &PilotPolicy) -> bool {
    subsumes_policy(ont, a, b) || subsumes_policy(ont, b, a)
}

/// The send/transfer shape shared by the activity predicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommEvent {
    pub sender: DeviceId,
    pub receiver: DeviceId,
    pub item: ItemId,
}

/// Whether `p` is active for the given communication: it applies to the
/// item's datatype, its condition holds at the sender (undefined blocks),
/// the retention deadline has not been reached, and the receiver's entity is
/// covered. The empty policy is never active.
pub fn active_policy(
    ont: &Ontology,
    interp: &Interpretation,
    lookup: impl Fn(ItemId) -> Value,
    p: &PilotPolicy,
    ev: CommEvent,
    clock: u64,
) -> Result<bool, PolicyError> {
    let (datatype, dcr) = match p {
        PilotPolicy::Bottom => return Ok(false),
        PilotPolicy::Policy { datatype, dcr, .. } => (*datatype, dcr),
    };
    if !ont.type_leq(ont.type_of(ev.item), datatype) {
        return Ok(false);
    }
    if !eval_item_condition(&lookup, interp, &dcr.condition)?.is_true() {
        return Ok(false);
    }
    if clock >= dcr.dur.retention {
        return Ok(false);
    }
    Ok(ont.entity_leq(ont.entity_of(ev.receiver), dcr.entity))
}

/// Whether transfer rule `tr` of `p` is active: the holder's own retention
/// has not expired, the rule's condition holds at the sender, the rule's
/// retention has not been reached, and the receiver's entity is covered.
pub fn active_transfer(
    ont: &Ontology,
    interp: &Interpretation,
    lookup: impl Fn(ItemId) -> Value,
    tr: &DataCommunicationRule,
    p: &PilotPolicy,
    ev: CommEvent,
    clock: u64,
) -> Result<bool, PolicyError> {
    let dcr = match p {
        PilotPolicy::Bottom => return Err(PolicyError::TransferNotInPolicy),
        PilotPolicy::Policy { dcr, transfers, .. } => {
            if !transfers.contains(tr) {
                return Err(PolicyError::TransferNotInPolicy);
            }
            dcr
        }
    };
    if clock >= dcr.dur.retention {
        return Ok(false);
    }
    if !eval_item_condition(&lookup, interp, &tr.condition)?.is_true() {
        return Ok(false);
    }
    if clock >= tr.dur.retention {
        return Ok(false);
    }
    Ok(ont.entity_leq(ont.entity_of(ev.receiver), tr.entity))
}

/// A policy pool: the named policies a model draws from. States refer to
/// pool entries by [`PolicyId`].
#[derive(Clone)]
pub struct PolicyPool {
    pub ontology: Arc<Ontology>,
    names: Vec<String>,
    defs: Vec<PilotPolicy>,
    index: BTreeMap<String, PolicyId>,
}

impl PolicyPool {
    pub fn new(ontology: Arc<Ontology>) -> Self {
        PolicyPool { ontology, names: Vec::new(), defs: Vec::new(), index: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: &str, policy: PilotPolicy) -> Result<PolicyId, PolicyError> {
        if self.index.contains_key(name) {
            return Err(PolicyError::UnknownSymbol(format!("duplicate policy '{name}'")));
        }
        let id = PolicyId(self.defs.len() as u32);
        self.names.push(name.to_string());
        self.defs.push(policy);
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }

    pub fn get(&self, id: PolicyId) -> &PilotPolicy {
        &self.defs[id.0 as usize]
    }

    pub fn name(&self, id: PolicyId) -> &str {
        &self.names[id.0 as usize]
    }

    pub fn id(&self, name: &str) -> Result<PolicyId, PolicyError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| PolicyError::UnknownSymbol(format!("unknown policy '{name}'")))
    }

    pub fn ids(&self) -> impl Iterator<Item = PolicyId> {
        (0..self.defs.len() as u32).map(PolicyId)
    }

    pub fn find(&self, policy: &PilotPolicy) -> Option<PolicyId> {
        self.defs.iter().position(|p| p == policy).map(|i| PolicyId(i as u32))
    }
}

impl fmt::Debug for PolicyPool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PolicyPool").field("names", &self.names).finish()
    }
}

/// An explicitly declared preorder over pool policies, replacing structural
/// subsumption when a model runs in abstract-policy mode. `transfer_targets`
/// abstracts, per policy, the policies induced by its transfer rules.
#[derive(Debug, Clone, Default)]
pub struct AbstractOrder {
    /// `leq[a][b]` iff policy `a` subsumes policy `b`.
    pub leq: Vec<Vec<bool>>,
    pub transfer_targets: Vec<Vec<PolicyId>>,
}

impl AbstractOrder {
    /// Builds from explicit pairs, closing under reflexivity and
    /// transitivity so the declared relation is a preorder.
    pub fn new(pool_len: usize, pairs: &[(PolicyId, PolicyId)], targets: Vec<Vec<PolicyId>>) -> Self {
        let mut leq = vec![vec![false; pool_len]; pool_len];
        for i in 0..pool_len {
            leq[i][i] = true;
        }
        for (a, b) in pairs {
            leq[a.0 as usize][b.0 as usize] = true;
        }
        for k in 0..pool_len {
            for i in 0..pool_len {
                if leq[i][k] {
                    for j in 0..pool_len {
                        if leq[k][j] {
                            leq[i][j] = true;
                        }
                    }
                }
            }
        }
        AbstractOrder { leq, transfer_targets: targets }
    }
}
