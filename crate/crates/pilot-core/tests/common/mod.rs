//! Shared test oracles: independent implementations used to cross-check the
//! library. Everything here is deliberately written against its own data
//! representations so it shares no code path with what it checks.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;

use pilot_core::checker::TransitionSystem;
use pilot_core::model::ModelDocument;
use pilot_core::ontology::{Ontology, OntologyDecl, Role};
use pilot_core::policy::{
    Condition, DataCommunicationRule, DataUsageRule, PilotPolicy,
};
use pilot_core::{EntityId, PurposeId, TypeId};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn load_fixture(name: &str) -> ModelDocument {
    let text = std::fs::read_to_string(fixture_path(name)).expect("fixture readable");
    ModelDocument::from_json_str(&text).expect("fixture parses")
}

// ---------------------------------------------------------------------------
// Closure oracle: saturate pairs until fixpoint, the slow way.
// ---------------------------------------------------------------------------

/// Reflexive-transitive closure by repeated pairwise saturation.
pub fn closure_oracle(n: usize, edges: &[(u32, u32)]) -> BTreeSet<(u32, u32)> {
    let mut pairs: BTreeSet<(u32, u32)> = (0..n as u32).map(|i| (i, i)).collect();
    pairs.extend(edges.iter().copied());
    loop {
        let mut added = Vec::new();
        for &(a, b) in &pairs {
            for &(c, d) in &pairs {
                if b == c && !pairs.contains(&(a, d)) {
                    added.push((a, d));
                }
            }
        }
        if added.is_empty() {
            return pairs;
        }
        pairs.extend(added);
    }
}

/// Whether the saturated relation relates two distinct elements both ways.
pub fn has_cycle(n: usize, edges: &[(u32, u32)]) -> bool {
    let closed = closure_oracle(n, edges);
    closed.iter().any(|&(a, b)| a != b && closed.contains(&(b, a)))
}

// ---------------------------------------------------------------------------
// Subsumption oracle over an enumerated policy universe.
//
// The mirror types use chain positions (0 = low, 1 = high) instead of the
// library's interned identifiers, and each clause of the three subsumption
// definitions is evaluated directly.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ODur {
    pub purposes: Vec<u8>,
    pub rt: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ODcr {
    pub entity: u8,
    pub dur: ODur,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OPolicy {
    Bottom,
    Policy { datatype: u8, dcr: ODcr, tr: Option<ODcr> },
}

fn chain_leq(a: u8, b: u8) -> bool {
    a == b || (a == 0 && b == 1)
}

/// The three orders the oracle consults, as plain functions over positions.
pub struct OracleOrders {
    pub entity_leq: fn(u8, u8) -> bool,
    pub type_leq: fn(u8, u8) -> bool,
    pub purpose_leq: fn(u8, u8) -> bool,
}

pub const CHAIN_ORDERS: OracleOrders =
    OracleOrders { entity_leq: chain_leq, type_leq: chain_leq, purpose_leq: chain_leq };

fn discrete(a: u8, b: u8) -> bool {
    a == b
}

/// Unordered universes: only reflexive pairs.
pub const DISCRETE_ORDERS: OracleOrders =
    OracleOrders { entity_leq: discrete, type_leq: discrete, purpose_leq: discrete };

pub fn oracle_dur(o: &OracleOrders, a: &ODur, b: &ODur) -> bool {
    let purposes_ok = a
        .purposes
        .iter()
        .all(|p1| b.purposes.iter().any(|p2| (o.purpose_leq)(*p1, *p2)));
    let rt_ok = a.rt <= b.rt;
    purposes_ok && rt_ok
}

pub fn oracle_dcr(o: &OracleOrders, a: &ODcr, b: &ODcr) -> bool {
    (o.entity_leq)(a.entity, b.entity) && oracle_dur(o, &a.dur, &b.dur)
}

pub fn oracle_policy(o: &OracleOrders, a: &OPolicy, b: &OPolicy) -> bool {
    match (a, b) {
        (OPolicy::Bottom, _) => true,
        (_, OPolicy::Bottom) => false,
        (
            OPolicy::Policy { datatype: t1, dcr: d1, tr: tr1 },
            OPolicy::Policy { datatype: t2, dcr: d2, tr: tr2 },
        ) => {
            let types_ok = (o.type_leq)(*t1, *t2);
            let dcr_ok = oracle_dcr(o, d1, d2);
            let tr_ok = match tr1 {
                None => true,
                Some(x) => match tr2 {
                    None => false,
                    Some(y) => oracle_dcr(o, x, y),
                },
            };
            types_ok && dcr_ok && tr_ok
        }
    }
}

/// The enumerated universe: both the library policies and the mirror
/// policies, index-aligned, over two-element chains with rt in {1, 2} and at
/// most one transfer rule.
pub struct Universe {
    pub ontology: Arc<Ontology>,
    pub policies: Vec<PilotPolicy>,
    pub mirror: Vec<OPolicy>,
}

pub fn enumerate_universe() -> Universe {
    let ontology = Arc::new(
        Ontology::new(OntologyDecl {
            entities: vec!["e_lo".into(), "e_hi".into()],
            entity_edges: vec![("e_lo".into(), "e_hi".into())],
            datatypes: vec!["t_lo".into(), "t_hi".into()],
            datatype_edges: vec![("t_lo".into(), "t_hi".into())],
            purposes: vec!["q_lo".into(), "q_hi".into()],
            purpose_edges: vec![("q_lo".into(), "q_hi".into())],
            devices: vec![("d".into(), "e_lo".into(), Role::Subject)],
            items: vec![("i0".into(), "t_lo".into(), "d".into())],
            constants: vec![],
        })
        .unwrap(),
    );

    let purpose_sets: Vec<Vec<u8>> = vec![vec![], vec![0], vec![1], vec![0, 1]];
    let mut durs = Vec::new();
    for ps in &purpose_sets {
        for rt in [1u64, 2] {
            durs.push(ODur { purposes: ps.clone(), rt });
        }
    }
    let mut dcrs = Vec::new();
    for e in [0u8, 1] {
        for dur in &durs {
            dcrs.push(ODcr { entity: e, dur: dur.clone() });
        }
    }

    let lift_dur = |d: &ODur| DataUsageRule {
        purposes: d.purposes.iter().map(|p| PurposeId(*p as u32)).collect(),
        retention: d.rt,
    };
    let lift_dcr = |d: &ODcr| DataCommunicationRule {
        condition: Condition::True,
        entity: EntityId(d.entity as u32),
        dur: lift_dur(&d.dur),
    };

    let mut policies = vec![PilotPolicy::Bottom];
    let mut mirror = vec![OPolicy::Bottom];
    for t in [0u8, 1] {
        for dcr in &dcrs {
            for tr in std::iter::once(None).chain(dcrs.iter().map(Some)) {
                mirror.push(OPolicy::Policy { datatype: t, dcr: dcr.clone(), tr: tr.cloned() });
                policies.push(PilotPolicy::new(
                    TypeId(t as u32),
                    lift_dcr(dcr),
                    tr.map(|x| vec![lift_dcr(x)]).unwrap_or_default(),
                ));
            }
        }
    }
    Universe { ontology, policies, mirror }
}

// ---------------------------------------------------------------------------
// Exploration oracle: recursion-free depth-first search over an ordered
// visited set; no hashing anywhere.
// ---------------------------------------------------------------------------

pub fn explore_oracle<T: TransitionSystem>(ts: &T) -> BTreeSet<T::State> {
    let mut visited: BTreeSet<T::State> = BTreeSet::new();
    let mut stack: Vec<T::State> = ts.initial_states();
    while let Some(state) = stack.pop() {
        if !visited.insert(state.clone()) {
            continue;
        }
        for (_, succ) in ts.successors(&state) {
            if !visited.contains(&succ) {
                stack.push(succ);
            }
        }
    }
    visited
}
