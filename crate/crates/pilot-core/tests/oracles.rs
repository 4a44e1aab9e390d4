//! Cross-checks against the independent oracle implementations: order
//! closure, policy subsumption over the enumerated universe, and reachable
//! state counts.

mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use common::{closure_oracle, enumerate_universe, explore_oracle, has_cycle, oracle_policy, CHAIN_ORDERS};
use pilot_core::checker::{explore, TransitionSystem};
use pilot_core::ontology::PartialOrder;
use pilot_core::policy::subsumes_policy;
use pilot_core::semantics::abstract_ts;

fn order_from_ids(n: usize, edges: &[(u32, u32)]) -> Result<PartialOrder, pilot_core::OntologyError> {
    let names: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    let named: Vec<(String, String)> = edges
        .iter()
        .map(|(a, b)| (format!("x{a}"), format!("x{b}")))
        .collect();
    PartialOrder::new("prop", names, &named)
}

proptest! {
    /// Closures of random acyclic edge sets match the saturation oracle
    /// exactly.
    #[test]
    fn closure_matches_oracle(n in 1usize..8, raw_edges in proptest::collection::vec((0u32..8, 0u32..8), 0..20)) {
        // Orient every edge upward to keep the declaration acyclic.
        let edges: Vec<(u32, u32)> = raw_edges
            .into_iter()
            .filter(|(a, b)| a < b)
            .map(|(a, b)| (a % n as u32, b % n as u32))
            .filter(|(a, b)| a != b && (*a as usize) < n && (*b as usize) < n)
            .map(|(a, b)| if a < b { (a, b) } else { (b, a) })
            .collect();
        let order = order_from_ids(n, &edges).expect("acyclic declarations load");
        let got: BTreeSet<(u32, u32)> = order.pairs().into_iter().collect();
        let want = closure_oracle(n, &edges);
        prop_assert_eq!(got, want);
    }

    /// Arbitrary (possibly cyclic) declarations load exactly when the
    /// saturation oracle finds no two-element cycle.
    #[test]
    fn cycle_detection_matches_oracle(n in 1usize..7, raw_edges in proptest::collection::vec((0u32..7, 0u32..7), 0..18)) {
        let edges: Vec<(u32, u32)> = raw_edges
            .into_iter()
            .map(|(a, b)| (a % n as u32, b % n as u32))
            .filter(|(a, b)| a != b)
            .collect();
        let loaded = order_from_ids(n, &edges);
        prop_assert_eq!(loaded.is_ok(), !has_cycle(n, &edges));
        if let Ok(order) = loaded {
            let got: BTreeSet<(u32, u32)> = order.pairs().into_iter().collect();
            prop_assert_eq!(got, closure_oracle(n, &edges));
        }
    }
}

#[test]
fn loaded_orders_are_partial_orders() {
    let order = order_from_ids(5, &[(0, 1), (1, 2), (0, 3)]).unwrap();
    let pairs: BTreeSet<(u32, u32)> = order.pairs().into_iter().collect();
    for a in 0..5 {
        assert!(pairs.contains(&(a, a)));
    }
    for &(a, b) in &pairs {
        for &(c, d) in &pairs {
            if b == c {
                assert!(pairs.contains(&(a, d)));
            }
        }
        if a != b {
            assert!(!pairs.contains(&(b, a)));
        }
    }
}

/// Definitional subsumption agrees with the clause-by-clause oracle on every
/// ordered pair of the enumerated universe.
#[test]
fn subsumption_matches_oracle_on_universe() {
    let u = enumerate_universe();
    let n = u.policies.len();
    assert!(n > 500, "universe should hold hundreds of policies, got {n}");
    let mut checked = 0usize;
    for i in 0..n {
        for j in 0..n {
            let got = subsumes_policy(&u.ontology, &u.policies[i], &u.policies[j]);
            let want = oracle_policy(&CHAIN_ORDERS, &u.mirror[i], &u.mirror[j]);
            assert_eq!(
                got, want,
                "definitional and oracle subsumption disagree on pair ({i}, {j}):\n{:?}\n{:?}",
                u.mirror[i], u.mirror[j]
            );
            checked += 1;
        }
    }
    assert!(checked >= 250_000);
}

/// Reachable states of the reference configuration: breadth-first search
/// with hashing agrees with the ordered depth-first oracle.
#[test]
fn exploration_matches_oracle() {
    let model = common::load_fixture("paper_abstract.cfg").load().unwrap();
    let ts = abstract_ts(model.cfg);
    let oracle = explore_oracle(&ts);
    let summary = explore(&ts, None).unwrap();
    assert_eq!(summary.states, oracle.len());

    // The breadth-first pass visits exactly the oracle's states.
    let mut bfs_states = BTreeSet::new();
    let mut queue: Vec<_> = ts.initial_states();
    while let Some(s) = queue.pop() {
        if bfs_states.insert(s.clone()) {
            for (_, succ) in ts.successors(&s) {
                queue.push(succ);
            }
        }
    }
    assert_eq!(bfs_states, oracle);
}
