//! Property tests over the domain, human model, and belief filter.

use std::collections::{HashMap, VecDeque};

use proptest::prelude::*;

use attnswitch_core::belief::{
    advance_theta, init_belief, update, BehaviorGrid, GridConfig,
};
use attnswitch_core::domain::{
    is_terminal, legal_actions, parse_instance, transition, KitInstance, StateSpace,
    CANONICAL_INSTANCE_JSON, DEFAULT_STATE_CAP,
};
use attnswitch_core::human::{
    boltzmann_weights, influenced_weights, update_influence, HumanProfile, TrustForm,
};
use attnswitch_core::planner::{make_noisy_utility, solve_cost_to_go};

fn canonical() -> (KitInstance, StateSpace) {
    let inst = parse_instance(CANONICAL_INSTANCE_JSON).unwrap();
    let space = StateSpace::enumerate(&inst, DEFAULT_STATE_CAP).unwrap();
    (inst, space)
}

/// Independent forward breadth-first search: steps from `start` to the
/// terminal state using only the raw domain operations.
fn forward_bfs_oracle(inst: &KitInstance, start: &attnswitch_core::domain::KitState) -> Option<u32> {
    let mut dist: HashMap<attnswitch_core::domain::KitState, u32> = HashMap::new();
    let mut queue = VecDeque::new();
    dist.insert(start.clone(), 0);
    queue.push_back(start.clone());
    while let Some(x) = queue.pop_front() {
        let d = dist[&x];
        if is_terminal(inst, &x) {
            return Some(d);
        }
        for a in legal_actions(inst, &x) {
            let next = transition(inst, &x, a).unwrap();
            if !dist.contains_key(&next) {
                dist.insert(next.clone(), d + 1);
                queue.push_back(next);
            }
        }
    }
    None
}

/// Strategy for small random instances: up to 3 containers with
/// disjoint item types; requirement never exceeds the held count.
fn arb_instance() -> impl Strategy<Value = String> {
    // Per container: up to 2 item types with counts 1..=2, requirement
    // 0..=count for each.
    let container = proptest::collection::vec((1u32..=2, 0u32..=2), 1..=2);
    proptest::collection::vec(container, 1..=3).prop_map(|containers| {
        let mut cont_docs = Vec::new();
        let mut req = Vec::new();
        let mut item_no = 0;
        for (ci, items) in containers.iter().enumerate() {
            let mut contents = Vec::new();
            for &(count, want) in items {
                let name = format!("i{item_no}");
                item_no += 1;
                contents.push(format!("\"{name}\": {count}"));
                let want = want.min(count);
                if want > 0 {
                    req.push(format!("\"{name}\": {want}"));
                }
            }
            cont_docs.push(format!(
                "{{\"id\": \"C{ci}\", \"contents\": {{{}}}}}",
                contents.join(", ")
            ));
        }
        if req.is_empty() {
            // Degenerate: require one unit of the first item.
            req.push("\"i0\": 1".to_string());
        }
        format!(
            "{{\"containers\": [{}], \"requirement\": {{{}}}}}",
            cont_docs.join(", "),
            req.join(", ")
        )
    })
}

proptest! {
    #[test]
    fn transition_preserves_state_invariants(idx in 0usize..108, action_pick in 0usize..8) {
        let (inst, space) = canonical();
        let legal = space.legal(idx);
        prop_assume!(!legal.is_empty());
        let a = legal[action_pick % legal.len()];
        let next = transition(&inst, space.state(idx), a).unwrap();
        for (i, &p) in next.placed.iter().enumerate() {
            prop_assert!(p <= inst.requirement()[i]);
        }
        if let Some(c) = next.platform {
            prop_assert!(c < inst.num_containers());
        }
        // Closure: the successor is in the enumerated space.
        prop_assert!(space.index_of(&next).is_some());
    }

    #[test]
    fn random_instances_solve_and_match_forward_oracle(text in arb_instance()) {
        let inst = parse_instance(&text).unwrap();
        let space = StateSpace::enumerate(&inst, 10_000).unwrap();
        let cost = solve_cost_to_go(&inst, &space).unwrap();
        for idx in 0..space.len() {
            let oracle = forward_bfs_oracle(&inst, space.state(idx)).unwrap();
            prop_assert_eq!(cost.v(idx), oracle, "state {}", idx);
            // No deadlock anywhere.
            prop_assert_eq!(space.legal(idx).is_empty(), space.is_terminal(idx));
        }
    }

    #[test]
    fn instance_round_trip(text in arb_instance()) {
        let inst = parse_instance(&text).unwrap();
        let again = parse_instance(&inst.canonical_json()).unwrap();
        prop_assert_eq!(inst.doc(), again.doc());
    }

    #[test]
    fn distributions_are_normalized(beta in 0.0f64..5.0, theta in 0.0f64..=1.0,
                                    q in proptest::collection::vec(0.5f64..20.0, 2..6),
                                    pick in 0usize..6) {
        let suggested = pick % q.len();
        for dist in [boltzmann_weights(&q, beta), influenced_weights(&q, beta, theta, suggested)] {
            let total: f64 = dist.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(dist.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn half_theta_reduces_to_plain_boltzmann(beta in 0.0f64..5.0,
                                             q in proptest::collection::vec(0.5f64..20.0, 2..6),
                                             pick in 0usize..6) {
        let suggested = pick % q.len();
        let plain = boltzmann_weights(&q, beta);
        let reweighted = influenced_weights(&q, beta, 0.5, suggested);
        for (a, b) in plain.iter().zip(&reweighted) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn suggested_probability_monotone_in_theta(beta in 0.0f64..5.0,
                                               q in proptest::collection::vec(0.5f64..20.0, 2..6),
                                               pick in 0usize..6,
                                               lo in 0.0f64..=1.0, hi in 0.0f64..=1.0) {
        let suggested = pick % q.len();
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let p_lo = influenced_weights(&q, beta, lo, suggested)[suggested];
        let p_hi = influenced_weights(&q, beta, hi, suggested)[suggested];
        prop_assert!(p_hi >= p_lo - 1e-12);
    }

    #[test]
    fn boltzmann_shift_invariance(beta in 0.0f64..5.0, shift in -10.0f64..10.0,
                                  q in proptest::collection::vec(0.5f64..20.0, 2..6)) {
        let shifted: Vec<f64> = q.iter().map(|x| x + shift).collect();
        let a = boltzmann_weights(&q, beta);
        let b = boltzmann_weights(&shifted, beta);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn theta_stays_in_unit_interval(theta0 in 0.0f64..=1.0, eta in 0.0f64..2.0,
                                    seed in 0u64..100, steps in 1usize..30) {
        let (inst, space) = canonical();
        let cost = solve_cost_to_go(&inst, &space).unwrap();
        let utility = make_noisy_utility(&cost, &space, 1.0, seed).unwrap();
        let mut profile = HumanProfile::new(1.0, theta0, eta, utility).unwrap();
        let mut idx = space.initial();
        for step in 0..steps {
            if space.is_terminal(idx) {
                idx = space.initial();
            }
            let legal = space.legal(idx);
            let a = legal[(seed as usize + step) % legal.len()];
            profile.theta =
                update_influence(&profile, &space, idx, a, TrustForm::UtilityGain).unwrap();
            prop_assert!((0.0..=1.0).contains(&profile.theta));
            let pos = space.action_position(idx, a).unwrap();
            idx = space.successors(idx)[pos];
        }
    }

    #[test]
    fn belief_updates_stay_normalized(seed in 0u64..50, steps in 1usize..20) {
        let (inst, space) = canonical();
        let cost = solve_cost_to_go(&inst, &space).unwrap();
        let grid = BehaviorGrid::new([0.1, 3.0], GridConfig::default()).unwrap();
        let mut belief = init_belief(&grid);
        let mut idx = space.initial();
        for step in 0..steps {
            if space.is_terminal(idx) {
                idx = space.initial();
            }
            let legal = space.legal(idx);
            let observed = legal[(seed as usize + step) % legal.len()];
            let suggestion = if step % 2 == 0 { Some(legal[0]) } else { None };
            if let Some(s) = suggestion {
                belief = advance_theta(&belief, &space, &cost, idx, s, 0.2, &grid).unwrap();
                let total: f64 = belief.probabilities().iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
            }
            let (next, _) = update(&belief, &space, &cost, idx, suggestion, observed, &grid).unwrap();
            belief = next;
            let total: f64 = belief.probabilities().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(belief.probabilities().iter().all(|&p| p >= 0.0));
            let pos = space.action_position(idx, observed).unwrap();
            idx = space.successors(idx)[pos];
        }
    }
}
