//! Exact cost-to-go tables and per-human noisy utility tables.
//!
//! Every human action has unit cost, so the optimal cost-to-go v(x) is
//! the graph distance from x to the terminal state. The action cost
//! table is q(x, a) = 1 + v(transition(x, a)); q is a cost, lower is
//! better, and the Boltzmann policies downstream use exp(-beta * q).

use std::collections::VecDeque;
use std::io::{Read as _, Write as _};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::domain::{KitInstance, StateSpace};
use crate::{Error, Result};

const CACHE_MAGIC: &[u8; 8] = b"ATSWCST1";

/// Noiseless ground-truth cost table over a state space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostTable {
    v: Vec<u32>,
}

impl CostTable {
    /// Optimal remaining human actions from state `idx`.
    pub fn v(&self, idx: usize) -> u32 {
        self.v[idx]
    }

    pub fn values(&self) -> &[u32] {
        &self.v
    }

    /// q(x, a) for the legal action at position `pos` in `space.legal(idx)`.
    pub fn q(&self, space: &StateSpace, idx: usize, pos: usize) -> f64 {
        1.0 + f64::from(self.v[space.successors(idx)[pos]])
    }

    /// Cost row over the legal actions of `idx`, in legal-action order.
    pub fn q_row(&self, space: &StateSpace, idx: usize) -> Vec<f64> {
        space
            .successors(idx)
            .iter()
            .map(|&s| 1.0 + f64::from(self.v[s]))
            .collect()
    }

    /// U(x) = -min_a q(x, a); zero at the terminal state.
    pub fn utility(&self, idx: usize) -> f64 {
        -f64::from(self.v[idx])
    }
}

/// Backward breadth-first search from the terminal state over the
/// reversed unit-cost state graph.
pub fn solve_cost_to_go(inst: &KitInstance, space: &StateSpace) -> Result<CostTable> {
    let n = space.len();
    let mut predecessors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for idx in 0..n {
        for &succ in space.successors(idx) {
            predecessors[succ].push(idx);
        }
    }

    const UNREACHED: u32 = u32::MAX;
    let mut v = vec![UNREACHED; n];
    let mut queue = VecDeque::new();
    for idx in 0..n {
        if space.is_terminal(idx) {
            v[idx] = 0;
            queue.push_back(idx);
        }
    }
    while let Some(idx) = queue.pop_front() {
        for &pred in &predecessors[idx] {
            if v[pred] == UNREACHED {
                v[pred] = v[idx] + 1;
                queue.push_back(pred);
            }
        }
    }

    if let Some(idx) = v.iter().position(|&d| d == UNREACHED) {
        return Err(Error::Solver(format!(
            "goal unreachable from state {:?} (index {idx})",
            space.state(idx)
        )));
    }
    let _ = inst;
    Ok(CostTable { v })
}

/// A human's private, perturbed copy of the cost table.
///
/// Each legal (state, action) entry carries an independent zero-mean
/// normal perturbation with standard deviation `sigma`, frozen at
/// construction so a run sees a persistent misestimate.
#[derive(Debug, Clone)]
pub struct NoisyUtility {
    q: Vec<Vec<f64>>,
    u: Vec<f64>,
    sigma: f64,
    seed: u64,
}

impl NoisyUtility {
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Perturbed cost of the legal action at position `pos` of state `idx`.
    pub fn q(&self, idx: usize, pos: usize) -> f64 {
        self.q[idx][pos]
    }

    /// Perturbed cost row over the legal actions of `idx`.
    pub fn q_row(&self, idx: usize) -> &[f64] {
        &self.q[idx]
    }

    /// U(x) = -min_a q~(x, a); zero at the terminal state.
    pub fn utility(&self, idx: usize) -> f64 {
        self.u[idx]
    }

    /// Maximum perturbed cost over the legal actions; zero at terminal.
    /// Only used by the literal trust-update form.
    pub fn max_q(&self, idx: usize) -> f64 {
        if self.q[idx].is_empty() {
            0.0
        } else {
            self.q[idx].iter().copied().fold(f64::NEG_INFINITY, f64::max)
        }
    }
}

/// Builds a frozen noisy utility table; deterministic given `seed`.
pub fn make_noisy_utility(
    cost: &CostTable,
    space: &StateSpace,
    sigma: f64,
    seed: u64,
) -> Result<NoisyUtility> {
    if sigma < 0.0 {
        return Err(Error::Contract(format!("sigma must be >= 0, got {sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Contract(format!("bad sigma: {e}")))?;
    let mut q = Vec::with_capacity(space.len());
    for idx in 0..space.len() {
        let row: Vec<f64> = (0..space.legal(idx).len())
            .map(|pos| {
                let eps = if sigma == 0.0 { 0.0 } else { normal.sample(&mut rng) };
                cost.q(space, idx, pos) + eps
            })
            .collect();
        q.push(row);
    }
    let u: Vec<f64> = q
        .iter()
        .map(|row| {
            if row.is_empty() {
                0.0
            } else {
                -row.iter().copied().fold(f64::INFINITY, f64::min)
            }
        })
        .collect();
    Ok(NoisyUtility { q, u, sigma, seed })
}

/// Content hash of an instance document, used as the cache key.
pub fn instance_hash(inst: &KitInstance) -> [u8; 32] {
    let digest = Sha256::digest(inst.canonical_json().as_bytes());
    digest.into()
}

/// Writes a cost-table cache file: magic header, instance hash, values.
pub fn write_cost_cache(path: &Path, inst: &KitInstance, cost: &CostTable) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&instance_hash(inst));
    buf.extend_from_slice(&(cost.v.len() as u64).to_le_bytes());
    for &value in &cost.v {
        buf.extend_from_slice(&value.to_le_bytes());
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

/// Reads a cost-table cache, rejecting wrong magic or a stale hash.
pub fn read_cost_cache(path: &Path, inst: &KitInstance) -> Result<CostTable> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() < 48 || &buf[..8] != CACHE_MAGIC {
        return Err(Error::Cache("bad magic header".into()));
    }
    if buf[8..40] != instance_hash(inst) {
        return Err(Error::Cache("instance hash mismatch".into()));
    }
    let n = u64::from_le_bytes(buf[40..48].try_into().unwrap()) as usize;
    if buf.len() != 48 + 4 * n {
        return Err(Error::Cache("truncated value table".into()));
    }
    let v = buf[48..]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(CostTable { v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{
        parse_instance, HumanAction, KitState, CANONICAL_INSTANCE_JSON, DEFAULT_STATE_CAP,
    };

    fn canonical() -> (KitInstance, StateSpace) {
        let inst = parse_instance(CANONICAL_INSTANCE_JSON).unwrap();
        let space = StateSpace::enumerate(&inst, DEFAULT_STATE_CAP).unwrap();
        (inst, space)
    }

    #[test]
    fn optimal_cost_from_initial_is_10() {
        let (inst, space) = canonical();
        let cost = solve_cost_to_go(&inst, &space).unwrap();
        assert_eq!(cost.v(space.initial()), 10);
    }

    #[test]
    fn terminal_cost_is_zero() {
        let (inst, space) = canonical();
        let cost = solve_cost_to_go(&inst, &space).unwrap();
        let terminal = KitState {
            platform: None,
            placed: inst.requirement().to_vec(),
        };
        assert_eq!(cost.v(space.index_of(&terminal).unwrap()), 0);
    }

    #[test]
    fn complete_kit_on_platform_costs_one_stow() {
        let (inst, space) = canonical();
        let cost = solve_cost_to_go(&inst, &space).unwrap();
        let x = KitState {
            platform: Some(0),
            placed: inst.requirement().to_vec(),
        };
        assert_eq!(cost.v(space.index_of(&x).unwrap()), 1);
    }

    #[test]
    fn bellman_consistency() {
        let (inst, space) = canonical();
        let cost = solve_cost_to_go(&inst, &space).unwrap();
        for idx in 0..space.len() {
            if space.is_terminal(idx) {
                continue;
            }
            let best = space
                .successors(idx)
                .iter()
                .map(|&s| cost.v(s))
                .min()
                .unwrap();
            assert_eq!(cost.v(idx), 1 + best, "state {idx}");
        }
    }

    #[test]
    fn greedy_rollout_takes_exactly_v_steps() {
        let (inst, space) = canonical();
        let cost = solve_cost_to_go(&inst, &space).unwrap();
        let mut idx = space.initial();
        let mut steps = 0;
        while !space.is_terminal(idx) {
            let (pos, _) = cost
                .q_row(&space, idx)
                .into_iter()
                .enumerate()
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap();
            idx = space.successors(idx)[pos];
            steps += 1;
            assert!(steps <= 1000);
        }
        assert_eq!(steps, cost.v(space.initial()));
        let _ = inst;
    }

    #[test]
    fn zero_sigma_reproduces_true_costs() {
        let (inst, space) = canonical();
        let cost = solve_cost_to_go(&inst, &space).unwrap();
        let noisy = make_noisy_utility(&cost, &space, 0.0, 7).unwrap();
        for idx in 0..space.len() {
            for pos in 0..space.legal(idx).len() {
                assert_eq!(noisy.q(idx, pos), cost.q(&space, idx, pos));
            }
        }
    }

    #[test]
    fn same_seed_same_tables() {
        let (inst, space) = canonical();
        let cost = solve_cost_to_go(&inst, &space).unwrap();
        let a = make_noisy_utility(&cost, &space, 0.7, 42).unwrap();
        let b = make_noisy_utility(&cost, &space, 0.7, 42).unwrap();
        for idx in 0..space.len() {
            assert_eq!(a.q_row(idx), b.q_row(idx));
        }
        let _ = inst;
    }

    #[test]
    fn negative_sigma_rejected() {
        let (inst, space) = canonical();
        let cost = solve_cost_to_go(&inst, &space).unwrap();
        assert!(matches!(
            make_noisy_utility(&cost, &space, -0.1, 0),
            Err(Error::Contract(_))
        ));
        let _ = inst;
    }

    #[test]
    fn noise_standard_deviation_matches_sigma() {
        // Statistical check on >= 10,000 sampled entries: empirical std
        // of (q~ - q) within [0.97, 1.03] for sigma = 1.0.
        let (inst, space) = canonical();
        let cost = solve_cost_to_go(&inst, &space).unwrap();
        let mut diffs = Vec::new();
        let mut seed = 0u64;
        while diffs.len() < 10_000 {
            let noisy = make_noisy_utility(&cost, &space, 1.0, seed).unwrap();
            for idx in 0..space.len() {
                for pos in 0..space.legal(idx).len() {
                    diffs.push(noisy.q(idx, pos) - cost.q(&space, idx, pos));
                }
            }
            seed += 1;
        }
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        assert!((0.97..=1.03).contains(&std), "std = {std}");
        let _ = inst;
    }

    #[test]
    fn cache_round_trip_and_invalidation() {
        let (inst, space) = canonical();
        let cost = solve_cost_to_go(&inst, &space).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cost.bin");
        write_cost_cache(&path, &inst, &cost).unwrap();
        let loaded = read_cost_cache(&path, &inst).unwrap();
        assert_eq!(cost, loaded);

        // A different instance must reject the cache.
        let other = parse_instance(
            r#"{"containers": [{"id": "C1", "contents": {"widget": 1}}],
                "requirement": {"widget": 1}}"#,
        )
        .unwrap();
        assert!(matches!(
            read_cost_cache(&path, &other),
            Err(Error::Cache(_))
        ));
    }

    #[test]
    fn forced_single_action_has_q_one() {
        let (inst, space) = canonical();
        let cost = solve_cost_to_go(&inst, &space).unwrap();
        let x = KitState {
            platform: Some(0),
            placed: inst.requirement().to_vec(),
        };
        let idx = space.index_of(&x).unwrap();
        assert_eq!(space.legal(idx), [HumanAction::Stow(0)]);
        assert_eq!(cost.q(&space, idx, 0), 1.0);
    }
}
