//! Discretized Bayesian filter over a worker's hidden (beta, theta).
//!
//! The robot cannot see behavioral parameters, only the actions they
//! produce. It keeps a categorical belief over a grid of (beta-bin,
//! theta-bin) pairs and updates it with the Boltzmann/influence policies
//! as the observation model, evaluated on the TRUE cost table: the robot
//! has no access to a worker's private noise.

use serde::{Deserialize, Serialize};

use crate::domain::{HumanAction, StateSpace};
use crate::human::{boltzmann_weights, influenced_weights};
use crate::planner::CostTable;
use crate::{Error, Result};

/// Mass threshold below which a posterior is reset to uniform.
const UNDERFLOW_FLOOR: f64 = 1e-300;

/// Bin-center grid over the hidden (beta, theta) plane.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorGrid {
    beta_bins: Vec<f64>,
    theta_bins: Vec<f64>,
}

/// Grid resolution as it appears in experiment configs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(default)]
pub struct GridConfig {
    pub beta_bins: usize,
    pub theta_bins: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { beta_bins: 5, theta_bins: 10 }
    }
}

impl BehaviorGrid {
    /// Grid with evenly spaced centers spanning `beta_range` and [0, 1].
    pub fn new(beta_range: [f64; 2], cfg: GridConfig) -> Result<BehaviorGrid> {
        if cfg.beta_bins == 0 || cfg.theta_bins == 0 {
            return Err(Error::Config("grid must have at least one bin per axis".into()));
        }
        Ok(BehaviorGrid {
            beta_bins: linspace(beta_range[0], beta_range[1], cfg.beta_bins),
            theta_bins: linspace(0.0, 1.0, cfg.theta_bins),
        })
    }

    pub fn from_centers(beta_bins: Vec<f64>, theta_bins: Vec<f64>) -> Result<BehaviorGrid> {
        for bins in [&beta_bins, &theta_bins] {
            if bins.is_empty() || bins.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config("bin centers must be strictly increasing".into()));
            }
        }
        Ok(BehaviorGrid { beta_bins, theta_bins })
    }

    pub fn beta_bins(&self) -> &[f64] {
        &self.beta_bins
    }

    pub fn theta_bins(&self) -> &[f64] {
        &self.theta_bins
    }

    pub fn num_cells(&self) -> usize {
        self.beta_bins.len() * self.theta_bins.len()
    }

    pub fn cell(&self, beta_bin: usize, theta_bin: usize) -> usize {
        beta_bin * self.theta_bins.len() + theta_bin
    }

    pub fn split(&self, cell: usize) -> (usize, usize) {
        (cell / self.theta_bins.len(), cell % self.theta_bins.len())
    }

    pub fn centers(&self, cell: usize) -> (f64, f64) {
        let (b, t) = self.split(cell);
        (self.beta_bins[b], self.theta_bins[t])
    }

    /// Index of the theta bin whose center is nearest to `theta`
    /// (lowest index on a tie).
    pub fn nearest_theta_bin(&self, theta: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (t, &c) in self.theta_bins.iter().enumerate() {
            let d = (theta - c).abs();
            if d < best_d {
                best_d = d;
                best = t;
            }
        }
        best
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![(lo + hi) / 2.0];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Categorical distribution over the grid cells.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorBelief {
    p: Vec<f64>,
}

impl BehaviorBelief {
    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn prob(&self, cell: usize) -> f64 {
        self.p[cell]
    }

    pub fn from_probabilities(p: Vec<f64>) -> Result<BehaviorBelief> {
        if p.iter().any(|&x| x < 0.0) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Contract("belief must be a normalized distribution".into()));
        }
        Ok(BehaviorBelief { p })
    }
}

/// Uniform prior over all grid cells.
/// Uniform prior over the cells whose theta center lies inside
/// `theta_range` (the advertised sampling range of the worker pool).
/// Falls back to the full grid when no center qualifies.
pub fn init_belief_in_range(grid: &BehaviorGrid, theta_range: [f64; 2]) -> BehaviorBelief {
    let eps = 1e-9;
    let inside: Vec<usize> = (0..grid.num_cells())
        .filter(|&cell| {
            let (_, theta) = grid.centers(cell);
            theta >= theta_range[0] - eps && theta <= theta_range[1] + eps
        })
        .collect();
    if inside.is_empty() {
        return init_belief(grid);
    }
    let mut p = vec![0.0; grid.num_cells()];
    let mass = 1.0 / inside.len() as f64;
    for cell in inside {
        p[cell] = mass;
    }
    BehaviorBelief { p }
}

pub fn init_belief(grid: &BehaviorGrid) -> BehaviorBelief {
    let n = grid.num_cells();
    BehaviorBelief { p: vec![1.0 / n as f64; n] }
}

/// P(observed | beta, theta) under the robot's observation model.
///
/// Uses the influence-reweighted Boltzmann policy when a suggestion was
/// delivered, the plain Boltzmann policy otherwise (theta unused then).
/// Costs come from the true table.
pub fn likelihood(
    beta: f64,
    theta: f64,
    space: &StateSpace,
    cost: &CostTable,
    x_idx: usize,
    suggestion: Option<HumanAction>,
    observed: HumanAction,
) -> Result<f64> {
    let Some(obs_pos) = space.action_position(x_idx, observed) else {
        return Err(Error::Contract(format!(
            "observed action {observed} illegal in state {x_idx}"
        )));
    };
    let q_row = cost.q_row(space, x_idx);
    let dist = match suggestion {
        None => boltzmann_weights(&q_row, beta),
        Some(s) => {
            let Some(s_pos) = space.action_position(x_idx, s) else {
                return Err(Error::Contract(format!(
                    "suggested action {s} illegal in state {x_idx}"
                )));
            };
            influenced_weights(&q_row, beta, theta, s_pos)
        }
    };
    Ok(dist[obs_pos])
}

/// Bayes update: pointwise product of prior and likelihood, renormalized.
///
/// Returns the posterior and whether an underflow reset to uniform
/// occurred (total mass below 1e-300).
pub fn update(
    belief: &BehaviorBelief,
    space: &StateSpace,
    cost: &CostTable,
    x_idx: usize,
    suggestion: Option<HumanAction>,
    observed: HumanAction,
    grid: &BehaviorGrid,
) -> Result<(BehaviorBelief, bool)> {
    let mut posterior = Vec::with_capacity(grid.num_cells());
    for cell in 0..grid.num_cells() {
        let (beta, theta) = grid.centers(cell);
        let lik = likelihood(beta, theta, space, cost, x_idx, suggestion, observed)?;
        posterior.push(belief.p[cell] * lik);
    }
    let total: f64 = posterior.iter().sum();
    if total < UNDERFLOW_FLOOR {
        return Ok((init_belief(grid), true));
    }
    for p in &mut posterior {
        *p /= total;
    }
    Ok((BehaviorBelief { p: posterior }, false))
}

/// Deterministic theta drift of the belief after a suggestion.
///
/// Each cell's mass moves to the nearest theta bin of the clamped
/// updated theta; the utility change is computed from the true cost
/// table. Masses landing on the same bin accumulate; total mass is
/// preserved exactly.
pub fn advance_theta(
    belief: &BehaviorBelief,
    space: &StateSpace,
    cost: &CostTable,
    x_idx: usize,
    suggestion: HumanAction,
    eta: f64,
    grid: &BehaviorGrid,
) -> Result<BehaviorBelief> {
    let Some(pos) = space.action_position(x_idx, suggestion) else {
        return Err(Error::Contract(format!(
            "suggested action {suggestion} illegal in state {x_idx}"
        )));
    };
    let next = space.successors(x_idx)[pos];
    let delta_u = cost.utility(next) - cost.utility(x_idx);

    let mut out = vec![0.0; grid.num_cells()];
    for cell in 0..grid.num_cells() {
        let mass = belief.p[cell];
        if mass == 0.0 {
            continue;
        }
        let (beta_bin, theta_bin) = grid.split(cell);
        let theta = grid.theta_bins()[theta_bin];
        let target = grid.nearest_theta_bin((theta + eta * delta_u).clamp(0.0, 1.0));
        out[grid.cell(beta_bin, target)] += mass;
    }
    Ok(BehaviorBelief { p: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{parse_instance, KitInstance, CANONICAL_INSTANCE_JSON, DEFAULT_STATE_CAP};
    use crate::planner::solve_cost_to_go;

    fn setup() -> (KitInstance, StateSpace, CostTable) {
        let inst = parse_instance(CANONICAL_INSTANCE_JSON).unwrap();
        let space = StateSpace::enumerate(&inst, DEFAULT_STATE_CAP).unwrap();
        let cost = solve_cost_to_go(&inst, &space).unwrap();
        (inst, space, cost)
    }

    fn default_grid() -> BehaviorGrid {
        BehaviorGrid::new([0.1, 3.0], GridConfig::default()).unwrap()
    }

    #[test]
    fn default_grid_shape() {
        let grid = default_grid();
        assert_eq!(grid.beta_bins().len(), 5);
        assert_eq!(grid.theta_bins().len(), 10);
        assert_eq!(grid.beta_bins()[0], 0.1);
        assert_eq!(grid.beta_bins()[4], 3.0);
        assert_eq!(grid.theta_bins()[0], 0.0);
        assert_eq!(grid.theta_bins()[9], 1.0);
    }

    #[test]
    fn init_belief_is_uniform() {
        let grid = default_grid();
        let b = init_belief(&grid);
        for &p in b.probabilities() {
            assert!((p - 0.02).abs() < 1e-15);
        }
        assert!((b.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_cell_grid_is_point_mass() {
        let grid = BehaviorGrid::from_centers(vec![1.0], vec![0.5]).unwrap();
        let b = init_belief(&grid);
        assert_eq!(b.probabilities(), [1.0]);
    }

    #[test]
    fn zero_beta_likelihood_is_uniform() {
        let (_inst, space, cost) = setup();
        let idx = space.initial();
        let n = space.legal(idx).len() as f64;
        for &a in space.legal(idx) {
            let lik = likelihood(0.0, 0.5, &space, &cost, idx, None, a).unwrap();
            assert!((lik - 1.0 / n).abs() < 1e-12);
        }
    }

    #[test]
    fn half_theta_suggestion_matches_no_suggestion() {
        let (_inst, space, cost) = setup();
        let idx = space.initial();
        let legal = space.legal(idx);
        for &a in legal {
            let with = likelihood(1.3, 0.5, &space, &cost, idx, Some(legal[0]), a).unwrap();
            let without = likelihood(1.3, 0.5, &space, &cost, idx, None, a).unwrap();
            assert!((with - without).abs() < 1e-12);
        }
    }

    #[test]
    fn likelihood_hand_value() {
        // beta = 1 over a q gap of 2 (a wrong fetch wastes a round
        // trip), observe the optimal action: 1 / (1 + e^-2).
        let text = r#"{
            "containers": [
                {"id": "A", "contents": {"x": 1}},
                {"id": "B", "contents": {"y": 1}}
            ],
            "requirement": {"x": 1, "y": 1}
        }"#;
        let inst = parse_instance(text).unwrap();
        let space = StateSpace::enumerate(&inst, DEFAULT_STATE_CAP).unwrap();
        let cost = solve_cost_to_go(&inst, &space).unwrap();
        // State: x placed, platform empty -> fetch A costs extra, fetch B optimal.
        let x = crate::domain::KitState { platform: None, placed: vec![1, 0] };
        let idx = space.index_of(&x).unwrap();
        let row = cost.q_row(&space, idx);
        assert_eq!(row.len(), 2);
        let diff = (row[0] - row[1]).abs();
        assert_eq!(diff, 2.0, "expected q gap of 2, row = {row:?}");
        let best = if row[0] < row[1] { space.legal(idx)[0] } else { space.legal(idx)[1] };
        let lik = likelihood(1.0, 0.5, &space, &cost, idx, None, best).unwrap();
        let expected = 1.0 / (1.0 + (-2.0f64).exp());
        assert!((lik - expected).abs() < 1e-12);
    }

    #[test]
    fn point_mass_prior_is_fixed_point() {
        let (_inst, space, cost) = setup();
        let grid = BehaviorGrid::from_centers(vec![1.0], vec![0.5]).unwrap();
        let prior = init_belief(&grid);
        let idx = space.initial();
        let observed = space.legal(idx)[0];
        let (post, reset) = update(&prior, &space, &cost, idx, None, observed, &grid).unwrap();
        assert!(!reset);
        assert_eq!(post.probabilities(), [1.0]);
    }

    #[test]
    fn bayes_update_hand_value_two_betas() {
        // Two beta hypotheses {0, 100}, two actions with q gap 1. The
        // high-beta hypothesis puts ~1.0 on the optimal action, the
        // zero-beta one 0.5. Posterior after seeing the optimal action:
        // [1.0, 0.5] / 1.5 = [2/3, 1/3].
        let text = r#"{
            "containers": [
                {"id": "A", "contents": {"x": 1}},
                {"id": "B", "contents": {"y": 1}}
            ],
            "requirement": {"x": 1, "y": 1}
        }"#;
        let inst = parse_instance(text).unwrap();
        let space = StateSpace::enumerate(&inst, DEFAULT_STATE_CAP).unwrap();
        let cost = solve_cost_to_go(&inst, &space).unwrap();
        let x = crate::domain::KitState { platform: None, placed: vec![1, 0] };
        let idx = space.index_of(&x).unwrap();
        let grid = BehaviorGrid::from_centers(vec![0.0, 100.0], vec![0.5]).unwrap();
        let prior = init_belief(&grid);
        let row = cost.q_row(&space, idx);
        let best = if row[0] < row[1] { space.legal(idx)[0] } else { space.legal(idx)[1] };
        let (post, _) = update(&prior, &space, &cost, idx, None, best, &grid).unwrap();
        let p_high = post.prob(grid.cell(1, 0));
        assert!((p_high - 2.0 / 3.0).abs() < 1e-6, "p_high = {p_high}");
        assert!((post.prob(grid.cell(0, 0)) - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn following_suggestion_shifts_mass_to_high_theta() {
        let (_inst, space, cost) = setup();
        let grid = default_grid();
        let prior = init_belief(&grid);
        let idx = space.initial();
        let suggestion = space.legal(idx)[0];
        let (post, _) =
            update(&prior, &space, &cost, idx, Some(suggestion), suggestion, &grid).unwrap();
        let high_theta_mass = |b: &BehaviorBelief| {
            (0..grid.num_cells())
                .filter(|&c| grid.split(c).1 >= 5)
                .map(|c| b.prob(c))
                .sum::<f64>()
        };
        assert!(high_theta_mass(&post) >= high_theta_mass(&prior));
    }

    #[test]
    fn zero_eta_advance_is_identity() {
        let (_inst, space, cost) = setup();
        let grid = default_grid();
        let b = init_belief(&grid);
        let idx = space.initial();
        let out = advance_theta(&b, &space, &cost, idx, space.legal(idx)[0], 0.0, &grid).unwrap();
        assert_eq!(out.probabilities(), b.probabilities());
    }

    #[test]
    fn large_gain_advance_clamps_to_top_bin() {
        let (_inst, space, cost) = setup();
        let grid = default_grid();
        let b = init_belief(&grid);
        let idx = space.initial();
        // eta huge: every theta lands at 1.0 -> top bin.
        let out = advance_theta(&b, &space, &cost, idx, space.legal(idx)[0], 100.0, &grid).unwrap();
        let top = grid.theta_bins().len() - 1;
        for cell in 0..grid.num_cells() {
            let (_, t) = grid.split(cell);
            if t == top {
                assert!((out.prob(cell) - 0.2).abs() < 1e-12);
            } else {
                assert_eq!(out.prob(cell), 0.0);
            }
        }
    }

    #[test]
    fn advance_preserves_mass_and_accumulates() {
        let (_inst, space, cost) = setup();
        let grid = default_grid();
        let b = init_belief(&grid);
        let idx = space.initial();
        let out = advance_theta(&b, &space, &cost, idx, space.legal(idx)[0], 0.2, &grid).unwrap();
        let total: f64 = out.probabilities().iter().sum();
        assert!((total - 1.0).abs() < 1e-15);
        // eta * delta_u = 0.2 with 1/9-wide theta bins: adjacent sources
        // can merge, so some bins carry more than the uniform 0.02.
        assert!(out.probabilities().iter().any(|&p| p > 0.02 + 1e-12));
    }
}
