//! Per-human assistance POMDP and its QMDP-style solver.
//!
//! One model covers a single worker: the state crosses the observable
//! environment state with the hidden (beta-bin, theta-bin) cell, and the
//! robot either stays quiet or suggests a human action. Under a
//! suggestion the theta bin first drifts by the trust update, then the
//! human acts with the influence-reweighted Boltzmann policy at the bin
//! centers, all on the true cost table. The solver runs value iteration
//! on the fully observable model; decisions score actions by
//! belief-weighted Q-values.

use serde::{Deserialize, Serialize};

use crate::belief::{BehaviorBelief, BehaviorGrid};
use crate::domain::{HumanAction, KitInstance, StateSpace};
use crate::human::{boltzmann_weights, influenced_weights};
use crate::planner::CostTable;
use crate::{Error, Result};

/// One robot action toward a single worker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RobotAction {
    NoOp,
    Suggest(HumanAction),
}

/// Reward constants; all costs enter the model as negative rewards.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct RewardConfig {
    /// Cost charged per human action while a kit is unfinished.
    pub step_cost: f64,
    /// Cost per delivered suggestion.
    pub intervention_cost: f64,
    /// Cost for the robot to relocate to a different worker.
    pub move_cost: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig { step_cost: 1.0, intervention_cost: 0.1, move_cost: 0.2 }
    }
}

/// Which heuristic the attention policy feeds on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeuristicMode {
    /// Belief-weighted solved Q-values (expected discounted reward).
    #[default]
    Qvalue,
    /// Belief-weighted immediate one-step rewards.
    OneStep,
}

/// Tabular per-worker assistance MDP over (env-state, beta-bin, theta-bin).
#[derive(Debug, Clone)]
pub struct AssistModel {
    num_env: usize,
    num_cells: usize,
    actions: Vec<RobotAction>,
    /// transitions[s][a]: sparse successor distribution.
    transitions: Vec<Vec<Vec<(usize, f64)>>>,
    /// rewards[s][a].
    rewards: Vec<Vec<f64>>,
    gamma: f64,
}

impl AssistModel {
    /// Builds a model from explicit tables. Validates shapes, gamma, and
    /// row stochasticity.
    pub fn from_parts(
        num_env: usize,
        num_cells: usize,
        actions: Vec<RobotAction>,
        transitions: Vec<Vec<Vec<(usize, f64)>>>,
        rewards: Vec<Vec<f64>>,
        gamma: f64,
    ) -> Result<AssistModel> {
        if !(0.0 < gamma && gamma < 1.0) {
            return Err(Error::Config(format!("gamma must be in (0, 1), got {gamma}")));
        }
        let n = num_env * num_cells;
        if transitions.len() != n || rewards.len() != n {
            return Err(Error::Contract(format!(
                "expected {n} state rows, got {} transitions and {} rewards",
                transitions.len(),
                rewards.len()
            )));
        }
        if transitions.iter().any(|r| r.len() != actions.len())
            || rewards.iter().any(|r| r.len() != actions.len())
        {
            return Err(Error::Contract("row length does not match action count".into()));
        }
        let model = AssistModel { num_env, num_cells, actions, transitions, rewards, gamma };
        model.check_stochastic()?;
        Ok(model)
    }

    pub fn num_states(&self) -> usize {
        self.num_env * self.num_cells
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    pub fn actions(&self) -> &[RobotAction] {
        &self.actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn state_index(&self, env: usize, cell: usize) -> usize {
        env * self.num_cells + cell
    }

    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.rewards[state][action]
    }

    pub fn transitions(&self, state: usize, action: usize) -> &[(usize, f64)] {
        &self.transitions[state][action]
    }
}

/// Builds the per-worker assistance model.
pub fn build_model(
    inst: &KitInstance,
    space: &StateSpace,
    cost: &CostTable,
    grid: &BehaviorGrid,
    rewards_cfg: &RewardConfig,
    eta: f64,
    gamma: f64,
) -> Result<AssistModel> {
    if !(0.0 < gamma && gamma < 1.0) {
        return Err(Error::Config(format!("gamma must be in (0, 1), got {gamma}")));
    }
    let actions: Vec<RobotAction> = std::iter::once(RobotAction::NoOp)
        .chain(space.all_actions(inst).into_iter().map(RobotAction::Suggest))
        .collect();
    let num_env = space.len();
    let num_cells = grid.num_cells();
    let num_states = num_env * num_cells;

    let mut transitions = vec![Vec::new(); num_states];
    let mut reward_table = vec![Vec::new(); num_states];

    for env in 0..num_env {
        let terminal = space.is_terminal(env);
        let q_row = cost.q_row(space, env);
        for cell in 0..num_cells {
            let s = env * num_cells + cell;
            let (beta, _theta) = grid.centers(cell);
            let (beta_bin, _) = grid.split(cell);
            let mut rows = Vec::with_capacity(actions.len());
            let mut rews = Vec::with_capacity(actions.len());
            for &action in &actions {
                if terminal {
                    rows.push(vec![(s, 1.0)]);
                    rews.push(0.0);
                    continue;
                }
                let (human_dist, next_cell, rew) = match action {
                    RobotAction::NoOp => {
                        (boltzmann_weights(&q_row, beta), cell, -rewards_cfg.step_cost)
                    }
                    RobotAction::Suggest(a) => {
                        let rew = -rewards_cfg.step_cost - rewards_cfg.intervention_cost;
                        match space.action_position(env, a) {
                            // Suggesting an inapplicable action changes
                            // nothing but still costs the intervention.
                            None => (boltzmann_weights(&q_row, beta), cell, rew),
                            Some(pos) => {
                                let next_env = space.successors(env)[pos];
                                let delta_u = cost.utility(next_env) - cost.utility(env);
                                let (_, theta_bin) = grid.split(cell);
                                let theta0 = grid.theta_bins()[theta_bin];
                                let target =
                                    grid.nearest_theta_bin((theta0 + eta * delta_u).clamp(0.0, 1.0));
                                let theta = grid.theta_bins()[target];
                                (
                                    influenced_weights(&q_row, beta, theta, pos),
                                    grid.cell(beta_bin, target),
                                    rew,
                                )
                            }
                        }
                    }
                };
                let mut row: Vec<(usize, f64)> = Vec::with_capacity(human_dist.len());
                for (pos, &p) in human_dist.iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    let succ = space.successors(env)[pos] * num_cells + next_cell;
                    match row.iter_mut().find(|(s2, _)| *s2 == succ) {
                        Some((_, acc)) => *acc += p,
                        None => row.push((succ, p)),
                    }
                }
                rows.push(row);
                rews.push(rew);
            }
            transitions[s] = rows;
            reward_table[s] = rews;
        }
    }

    let model = AssistModel {
        num_env,
        num_cells,
        actions,
        transitions,
        rewards: reward_table,
        gamma,
    };
    model.check_stochastic()?;
    Ok(model)
}

impl AssistModel {
    /// Every transition row must be a distribution and every reward
    /// non-positive (the task is pure cost).
    pub fn check_stochastic(&self) -> Result<()> {
        for s in 0..self.num_states() {
            for a in 0..self.actions.len() {
                let total: f64 = self.transitions[s][a].iter().map(|&(_, p)| p).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::Solver(format!(
                        "transition row ({s}, {a}) sums to {total}"
                    )));
                }
                if self.rewards[s][a] > 0.0 {
                    return Err(Error::Solver(format!(
                        "positive reward at ({s}, {a}): {}",
                        self.rewards[s][a]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Solved per-worker policy artifact: Q-values over the underlying MDP
/// plus the immediate-reward table for the one-step heuristic.
#[derive(Debug, Clone)]
pub struct AssistPolicy {
    qvalues: Vec<Vec<f64>>,
    immediate: Vec<Vec<f64>>,
    actions: Vec<RobotAction>,
    num_cells: usize,
}

impl AssistPolicy {
    pub fn actions(&self) -> &[RobotAction] {
        &self.actions
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    pub fn qvalue(&self, state: usize, action: usize) -> f64 {
        self.qvalues[state][action]
    }

    /// Belief-weighted scores over robot actions at environment state
    /// `env`, using the requested table.
    fn scores(&self, belief: &BehaviorBelief, env: usize, mode: HeuristicMode) -> Vec<f64> {
        let table = match mode {
            HeuristicMode::Qvalue => &self.qvalues,
            HeuristicMode::OneStep => &self.immediate,
        };
        let mut scores = vec![0.0; self.actions.len()];
        for (cell, &mass) in belief.probabilities().iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let s = env * self.num_cells + cell;
            for (a, score) in scores.iter_mut().enumerate() {
                *score += mass * table[s][a];
            }
        }
        scores
    }

    /// argmax_a sum_cell b(cell) * Q((env, cell), a); ties break toward
    /// the earliest action in the list (NoOp first).
    pub fn decide(&self, belief: &BehaviorBelief, env: usize) -> RobotAction {
        let scores = self.scores(belief, env, HeuristicMode::Qvalue);
        let mut best = 0;
        for (a, &score) in scores.iter().enumerate() {
            if score > scores[best] {
                best = a;
            }
        }
        self.actions[best]
    }
}

/// Value iteration on the underlying MDP to Bellman residual < `tol`.
pub fn solve_qmdp(model: &AssistModel, tol: f64) -> Result<AssistPolicy> {
    if tol <= 0.0 {
        return Err(Error::Contract(format!("tol must be > 0, got {tol}")));
    }
    const MAX_ITERS: usize = 200_000;
    let n = model.num_states();
    let na = model.actions.len();
    let mut values = vec![0.0f64; n];
    let mut converged = false;
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ITERS {
        residual = 0.0;
        for s in 0..n {
            let mut best = f64::NEG_INFINITY;
            for a in 0..na {
                let mut q = model.rewards[s][a];
                for &(succ, p) in &model.transitions[s][a] {
                    q += model.gamma * p * values[succ];
                }
                best = best.max(q);
            }
            residual = residual.max((best - values[s]).abs());
            values[s] = best;
        }
        if residual < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Solver(format!(
            "value iteration did not converge: residual {residual} after {MAX_ITERS} iterations"
        )));
    }

    let mut qvalues = Vec::with_capacity(n);
    for s in 0..n {
        let row: Vec<f64> = (0..na)
            .map(|a| {
                let mut q = model.rewards[s][a];
                for &(succ, p) in &model.transitions[s][a] {
                    q += model.gamma * p * values[succ];
                }
                q
            })
            .collect();
        qvalues.push(row);
    }

    Ok(AssistPolicy {
        qvalues,
        immediate: model.rewards.clone(),
        actions: model.actions.clone(),
        num_cells: model.num_cells,
    })
}

/// Algorithm inputs for one worker: the policy's pick plus the
/// belief-weighted values of following it versus staying quiet.
pub fn expected_values(
    policy: &AssistPolicy,
    belief: &BehaviorBelief,
    env: usize,
    mode: HeuristicMode,
) -> (f64, f64, RobotAction) {
    let suggestion = policy.decide(belief, env);
    let action_idx = policy
        .actions
        .iter()
        .position(|&a| a == suggestion)
        .expect("decided action is in the action list");
    let scores = policy.scores(belief, env, mode);
    (scores[action_idx], scores[0], suggestion)
}
