//! Top-level robot controllers.
//!
//! `attention_step` is the greedy attention-switching rule: per worker,
//! score the expected gain of running that worker's assistance policy
//! over staying quiet, discount the score by the relocation cost when
//! the worker is elsewhere, and assist the best worker only if the net
//! gain is positive. `reactive_step` corrects the most recent mistake it
//! can see; `none_step` never intervenes.

use serde::{Deserialize, Serialize};

use crate::assist::{expected_values, AssistPolicy, HeuristicMode, RewardConfig, RobotAction};
use crate::belief::BehaviorBelief;
use crate::domain::HumanAction;
use crate::domain::StateSpace;
use crate::planner::CostTable;
use crate::{Error, Result};

/// Strict-suboptimality margin for the reactive mistake test.
const MISTAKE_EPS: f64 = 1e-9;

/// Which top-level controller drives the robot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Attention,
    Reactive,
    None,
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Attention => "attention",
            PolicyKind::Reactive => "reactive",
            PolicyKind::None => "none",
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<PolicyKind> {
        match s {
            "attention" => Ok(PolicyKind::Attention),
            "reactive" => Ok(PolicyKind::Reactive),
            "none" => Ok(PolicyKind::None),
            other => Err(Error::Config(format!("unknown policy {other:?}"))),
        }
    }
}

/// Where the robot currently stands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RobotState {
    /// Worker index, or `None` when docked away from every station.
    pub location: Option<usize>,
}

impl RobotState {
    pub fn docked() -> RobotState {
        RobotState { location: None }
    }
}

/// The robot's choice for one timestep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RobotDecision {
    Idle,
    Assist { worker: usize, suggestion: HumanAction },
}

/// Greedy attention-switching step.
///
/// For each unfinished worker k: gain G_k = R_pi - R_phi from that
/// worker's policy, minus the relocation cost when k is not the robot's
/// current worker. Assist the argmax worker when its net score is
/// positive and the policy actually wants to suggest; ties break toward
/// the lowest worker index.
pub fn attention_step(
    space: &StateSpace,
    beliefs: &[BehaviorBelief],
    xs: &[usize],
    robot: RobotState,
    policy: &AssistPolicy,
    rewards: &RewardConfig,
    mode: HeuristicMode,
) -> Result<RobotDecision> {
    if xs.iter().all(|&x| space.is_terminal(x)) {
        return Err(Error::Contract("attention_step with all workers terminal".into()));
    }
    let mut best: Option<(f64, usize, HumanAction)> = None;
    for (k, (&x, belief)) in xs.iter().zip(beliefs).enumerate() {
        if space.is_terminal(x) {
            continue;
        }
        let (r_pi, r_phi, action) = expected_values(policy, belief, x, mode);
        let RobotAction::Suggest(suggestion) = action else {
            continue;
        };
        let relocation = if robot.location == Some(k) { 0.0 } else { -rewards.move_cost };
        let score = (r_pi - r_phi) + relocation;
        let better = match best {
            None => true,
            Some((best_score, _, _)) => score > best_score,
        };
        if better {
            best = Some((score, k, suggestion));
        }
    }
    match best {
        Some((score, worker, suggestion)) if score > 0.0 => {
            if space.action_position(xs[worker], suggestion).is_none() {
                // The solved policy only suggests applicable actions;
                // treat a miss as a no-op rather than crash mid-episode.
                log::warn!("policy suggested inapplicable action {suggestion} for worker {worker}");
                return Ok(RobotDecision::Idle);
            }
            Ok(RobotDecision::Assist { worker, suggestion })
        }
        _ => Ok(RobotDecision::Idle),
    }
}

/// Reactive baseline: correct a worker whose previous action was
/// strictly suboptimal under the true cost table.
///
/// Among erring workers the robot prefers its current worker, then the
/// lowest index, and suggests the argmin-cost action in that worker's
/// current state.
pub fn reactive_step(
    space: &StateSpace,
    cost: &CostTable,
    xs_prev: &[usize],
    last_actions: &[Option<HumanAction>],
    xs_now: &[usize],
    robot: RobotState,
) -> RobotDecision {
    let erred = |k: usize| -> bool {
        let Some(a) = last_actions[k] else { return false };
        let Some(pos) = space.action_position(xs_prev[k], a) else { return false };
        let row = cost.q_row(space, xs_prev[k]);
        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
        row[pos] > min + MISTAKE_EPS
    };
    let candidates: Vec<usize> = (0..xs_now.len())
        .filter(|&k| !space.is_terminal(xs_now[k]) && erred(k))
        .collect();
    let chosen = match robot.location {
        Some(loc) if candidates.contains(&loc) => Some(loc),
        _ => candidates.first().copied(),
    };
    match chosen {
        None => RobotDecision::Idle,
        Some(k) => {
            let x = xs_now[k];
            let row = cost.q_row(space, x);
            let best_pos = row
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(pos, _)| pos)
                .expect("non-terminal state has actions");
            RobotDecision::Assist { worker: k, suggestion: space.legal(x)[best_pos] }
        }
    }
}

/// No-assistance baseline.
pub fn none_step() -> RobotDecision {
    RobotDecision::Idle
}
