//! Simulated human decision-making.
//!
//! A worker picks actions with a Boltzmann policy over their private
//! noisy cost table, P(a) proportional to exp(-beta * q~(x, a)). A robot
//! suggestion reweights the policy by the influence coefficient theta
//! (weight theta on the suggested action, 1 - theta on the rest), and
//! theta itself drifts by eta times the perceived utility change of the
//! suggested transition.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{HumanAction, StateSpace};
use crate::planner::{make_noisy_utility, CostTable, NoisyUtility};
use crate::{Error, Result};

/// Which form of the trust update to apply.
///
/// `UtilityGain` moves theta by eta * (U(x') - U(x)) with
/// U(x) = -min_a q~(x, a), so trust rises when the suggested successor
/// has lower remaining cost. `Literal` uses max_a q~ differences instead;
/// with q~ as a cost this rewards suggestions into worse states and is
/// kept only for auditing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrustForm {
    #[default]
    UtilityGain,
    Literal,
}

/// Ground-truth behavioral parameters of one simulated worker.
#[derive(Debug, Clone)]
pub struct HumanProfile {
    /// Expertise coefficient, in [0, inf).
    pub beta: f64,
    /// Influence coefficient, in [0, 1].
    pub theta: f64,
    /// Trust learning rate.
    pub eta: f64,
    /// Private perturbed cost table.
    pub utility: NoisyUtility,
}

impl HumanProfile {
    pub fn new(beta: f64, theta: f64, eta: f64, utility: NoisyUtility) -> Result<HumanProfile> {
        if beta < 0.0 {
            return Err(Error::Contract(format!("beta must be >= 0, got {beta}")));
        }
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::Contract(format!("theta must be in [0,1], got {theta}")));
        }
        if eta < 0.0 {
            return Err(Error::Contract(format!("eta must be >= 0, got {eta}")));
        }
        Ok(HumanProfile { beta, theta, eta, utility })
    }
}

/// Pool sampling ranges (Table-style defaults: beta in [0.1, 3.0],
/// theta in [0.5, 0.95], sigma in [0.1, 1.0], eta = 0.2, 12 workers).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PoolConfig {
    pub beta_range: [f64; 2],
    pub theta_range: [f64; 2],
    pub sigma_range: [f64; 2],
    pub eta: f64,
    pub pool_size: usize,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            beta_range: [0.1, 3.0],
            theta_range: [0.5, 0.95],
            sigma_range: [0.1, 1.0],
            eta: 0.2,
            pool_size: 12,
        }
    }
}

impl PoolConfig {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("beta", self.beta_range, 0.0, f64::INFINITY),
            ("theta", self.theta_range, 0.0, 1.0),
            ("sigma", self.sigma_range, 0.0, f64::INFINITY),
        ];
        for (name, [lo, hi], min, max) in ranges {
            if lo > hi || lo < min || hi > max {
                return Err(Error::Config(format!(
                    "{name}_range [{lo}, {hi}] out of domain [{min}, {max}]"
                )));
            }
        }
        if self.eta < 0.0 {
            return Err(Error::Config(format!("eta must be >= 0, got {}", self.eta)));
        }
        if self.pool_size == 0 {
            return Err(Error::Config("pool_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Softmax over costs: p_i proportional to exp(-beta * q_i).
pub fn boltzmann_weights(q_row: &[f64], beta: f64) -> Vec<f64> {
    let min = q_row.iter().copied().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = q_row.iter().map(|&q| (-beta * (q - min)).exp()).collect();
    let total: f64 = w.iter().sum();
    for p in &mut w {
        *p /= total;
    }
    w
}

/// Boltzmann weights reweighted by a suggestion: the suggested entry
/// gets weight theta, every other entry 1 - theta, then renormalize.
pub fn influenced_weights(q_row: &[f64], beta: f64, theta: f64, suggested: usize) -> Vec<f64> {
    let min = q_row.iter().copied().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = q_row
        .iter()
        .enumerate()
        .map(|(pos, &q)| {
            let bias = if pos == suggested { theta } else { 1.0 - theta };
            bias * (-beta * (q - min)).exp()
        })
        .collect();
    let total: f64 = w.iter().sum();
    if total == 0.0 {
        // theta = 0 with the suggested action being the only one (or
        // theta = 1 and no other action): the reweighting degenerates,
        // fall back to the plain Boltzmann choice.
        return boltzmann_weights(q_row, beta);
    }
    for p in &mut w {
        *p /= total;
    }
    w
}

/// Action distribution over `space.legal(x_idx)` with no robot input.
pub fn action_distribution(
    profile: &HumanProfile,
    space: &StateSpace,
    x_idx: usize,
) -> Result<Vec<f64>> {
    if space.is_terminal(x_idx) {
        return Err(Error::Contract("action_distribution at terminal state".into()));
    }
    Ok(boltzmann_weights(profile.utility.q_row(x_idx), profile.beta))
}

/// Action distribution after the robot suggests `suggestion`.
pub fn influenced_distribution(
    profile: &HumanProfile,
    space: &StateSpace,
    x_idx: usize,
    suggestion: HumanAction,
) -> Result<Vec<f64>> {
    let Some(pos) = space.action_position(x_idx, suggestion) else {
        return Err(Error::Contract(format!(
            "suggested action {suggestion} illegal in state {x_idx}"
        )));
    };
    Ok(influenced_weights(
        profile.utility.q_row(x_idx),
        profile.beta,
        profile.theta,
        pos,
    ))
}

/// New theta after the robot suggests `suggestion` in `x_idx`.
///
/// Judged against the worker's private table: the worker anticipates the
/// state the suggestion leads to and adjusts trust by eta times the
/// perceived utility change. Clamped to [0, 1]; the caller commits the
/// returned value.
pub fn update_influence(
    profile: &HumanProfile,
    space: &StateSpace,
    x_idx: usize,
    suggestion: HumanAction,
    form: TrustForm,
) -> Result<f64> {
    let Some(pos) = space.action_position(x_idx, suggestion) else {
        return Err(Error::Contract(format!(
            "suggested action {suggestion} illegal in state {x_idx}"
        )));
    };
    let next = space.successors(x_idx)[pos];
    let delta = match form {
        TrustForm::UtilityGain => profile.utility.utility(next) - profile.utility.utility(x_idx),
        TrustForm::Literal => profile.utility.max_q(next) - profile.utility.max_q(x_idx),
    };
    Ok((profile.theta + profile.eta * delta).clamp(0.0, 1.0))
}

/// Derives an independent sub-seed from a master seed and a tag path.
/// SplitMix64 finalizer per step; stable across platforms.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut z = master;
    for &tag in tags {
        z = z.wrapping_add(0x9e3779b97f4a7c15).wrapping_add(tag.wrapping_mul(0xff51afd7ed558ccd));
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^= z >> 31;
    }
    z
}

/// Samples a worker pool; deterministic given `seed`. Each worker draws
/// beta, theta, sigma uniformly from the configured ranges plus an
/// independent frozen noisy utility table.
pub fn sample_pool(
    cfg: &PoolConfig,
    cost: &CostTable,
    space: &StateSpace,
    seed: u64,
) -> Result<Vec<HumanProfile>> {
    cfg.validate()?;
    (0..cfg.pool_size)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x706f6f6c, i as u64]));
            let beta = sample_range(&mut rng, cfg.beta_range);
            let theta = sample_range(&mut rng, cfg.theta_range);
            let sigma = sample_range(&mut rng, cfg.sigma_range);
            let utility_seed = derive_seed(seed, &[0x6e6f6973, i as u64]);
            let utility = make_noisy_utility(cost, space, sigma, utility_seed)?;
            HumanProfile::new(beta, theta, cfg.eta, utility)
        })
        .collect()
}

fn sample_range(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Inverse-CDF draw over the legal-action ordering of `x_idx`.
pub fn sample_action(
    space: &StateSpace,
    x_idx: usize,
    distribution: &[f64],
    rng: &mut ChaCha8Rng,
) -> HumanAction {
    let legal = space.legal(x_idx);
    debug_assert_eq!(legal.len(), distribution.len());
    let u: f64 = rng.random_range(0.0..1.0);
    let mut acc = 0.0;
    for (pos, &p) in distribution.iter().enumerate() {
        acc += p;
        if u < acc {
            return legal[pos];
        }
    }
    // Rounding: fall back to the last legal action.
    *legal.last().expect("non-terminal state has actions")
}
