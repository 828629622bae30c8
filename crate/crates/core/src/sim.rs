//! Seeded episode execution, experiment sweeps, and aggregation.
//!
//! Each timestep follows the interaction ordering of the underlying
//! model: the robot decides, a suggested-to worker's trust (and the
//! robot's belief about it) drifts first, every unfinished worker then
//! acts, the robot observes the actions and refreshes its beliefs, and
//! the environment states advance. Everything is deterministic given
//! the episode seed; compared policies share seeds (common random
//! numbers).

use std::collections::BTreeMap;
use std::io::Write;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::assist::{build_model, solve_qmdp, AssistPolicy, HeuristicMode, RewardConfig};
use crate::belief::{
    advance_theta, init_belief_in_range, update, BehaviorBelief, BehaviorGrid, GridConfig,
};
use crate::domain::{parse_instance, InstanceDoc, KitInstance, StateSpace, DEFAULT_STATE_CAP};
use crate::human::{
    action_distribution, derive_seed, influenced_distribution, sample_action, sample_pool,
    update_influence, HumanProfile, PoolConfig, TrustForm,
};
use crate::planner::{solve_cost_to_go, CostTable};
use crate::policies::{attention_step, none_step, reactive_step, PolicyKind, RobotDecision, RobotState};
use crate::{Error, Result};

const TAG_TEAM: u64 = 0x7465616d;
const TAG_TRIAL: u64 = 0x7472616c;
const TAG_WORKER: u64 = 0x776b7231;

/// Full experiment configuration (the JSON config file).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Path to the instance document; ignored when `instance` is inline.
    pub instance_path: Option<String>,
    /// Inline instance document.
    pub instance: Option<InstanceDoc>,
    pub pool: PoolConfig,
    pub grid: GridConfig,
    pub rewards: RewardConfig,
    pub gamma: f64,
    pub tol: f64,
    /// Master seed for team selection and trial seeds.
    pub seed: u64,
    /// Seed for drawing the worker pool.
    pub pool_seed: u64,
    pub k_values: Vec<usize>,
    pub trials: usize,
    pub repetitions: usize,
    pub policies: Vec<PolicyKind>,
    pub heuristic: HeuristicMode,
    pub trust_form: TrustForm,
    pub step_cap: u32,
    pub state_cap: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            instance_path: None,
            instance: None,
            pool: PoolConfig::default(),
            grid: GridConfig::default(),
            rewards: RewardConfig::default(),
            gamma: 0.95,
            tol: 1e-9,
            seed: 0,
            pool_seed: 1,
            k_values: (1..=6).collect(),
            trials: 5,
            repetitions: 6,
            policies: vec![PolicyKind::Attention, PolicyKind::Reactive, PolicyKind::None],
            heuristic: HeuristicMode::Qvalue,
            trust_form: TrustForm::UtilityGain,
            step_cap: 500,
            state_cap: DEFAULT_STATE_CAP,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.pool.validate()?;
        if self.k_values.is_empty() || self.k_values.iter().any(|&k| k == 0) {
            return Err(Error::Config("k_values must be non-empty positive".into()));
        }
        if let Some(&k) = self.k_values.iter().find(|&&k| k > self.pool.pool_size) {
            return Err(Error::Config(format!(
                "K = {k} exceeds pool size {}",
                self.pool.pool_size
            )));
        }
        if self.trials == 0 || self.repetitions == 0 {
            return Err(Error::Config("trials and repetitions must be >= 1".into()));
        }
        if self.policies.is_empty() {
            return Err(Error::Config("at least one policy required".into()));
        }
        if self.step_cap == 0 {
            return Err(Error::Config("step_cap must be > 0".into()));
        }
        Ok(())
    }

    fn load_instance(&self) -> Result<KitInstance> {
        match (&self.instance, &self.instance_path) {
            (Some(doc), _) => {
                let text = serde_json::to_string(doc)?;
                parse_instance(&text)
            }
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path)?;
                parse_instance(&text)
            }
            (None, None) => Err(Error::Config(
                "config needs either `instance` or `instance_path`".into(),
            )),
        }
    }
}

/// Solved artifacts shared by every episode of an experiment.
///
/// The assistance policy is solved once and shared across all workers
/// on the instance.
pub struct Prepared {
    pub cfg: ExperimentConfig,
    pub inst: KitInstance,
    pub space: StateSpace,
    pub cost: CostTable,
    pub grid: BehaviorGrid,
    pub policy: AssistPolicy,
    pub pool: Vec<HumanProfile>,
}

/// Loads the instance, solves the cost table and assistance policy, and
/// draws the worker pool.
pub fn prepare(cfg: ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let inst = cfg.load_instance()?;
    let space = StateSpace::enumerate(&inst, cfg.state_cap)?;
    let cost = solve_cost_to_go(&inst, &space)?;
    let grid = BehaviorGrid::new(cfg.pool.beta_range, cfg.grid)?;
    let model = build_model(&inst, &space, &cost, &grid, &cfg.rewards, cfg.pool.eta, cfg.gamma)?;
    let policy = solve_qmdp(&model, cfg.tol)?;
    let pool = sample_pool(&cfg.pool, &cost, &space, cfg.pool_seed)?;
    Ok(Prepared { cfg, inst, space, cost, grid, policy, pool })
}

/// One episode's metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub human_actions: Vec<u32>,
    pub interventions: Vec<u32>,
    pub relocations: u32,
    pub steps: u32,
    pub discounted_return: f64,
    pub completed: bool,
}

/// Optional JSON-lines step trace entry.
#[derive(Debug, Serialize)]
struct TraceStep<'a> {
    t: u32,
    decision: String,
    actions: Vec<Option<String>>,
    states: &'a [usize],
    beliefs_max_cell: Vec<usize>,
}

/// Runs one seeded episode.
///
/// `profiles` are the team's ground-truth parameters; their theta values
/// evolve privately inside the episode. Deterministic given `seed`.
pub fn run_episode(
    p: &Prepared,
    team: &[HumanProfile],
    policy_kind: PolicyKind,
    seed: u64,
) -> Result<RunRecord> {
    run_episode_traced(p, team, policy_kind, seed, None)
}

/// [`run_episode`] with an optional JSON-lines per-step trace sink.
pub fn run_episode_traced(
    p: &Prepared,
    team: &[HumanProfile],
    policy_kind: PolicyKind,
    seed: u64,
    mut trace: Option<&mut dyn Write>,
) -> Result<RunRecord> {
    if team.is_empty() {
        return Err(Error::Config("episode needs at least one worker".into()));
    }
    let k_count = team.len();
    let space = &p.space;
    let mut profiles: Vec<HumanProfile> = team.to_vec();
    let mut xs: Vec<usize> = vec![space.initial(); k_count];
    // The robot's prior covers the advertised pool range of theta; the
    // grid still spans [0, 1] so trust drift can leave the range.
    let mut beliefs: Vec<BehaviorBelief> =
        vec![init_belief_in_range(&p.grid, p.cfg.pool.theta_range); k_count];
    // The robot begins alongside the first worker; a docked start could
    // never amortize its first relocation against the one-step gains.
    let mut robot = RobotState { location: Some(0) };
    let mut rngs: Vec<ChaCha8Rng> = (0..k_count)
        .map(|k| ChaCha8Rng::seed_from_u64(derive_seed(seed, &[TAG_WORKER, k as u64])))
        .collect();

    let mut record = RunRecord {
        human_actions: vec![0; k_count],
        interventions: vec![0; k_count],
        relocations: 0,
        steps: 0,
        discounted_return: 0.0,
        completed: false,
    };
    // Previous-step observations for the reactive baseline.
    let mut prev_xs: Vec<usize> = xs.clone();
    let mut prev_actions: Vec<Option<crate::domain::HumanAction>> = vec![None; k_count];
    let mut discount = 1.0f64;

    loop {
        if xs.iter().all(|&x| space.is_terminal(x)) {
            record.completed = true;
            break;
        }
        if record.steps >= p.cfg.step_cap {
            break;
        }

        let decision = match policy_kind {
            PolicyKind::None => none_step(),
            PolicyKind::Reactive => {
                reactive_step(space, &p.cost, &prev_xs, &prev_actions, &xs, robot)
            }
            PolicyKind::Attention => attention_step(
                space,
                &beliefs,
                &xs,
                robot,
                &p.policy,
                &p.cfg.rewards,
                p.cfg.heuristic,
            )?,
        };

        let mut step_reward = 0.0;
        let mut suggested: Option<(usize, crate::domain::HumanAction)> = None;
        if let RobotDecision::Assist { worker, suggestion } = decision {
            if robot.location != Some(worker) {
                record.relocations += 1;
                step_reward -= p.cfg.rewards.move_cost;
                robot.location = Some(worker);
            }
            record.interventions[worker] += 1;
            step_reward -= p.cfg.rewards.intervention_cost;
            // The worker's private trust shifts before they act.
            profiles[worker].theta = update_influence(
                &profiles[worker],
                space,
                xs[worker],
                suggestion,
                p.cfg.trust_form,
            )?;
            // So does the robot's model of it.
            beliefs[worker] = advance_theta(
                &beliefs[worker],
                space,
                &p.cost,
                xs[worker],
                suggestion,
                p.cfg.pool.eta,
                &p.grid,
            )?;
            suggested = Some((worker, suggestion));
        }

        // Every unfinished worker acts.
        let mut actions: Vec<Option<crate::domain::HumanAction>> = vec![None; k_count];
        for k in 0..k_count {
            if space.is_terminal(xs[k]) {
                continue;
            }
            let dist = match suggested {
                Some((w, a)) if w == k => influenced_distribution(&profiles[k], space, xs[k], a)?,
                _ => action_distribution(&profiles[k], space, xs[k])?,
            };
            let a = sample_action(space, xs[k], &dist, &mut rngs[k]);
            actions[k] = Some(a);
            record.human_actions[k] += 1;
            step_reward -= p.cfg.rewards.step_cost;
        }

        // Observe actions, refresh beliefs (pre-transition states).
        for k in 0..k_count {
            let Some(a) = actions[k] else { continue };
            let sug = match suggested {
                Some((w, s)) if w == k => Some(s),
                _ => None,
            };
            let (next_belief, reset) =
                update(&beliefs[k], space, &p.cost, xs[k], sug, a, &p.grid)?;
            if reset {
                log::warn!("belief underflow for worker {k} at step {}, reset to uniform", record.steps);
            }
            beliefs[k] = next_belief;
        }

        if let Some(sink) = trace.as_deref_mut() {
            let entry = TraceStep {
                t: record.steps,
                decision: match decision {
                    RobotDecision::Idle => "idle".into(),
                    RobotDecision::Assist { worker, suggestion } => {
                        format!("assist({worker}, {})", suggestion.describe(&p.inst))
                    }
                },
                actions: actions
                    .iter()
                    .map(|a| a.map(|a| a.describe(&p.inst)))
                    .collect(),
                states: &xs,
                beliefs_max_cell: beliefs
                    .iter()
                    .map(|b| {
                        b.probabilities()
                            .iter()
                            .enumerate()
                            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                            .map(|(c, _)| c)
                            .unwrap_or(0)
                    })
                    .collect(),
            };
            serde_json::to_writer(&mut *sink, &entry)?;
            writeln!(sink)?;
        }

        // Environment transitions.
        prev_xs = xs.clone();
        prev_actions = actions.clone();
        for k in 0..k_count {
            if let Some(a) = actions[k] {
                let pos = space.action_position(xs[k], a).expect("sampled action is legal");
                xs[k] = space.successors(xs[k])[pos];
            }
        }

        record.discounted_return += discount * step_reward;
        discount *= p.cfg.gamma;
        record.steps += 1;
    }
    Ok(record)
}

/// One CSV row of a sweep: a single worker within a single episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub run_id: u64,
    #[serde(rename = "K")]
    pub k: usize,
    pub policy: String,
    pub seed: u64,
    pub worker_id: usize,
    pub beta: f64,
    pub theta0: f64,
    pub sigma: f64,
    pub human_actions: u32,
    pub interventions: u32,
    pub relocations: u32,
    pub steps: u32,
    pub completed: bool,
    pub discounted_return: f64,
}

/// Runs the full experiment grid.
///
/// For each (K, repetition) a team of K distinct workers is drawn from
/// the pool; each trial seed is shared across every policy so the
/// policies face identical humans and noise.
pub fn sweep(p: &Prepared) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    let mut run_id = 0u64;
    for &k in &p.cfg.k_values {
        if k > p.pool.len() {
            return Err(Error::Config(format!("K = {k} exceeds pool size {}", p.pool.len())));
        }
        for rep in 0..p.cfg.repetitions {
            let mut team_rng = ChaCha8Rng::seed_from_u64(derive_seed(
                p.cfg.seed,
                &[TAG_TEAM, k as u64, rep as u64],
            ));
            let picks = rand::seq::index::sample(&mut team_rng, p.pool.len(), k).into_vec();
            let team: Vec<HumanProfile> = picks.iter().map(|&i| p.pool[i].clone()).collect();
            for trial in 0..p.cfg.trials {
                let trial_seed =
                    derive_seed(p.cfg.seed, &[TAG_TRIAL, k as u64, rep as u64, trial as u64]);
                for &policy in &p.cfg.policies {
                    let record = run_episode(p, &team, policy, trial_seed)?;
                    for (slot, &pool_idx) in picks.iter().enumerate() {
                        rows.push(SweepRow {
                            run_id,
                            k,
                            policy: policy.name().to_string(),
                            seed: trial_seed,
                            worker_id: pool_idx,
                            beta: p.pool[pool_idx].beta,
                            theta0: p.pool[pool_idx].theta,
                            sigma: p.pool[pool_idx].utility.sigma(),
                            human_actions: record.human_actions[slot],
                            interventions: record.interventions[slot],
                            relocations: record.relocations,
                            steps: record.steps,
                            completed: record.completed,
                            discounted_return: record.discounted_return,
                        });
                    }
                    run_id += 1;
                }
            }
        }
    }
    Ok(rows)
}

/// Per-(K, policy) aggregate over episode totals.
#[derive(Debug, Clone, Serialize)]
pub struct PolicySummary {
    #[serde(rename = "K")]
    pub k: usize,
    pub policy: String,
    pub runs: usize,
    pub mean_human_actions: f64,
    pub std_human_actions: f64,
    pub mean_interventions: f64,
    pub std_interventions: f64,
}

/// Episode-level totals keyed by (K, policy, seed).
pub fn episode_totals(rows: &[SweepRow]) -> BTreeMap<(usize, String, u64), (f64, f64)> {
    let mut totals: BTreeMap<(usize, String, u64), (f64, f64)> = BTreeMap::new();
    for row in rows {
        let entry = totals
            .entry((row.k, row.policy.clone(), row.seed))
            .or_insert((0.0, 0.0));
        entry.0 += f64::from(row.human_actions);
        entry.1 += f64::from(row.interventions);
    }
    totals
}

/// Mean and standard deviation of total human actions and interventions
/// per (K, policy).
pub fn aggregate(rows: &[SweepRow]) -> Result<Vec<PolicySummary>> {
    if rows.is_empty() {
        return Err(Error::Contract("aggregate over empty record set".into()));
    }
    let totals = episode_totals(rows);
    let mut groups: BTreeMap<(usize, String), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ((k, policy, _seed), (actions, interventions)) in totals {
        let entry = groups.entry((k, policy)).or_default();
        entry.0.push(actions);
        entry.1.push(interventions);
    }
    Ok(groups
        .into_iter()
        .map(|((k, policy), (actions, interventions))| {
            let (ma, sa) = mean_std(&actions);
            let (mi, si) = mean_std(&interventions);
            PolicySummary {
                k,
                policy,
                runs: actions.len(),
                mean_human_actions: ma,
                std_human_actions: sa,
                mean_interventions: mi,
                std_interventions: si,
            }
        })
        .collect())
}

/// Percentage reduction of `new` relative to `base`.
pub fn percent_reduction(base: f64, new: f64) -> f64 {
    100.0 * (base - new) / base
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Behavioral bands used for the per-category intervention analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorBand {
    LowExpertise,
    HighExpertise,
    LowInfluence,
    HighInfluence,
}

impl BehaviorBand {
    /// Band membership by initial parameters. A worker can fall in one
    /// expertise band and one influence band at the same time.
    pub fn matches(&self, beta: f64, theta0: f64) -> bool {
        match self {
            BehaviorBand::LowExpertise => (0.1..=0.5).contains(&beta),
            BehaviorBand::HighExpertise => (2.0..=2.5).contains(&beta),
            BehaviorBand::LowInfluence => (0.5..=0.55).contains(&theta0),
            BehaviorBand::HighInfluence => (0.8..=0.9).contains(&theta0),
        }
    }

    pub const ALL: [BehaviorBand; 4] = [
        BehaviorBand::LowExpertise,
        BehaviorBand::HighExpertise,
        BehaviorBand::LowInfluence,
        BehaviorBand::HighInfluence,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BehaviorBand::LowExpertise => "low_expertise",
            BehaviorBand::HighExpertise => "high_expertise",
            BehaviorBand::LowInfluence => "low_influence",
            BehaviorBand::HighInfluence => "high_influence",
        }
    }
}

/// Mean interventions received per worker-episode, per band and policy.
pub fn band_intervention_means(rows: &[SweepRow]) -> BTreeMap<(String, &'static str), f64> {
    let mut sums: BTreeMap<(String, &'static str), (f64, usize)> = BTreeMap::new();
    for row in rows {
        for band in BehaviorBand::ALL {
            if band.matches(row.beta, row.theta0) {
                let entry = sums.entry((row.policy.clone(), band.name())).or_insert((0.0, 0));
                entry.0 += f64::from(row.interventions);
                entry.1 += 1;
            }
        }
    }
    sums.into_iter()
        .map(|(key, (total, count))| (key, total / count as f64))
        .collect()
}

/// One-sided paired sign test: p-value for observing at least
/// `wins` of `wins + losses` successes under a fair coin. Ties are
/// dropped before calling.
pub fn sign_test_p(wins: u32, losses: u32) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    let ln_half = 0.5f64.ln();
    let mut p = 0.0;
    for k in wins..=n {
        p += (ln_choose(n, k) + f64::from(n) * ln_half).exp();
    }
    p.min(1.0)
}

fn ln_choose(n: u32, k: u32) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

fn ln_factorial(n: u32) -> f64 {
    (1..=n).map(|i| f64::from(i).ln()).sum()
}

/// Spearman rank correlation with average ranks on ties.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = xs.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mean) * (b - mean);
        vx += (a - mean).powi(2);
        vy += (b - mean).powi(2);
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx.sqrt() * vy.sqrt())
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = avg;
        }
        i = j + 1;
    }
    out
}

/// CSV header used by `write_rows`.
pub const ROWS_HEADER: &str = "run_id,K,policy,seed,worker_id,beta,theta0,sigma,human_actions,interventions,relocations,steps,completed,discounted_return";

/// Writes sweep rows as CSV with the fixed column order.
pub fn write_rows<W: Write>(mut w: W, rows: &[SweepRow]) -> Result<()> {
    writeln!(w, "{ROWS_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.run_id,
            r.k,
            r.policy,
            r.seed,
            r.worker_id,
            r.beta,
            r.theta0,
            r.sigma,
            r.human_actions,
            r.interventions,
            r.relocations,
            r.steps,
            r.completed,
            r.discounted_return
        )?;
    }
    Ok(())
}

/// Reads sweep rows back from CSV.
pub fn read_rows<R: std::io::Read>(reader: R) -> Result<Vec<SweepRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for result in rdr.deserialize() {
        let row: SweepRow =
            result.map_err(|e| Error::Config(format!("bad CSV row: {e}")))?;
        rows.push(row);
    }
    Ok(rows)
}

/// Writes the per-(K, policy) summary CSV.
pub fn write_summary<W: Write>(mut w: W, summaries: &[PolicySummary]) -> Result<()> {
    writeln!(
        w,
        "K,policy,runs,mean_human_actions,std_human_actions,mean_interventions,std_interventions"
    )?;
    for s in summaries {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            s.k,
            s.policy,
            s.runs,
            s.mean_human_actions,
            s.std_human_actions,
            s.mean_interventions,
            s.std_interventions
        )?;
    }
    Ok(())
}
