//! Command-line front end: solve cost tables, run single episodes,
//! sweep experiment grids, and summarize result CSVs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use attnswitch_core::domain::{parse_instance, StateSpace, DEFAULT_STATE_CAP};
use attnswitch_core::planner::{solve_cost_to_go, write_cost_cache};
use attnswitch_core::sim::{
    aggregate, band_intervention_means, percent_reduction, prepare, read_rows, run_episode_traced,
    sweep, write_rows, write_summary, ExperimentConfig, PolicySummary,
};

#[derive(Parser)]
#[command(name = "attnswitch", about = "Single-robot multi-human assistance planner and simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the cost-to-go table for an instance and cache it.
    Solve {
        /// Instance JSON file.
        #[arg(long)]
        instance: PathBuf,
        /// Output cache file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a single episode from an experiment config.
    Run {
        /// Experiment config JSON file.
        #[arg(long)]
        config: PathBuf,
        /// Episode seed.
        #[arg(long)]
        seed: u64,
        /// Team size (drawn from the head of the pool).
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Policy: attention | reactive | none.
        #[arg(long, default_value = "attention")]
        policy: String,
        /// Heuristic: qvalue | one-step.
        #[arg(long)]
        heuristic: Option<String>,
        /// Optional JSON-lines per-step trace file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the full experiment grid and write runs.csv / summary.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a previously written runs.csv directory.
    Report {
        /// Directory containing runs.csv.
        #[arg(long, name = "in")]
        input: PathBuf,
    },
}

fn main() -> anyhow::Result<()> {
    env_logger::init();
    match Cli::parse().command {
        Command::Solve { instance, out } => {
            let text = std::fs::read_to_string(&instance)
                .with_context(|| format!("reading {}", instance.display()))?;
            let inst = parse_instance(&text)?;
            let space = StateSpace::enumerate(&inst, DEFAULT_STATE_CAP)?;
            let cost = solve_cost_to_go(&inst, &space)?;
            write_cost_cache(&out, &inst, &cost)?;
            println!(
                "solved {} states, optimal cost from initial state: {}",
                space.len(),
                cost.v(space.initial())
            );
            println!("cache written to {}", out.display());
        }
        Command::Run { config, seed, k, policy, heuristic, trace } => {
            let mut cfg = load_config(&config)?;
            cfg.seed = seed;
            if let Some(h) = heuristic {
                cfg.heuristic = serde_json::from_value(serde_json::Value::String(h))?;
            }
            let policy = policy.parse()?;
            let p = prepare(cfg)?;
            if k == 0 || k > p.pool.len() {
                bail!("k must be in 1..={}", p.pool.len());
            }
            let team = p.pool[..k].to_vec();
            let record = match trace {
                Some(path) => {
                    let mut sink = BufWriter::new(File::create(&path)?);
                    let r = run_episode_traced(&p, &team, policy, seed, Some(&mut sink))?;
                    sink.flush()?;
                    r
                }
                None => run_episode_traced(&p, &team, policy, seed, None)?,
            };
            println!("{}", serde_json::to_string_pretty(&record)?);
        }
        Command::Sweep { config, out } => {
            let cfg = load_config(&config)?;
            let p = prepare(cfg)?;
            let rows = sweep(&p)?;
            std::fs::create_dir_all(&out)?;
            let runs_path = out.join("runs.csv");
            write_rows(BufWriter::new(File::create(&runs_path)?), &rows)?;
            let summaries = aggregate(&rows)?;
            write_summary(BufWriter::new(File::create(out.join("summary.csv"))?), &summaries)?;
            println!("{} episodes written to {}", rows.len(), runs_path.display());
            print_report(&summaries, &rows);
        }
        Command::Report { input } => {
            let runs_path = input.join("runs.csv");
            let rows = read_rows(File::open(&runs_path).with_context(|| {
                format!("reading {}", runs_path.display())
            })?)?;
            let summaries = aggregate(&rows)?;
            write_summary(BufWriter::new(File::create(input.join("summary.csv"))?), &summaries)?;
            print_report(&summaries, &rows);
        }
    }
    Ok(())
}

fn load_config(path: &PathBuf) -> anyhow::Result<ExperimentConfig> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)?;
    Ok(cfg)
}

fn print_report(summaries: &[PolicySummary], rows: &[attnswitch_core::sim::SweepRow]) {
    println!("\n K policy      runs  actions (mean±std)   interventions (mean±std)");
    for s in summaries {
        println!(
            "{:2} {:<10} {:>5}  {:>8.2} ± {:<8.2}  {:>8.2} ± {:<8.2}",
            s.k,
            s.policy,
            s.runs,
            s.mean_human_actions,
            s.std_human_actions,
            s.mean_interventions,
            s.std_interventions
        );
    }

    // Overall reductions of the attention policy against the baselines.
    let mean_over = |policy: &str, f: &dyn Fn(&PolicySummary) -> f64| -> Option<f64> {
        let xs: Vec<f64> = summaries.iter().filter(|s| s.policy == policy).map(f).collect();
        (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
    };
    let actions = |s: &PolicySummary| s.mean_human_actions;
    let interventions = |s: &PolicySummary| s.mean_interventions;
    if let (Some(attn), Some(none)) = (mean_over("attention", &actions), mean_over("none", &actions))
    {
        println!(
            "\nhuman-action reduction, attention vs none:     {:6.2}%",
            percent_reduction(none, attn)
        );
    }
    if let (Some(attn), Some(reactive)) =
        (mean_over("attention", &actions), mean_over("reactive", &actions))
    {
        println!(
            "human-action reduction, attention vs reactive: {:6.2}%",
            percent_reduction(reactive, attn)
        );
    }
    if let (Some(attn), Some(reactive)) = (
        mean_over("attention", &interventions),
        mean_over("reactive", &interventions),
    ) {
        println!(
            "intervention reduction, attention vs reactive: {:6.2}%",
            percent_reduction(reactive, attn)
        );
    }

    let bands = band_intervention_means(rows);
    if !bands.is_empty() {
        println!("\nmean interventions per worker-episode by behavior band:");
        for ((policy, band), mean) in &bands {
            println!("  {policy:<10} {band:<15} {mean:7.2}");
        }
    }
}
