//! Planning engine and simulation harness for a single robot assisting
//! multiple human workers on a kit-fulfillment task.
//!
//! The crate is organized around the pipeline used by the simulator:
//!
//! - [`domain`]: the kit-fulfillment planning domain (instances, states,
//!   human actions, reachable-state enumeration).
//! - [`planner`]: exact cost-to-go tables over the domain and per-human
//!   noisy utility tables.
//! - [`human`]: the simulated human decision model (Boltzmann action
//!   selection, robot-influence reweighting, trust dynamics).
//! - [`belief`]: the robot's discretized Bayesian filter over each human's
//!   hidden expertise/influence parameters.
//! - [`assist`]: the per-human assistance POMDP and its QMDP-style solver.
//! - [`policies`]: top-level robot controllers (greedy attention-switching
//!   and the two baselines).
//! - [`sim`]: seeded episode execution, experiment sweeps, and metric
//!   aggregation.

use thiserror::Error;

pub mod assist;
pub mod belief;
pub mod domain;
pub mod human;
pub mod planner;
pub mod policies;
pub mod sim;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed instance or config document.
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),

    /// Structurally valid document violating a domain invariant.
    #[error("invalid instance: {0}")]
    Semantic(String),

    /// Reachable state count exceeded the configured cap.
    #[error("state space exceeds cap of {cap} states")]
    CapacityExceeded { cap: usize },

    /// An operation was called outside its contract.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A solver failed to produce a valid result.
    #[error("solver error: {0}")]
    Solver(String),

    /// Invalid experiment configuration.
    #[error("invalid config: {0}")]
    Config(String),

    /// Cache file unreadable or stale.
    #[error("cache rejected: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
