//! Python bindings for the attnswitch planning engine.
//!
//! Exposes the instance/planner surface plus episode execution and the
//! experiment sweep. Configs cross the boundary as JSON strings;
//! results come back as JSON (records) or CSV (sweeps).

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use attnswitch_core::domain::{self, StateSpace, DEFAULT_STATE_CAP};
use attnswitch_core::planner::solve_cost_to_go;
use attnswitch_core::sim;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A parsed and validated kit-fulfillment instance with its solved
/// state space and cost-to-go table.
#[pyclass]
struct Instance {
    inst: domain::KitInstance,
    space: StateSpace,
    cost: attnswitch_core::planner::CostTable,
}

#[pymethods]
impl Instance {
    #[new]
    fn new(json: &str) -> PyResult<Self> {
        let inst = domain::parse_instance(json).map_err(value_err)?;
        let space = StateSpace::enumerate(&inst, DEFAULT_STATE_CAP).map_err(value_err)?;
        let cost = solve_cost_to_go(&inst, &space).map_err(value_err)?;
        Ok(Instance { inst, space, cost })
    }

    /// Number of reachable environment states.
    fn state_count(&self) -> usize {
        self.space.len()
    }

    /// Optimal number of human actions from the initial state.
    fn optimal_cost(&self) -> u32 {
        self.cost.v(self.space.initial())
    }

    /// Item types in canonical order.
    fn items(&self) -> Vec<String> {
        self.inst.items().to_vec()
    }

    fn container_ids(&self) -> Vec<String> {
        self.inst.container_ids().to_vec()
    }

    /// Legal actions in the initial state, human-readable.
    fn initial_actions(&self) -> Vec<String> {
        self.space
            .legal(self.space.initial())
            .iter()
            .map(|a| a.describe(&self.inst))
            .collect()
    }

    fn canonical_json(&self) -> String {
        self.inst.canonical_json()
    }
}

/// The bundled two-container example instance as a JSON string.
#[pyfunction]
fn canonical_instance_json() -> &'static str {
    domain::CANONICAL_INSTANCE_JSON
}

/// Default experiment config as a JSON string (no instance set).
#[pyfunction]
fn default_config_json() -> PyResult<String> {
    serde_json::to_string_pretty(&sim::ExperimentConfig::default()).map_err(value_err)
}

/// Runs one seeded episode and returns the run record as JSON.
///
/// `config_json` is an experiment config; the team is the first `k`
/// workers of the pool.
#[pyfunction]
#[pyo3(signature = (config_json, policy, seed, k=1))]
fn run_episode(config_json: &str, policy: &str, seed: u64, k: usize) -> PyResult<String> {
    let cfg: sim::ExperimentConfig = serde_json::from_str(config_json).map_err(value_err)?;
    let policy = policy.parse().map_err(value_err)?;
    let prepared = sim::prepare(cfg).map_err(value_err)?;
    if k == 0 || k > prepared.pool.len() {
        return Err(PyValueError::new_err(format!("k must be in 1..={}", prepared.pool.len())));
    }
    let team = prepared.pool[..k].to_vec();
    let record = sim::run_episode(&prepared, &team, policy, seed).map_err(value_err)?;
    serde_json::to_string(&record).map_err(value_err)
}

/// Runs the full experiment sweep and returns the runs CSV as a string.
#[pyfunction]
fn sweep_csv(config_json: &str) -> PyResult<String> {
    let cfg: sim::ExperimentConfig = serde_json::from_str(config_json).map_err(value_err)?;
    let prepared = sim::prepare(cfg).map_err(value_err)?;
    let rows = sim::sweep(&prepared).map_err(value_err)?;
    let mut buf = Vec::new();
    sim::write_rows(&mut buf, &rows).map_err(value_err)?;
    String::from_utf8(buf).map_err(value_err)
}

#[pymodule]
fn attnswitch_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Instance>()?;
    m.add_function(wrap_pyfunction!(canonical_instance_json, m)?)?;
    m.add_function(wrap_pyfunction!(default_config_json, m)?)?;
    m.add_function(wrap_pyfunction!(run_episode, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_csv, m)?)?;
    Ok(())
}
