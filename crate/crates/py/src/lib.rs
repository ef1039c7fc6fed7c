//! Python bindings. Structured results cross the boundary as JSON and are
//! decoded with the stdlib `json` module on the Python side of the call.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

use sim::env::{virtual_reward, Environment as Env, Snapshot};
use sim::harness::{brute_force_oracle, run_entry, PlanEntry};
use sim::strategy::{ReshardingStrategy, StrategyKind};
use sim::trust::{build_gtt, LocalTrustTable};
use sim::txmatrix::{cst_stats as stats, TransactionMatrix};
use sim::{validate_assignment, ShardAssignment};

fn err(e: sim::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (s,))
}

fn strategy(name: &str) -> PyResult<StrategyKind> {
    name.parse().map_err(err)
}

/// Simulation configuration. Construct from TOML or take the defaults.
#[pyclass(name = "SimConfig", skip_from_py_object)]
#[derive(Clone)]
struct PySimConfig {
    inner: sim::SimConfig,
}

#[pymethods]
impl PySimConfig {
    #[new]
    #[pyo3(signature = (toml = None))]
    fn new(toml: Option<&str>) -> PyResult<Self> {
        let inner = match toml {
            Some(s) => sim::SimConfig::from_toml_str(s).map_err(err)?,
            None => sim::SimConfig::default(),
        };
        Ok(Self { inner })
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(err)
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string()
    }

    #[getter]
    fn nodes(&self) -> usize {
        self.inner.network.n_total
    }

    #[setter]
    fn set_nodes(&mut self, v: usize) {
        self.inner.network.n_total = v;
    }

    #[getter]
    fn shards(&self) -> usize {
        self.inner.network.d_shards
    }

    #[setter]
    fn set_shards(&mut self, v: usize) {
        self.inner.network.d_shards = v;
    }

    #[getter]
    fn min_shard(&self) -> usize {
        self.inner.network.n_min
    }

    #[setter]
    fn set_min_shard(&mut self, v: usize) {
        self.inner.network.n_min = v;
    }

    #[getter]
    fn dishonest(&self) -> usize {
        self.inner.attack.h_dishonest
    }

    #[setter]
    fn set_dishonest(&mut self, v: usize) {
        self.inner.attack.h_dishonest = v;
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.network.seed
    }

    #[setter]
    fn set_seed(&mut self, v: u64) {
        self.inner.network.seed = v;
    }

    fn __repr__(&self) -> String {
        let n = &self.inner.network;
        format!(
            "SimConfig(nodes={}, shards={}, min_shard={}, dishonest={}, seed={})",
            n.n_total, n.d_shards, n.n_min, self.inner.attack.h_dishonest, n.seed
        )
    }
}

/// A live simulation driven one episode at a time by a named strategy.
#[pyclass(name = "Environment", unsendable)]
struct PyEnvironment {
    env: Env,
    strategy: Box<dyn ReshardingStrategy>,
}

#[pymethods]
impl PyEnvironment {
    #[new]
    #[pyo3(signature = (config, strategy = "ppo"))]
    fn new(config: &PySimConfig, strategy: &str) -> PyResult<Self> {
        Ok(Self {
            env: Env::new(config.inner.clone()).map_err(err)?,
            strategy: self::strategy(strategy)?.build(),
        })
    }

    /// Runs one episode and returns its record as a dict (without the
    /// snapshot, see `snapshot`).
    fn step<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let rec = self.env.step_episode(self.strategy.as_mut()).map_err(err)?;
        let d = to_py(py, &rec)?;
        d.del_item("snapshot")?;
        Ok(d)
    }

    /// The current snapshot as a JSON string, accepted by `total_reward`
    /// and `oracle`.
    fn snapshot(&self) -> PyResult<String> {
        serde_json::to_string(&self.env.snapshot()).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn episode(&self) -> usize {
        self.env.state().episode
    }

    #[getter]
    fn assignment(&self) -> Vec<usize> {
        self.env.state().assignment.assignment().0.clone()
    }

    #[getter]
    fn gtt(&self) -> Vec<f64> {
        self.env.state().trust.gtt.g.clone()
    }

    #[getter]
    fn dishonest_nodes(&self) -> Vec<usize> {
        self.env.profiles().iter().filter(|p| p.is_dishonest()).map(|p| p.id).collect()
    }

    #[getter]
    fn strategy_calls(&self) -> usize {
        self.env.strategy_calls()
    }
}

fn snapshot_from(json: &str) -> PyResult<Snapshot> {
    serde_json::from_str(json).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Largest number of dishonest nodes a shard of `n` tolerates.
#[pyfunction]
fn f_intra(n: usize) -> usize {
    sim::risk::f_intra(n)
}

/// Network-wide tolerance for `n` nodes over `d` shards.
#[pyfunction]
fn f_total(n: usize, d: usize) -> usize {
    sim::risk::f_total(n, d)
}

/// `(phi_in, phi_cr, ratio)` for a symmetric transaction matrix.
#[pyfunction]
fn cst_stats(matrix: Vec<Vec<u64>>, assignment: Vec<usize>, shards: usize) -> PyResult<(u64, u64, f64)> {
    let tx = TransactionMatrix::from_rows(&matrix).map_err(err)?;
    let mut net = sim::SimConfig::default().network;
    (net.n_total, net.d_shards, net.n_min) = (assignment.len(), shards, 1);
    let a = validate_assignment(&ShardAssignment(assignment), &net).map_err(err)?;
    let s = stats(&tx, &a).map_err(err)?;
    Ok((s.phi_in, s.phi_cr, s.ratio))
}

/// Global trust from a local trust table given as rows.
#[pyfunction]
fn global_trust(rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let l = LocalTrustTable::from_rows(rows, 0).map_err(err)?;
    Ok(build_gtt(&l).g)
}

/// Reward breakdown of `proposal` against a snapshot JSON.
#[pyfunction]
fn total_reward<'py>(py: Python<'py>, snapshot: &str, proposal: Vec<usize>, config: &PySimConfig) -> PyResult<Bound<'py, PyAny>> {
    let snap = snapshot_from(snapshot)?;
    let b = virtual_reward(&snap, &ShardAssignment(proposal), &config.inner).map_err(err)?;
    to_py(py, &b)
}

/// Exhaustive optimum for a snapshot: `(assignment, breakdown)`.
#[pyfunction]
fn oracle<'py>(py: Python<'py>, snapshot: &str, config: &PySimConfig) -> PyResult<(Vec<usize>, Bound<'py, PyAny>)> {
    let snap = snapshot_from(snapshot)?;
    let (a, b) = brute_force_oracle(&snap, &config.inner).map_err(err)?;
    Ok((a.0, to_py(py, &b)?))
}

/// Runs `episodes` episodes and returns the per-episode CSV.
#[pyfunction]
fn run(strategy: &str, config: &PySimConfig, episodes: usize) -> PyResult<String> {
    let entry = PlanEntry::new(self::strategy(strategy)?, episodes, config.inner.clone());
    let out = run_entry(&entry).map_err(err)?;
    Ok(out.csv(config.inner.network.n_total))
}

#[pyfunction]
fn strategies() -> Vec<&'static str> {
    StrategyKind::ALL.iter().map(|s| s.as_str()).collect()
}

#[pymodule]
fn shardsim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySimConfig>()?;
    m.add_class::<PyEnvironment>()?;
    m.add_function(wrap_pyfunction!(f_intra, m)?)?;
    m.add_function(wrap_pyfunction!(f_total, m)?)?;
    m.add_function(wrap_pyfunction!(cst_stats, m)?)?;
    m.add_function(wrap_pyfunction!(global_trust, m)?)?;
    m.add_function(wrap_pyfunction!(total_reward, m)?)?;
    m.add_function(wrap_pyfunction!(oracle, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(strategies, m)?)?;
    Ok(())
}
