//! Python bindings for the ergodicity laboratory: finite-chain probes,
//! exact filter runs, the experiment runner, and the deterministic RNG, all
//! reachable from Python for scripting and cross-checking.

use pyo3::conversion::IntoPyObjectExt;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use ergolab::conditional::{inheritance_experiment, FiniteHMM};
use ergolab::experiment::{execute, parse_config, ExperimentKind};
use ergolab::filter::stability_run_exact;
use ergolab::markov::{
    beta_mixing_coeff, stationary, zero_two_probe, FiniteChain, Projection,
};
use ergolab::measure::Categorical;
use ergolab::models::fixtures::{fixture_names, make_fixture_with, Fixture};
use ergolab::rng::Stream;

/// Maps library errors to ValueError: every failure here is a bad argument
/// or a model rejecting its parameters.
fn value_err(e: ergolab::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Recursively converts a JSON value into native Python objects.
fn json_to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    match v {
        serde_json::Value::Null => py.None().into_bound_py_any(py),
        serde_json::Value::Bool(b) => b.into_bound_py_any(py),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_bound_py_any(py)
            } else if let Some(u) = n.as_u64() {
                u.into_bound_py_any(py)
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_bound_py_any(py)
            }
        }
        serde_json::Value::String(s) => s.into_bound_py_any(py),
        serde_json::Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            Ok(list.into_any())
        }
        serde_json::Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, val) in map {
                dict.set_item(k, json_to_py(py, val)?)?;
            }
            Ok(dict.into_any())
        }
    }
}

/// Names of the built-in finite fixtures, in catalog order.
#[pyfunction]
fn fixtures() -> Vec<String> {
    fixture_names().iter().map(|s| s.to_string()).collect()
}

/// Names of the experiment kinds the runner understands.
#[pyfunction]
fn experiments() -> Vec<String> {
    ExperimentKind::ALL
        .iter()
        .map(|k| k.as_str().to_string())
        .collect()
}

/// First `n` uniforms from the named deterministic stream, for reproducing
/// any run's randomness from another language.
#[pyfunction]
fn stream_uniforms(seed: u64, replica: u64, role: &str, n: usize) -> Vec<f64> {
    let mut s = Stream::new(seed, replica, role);
    (0..n).map(|_| s.uniform()).collect()
}

/// Parses and validates a TOML experiment config, raising ValueError with
/// the offending field or line on failure. Returns the experiment kind.
#[pyfunction]
fn validate_config(text: &str) -> PyResult<String> {
    let cfg = parse_config(text).map_err(value_err)?;
    Ok(cfg.kind.as_str().to_string())
}

/// Runs a TOML experiment config in memory and returns a dict with
/// `records` (list of row dicts), `summary` (the verdict data), and `csv`
/// (the canonical byte-stable rendering of the records).
#[pyfunction]
fn run_config<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyDict>> {
    let cfg = parse_config(text).map_err(value_err)?;
    let outcome = execute(&cfg).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let records = PyList::empty(py);
    for r in &outcome.records {
        let row = PyDict::new(py);
        row.set_item("experiment", &r.experiment)?;
        row.set_item("replica", r.replica)?;
        row.set_item("step", r.step)?;
        row.set_item("metric", &r.metric)?;
        row.set_item("value", r.value)?;
        row.set_item("metadata", &r.metadata)?;
        records.append(row)?;
    }
    let out = PyDict::new(py);
    out.set_item("records", records)?;
    out.set_item("summary", json_to_py(py, &outcome.summary)?)?;
    out.set_item("csv", ergolab::experiment::render_csv(&outcome.records))?;
    Ok(out)
}

/// A finite Markov chain from the fixture catalog (product fixtures are
/// realized to their full joint chain).
#[pyclass]
struct Chain {
    chain: FiniteChain,
}

#[pymethods]
impl Chain {
    /// Builds the named fixture; `param` is the flip probability for the
    /// flip families. Observation models are rejected — use `Hmm`.
    #[new]
    #[pyo3(signature = (name, param=None))]
    fn new(name: &str, param: Option<f64>) -> PyResult<Self> {
        match make_fixture_with(name, param).map_err(value_err)? {
            Fixture::Chain { chain, .. } => Ok(Chain { chain }),
            Fixture::Product { product, .. } => Ok(Chain {
                chain: product.realize().map_err(value_err)?,
            }),
            Fixture::Hmm { .. } => Err(PyValueError::new_err(format!(
                "`{name}` is an observation model; construct it with Hmm"
            ))),
        }
    }

    /// Builds a chain from an explicit row-stochastic matrix.
    #[staticmethod]
    fn from_matrix(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let mat = ergolab::linalg::Mat::from_rows(&rows).map_err(value_err)?;
        Ok(Chain {
            chain: FiniteChain::new(mat).map_err(value_err)?,
        })
    }

    fn n_states(&self) -> usize {
        self.chain.n_states()
    }

    /// The unique stationary law (raises if the chain has several).
    fn stationary(&self) -> PyResult<Vec<f64>> {
        Ok(stationary(&self.chain).map_err(value_err)?.probs().to_vec())
    }

    /// Stationarily weighted one-row mixing coefficient at lag `n`.
    fn beta(&self, n: u64) -> PyResult<f64> {
        beta_mixing_coeff(&self.chain, n).map_err(value_err)
    }

    /// `beta(n)` for n = 0..=n_max.
    fn beta_curve(&self, n_max: u64) -> PyResult<Vec<f64>> {
        (0..=n_max)
            .map(|n| beta_mixing_coeff(&self.chain, n).map_err(value_err))
            .collect()
    }

    /// Worst-pair window-TV dichotomy probe on the full state (no
    /// projection). Returns locally_irreducible, witness_n, trace, k_used.
    #[pyo3(signature = (horizon, alpha=1.0, k_window=8))]
    fn zero_two<'py>(
        &self,
        py: Python<'py>,
        horizon: usize,
        alpha: f64,
        k_window: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let proj = Projection::identity(self.chain.n_states()).map_err(value_err)?;
        let report =
            zero_two_probe(&self.chain, &proj, horizon, k_window, alpha).map_err(value_err)?;
        let out = PyDict::new(py);
        out.set_item("locally_irreducible", report.locally_irreducible)?;
        out.set_item("witness_n", report.witness_n)?;
        out.set_item("trace", report.tv_trace)?;
        out.set_item("k_used", report.k_used)?;
        Ok(out)
    }
}

/// A finite hidden Markov model from the fixture catalog.
#[pyclass]
struct Hmm {
    hmm: FiniteHMM,
}

#[pymethods]
impl Hmm {
    /// Builds the named observation-model fixture; `param` is the blur for
    /// the revealing family.
    #[new]
    #[pyo3(signature = (name, param=None))]
    fn new(name: &str, param: Option<f64>) -> PyResult<Self> {
        match make_fixture_with(name, param).map_err(value_err)? {
            Fixture::Hmm { hmm, .. } => Ok(Hmm { hmm }),
            _ => Err(PyValueError::new_err(format!(
                "`{name}` is a plain chain; construct it with Chain"
            ))),
        }
    }

    fn n_hidden(&self) -> usize {
        self.hmm.n_hidden()
    }

    fn n_symbols(&self) -> usize {
        self.hmm.n_symbols()
    }

    /// Exact filter stability curve: runs two filters started from the two
    /// extreme point masses on one simulated observation path and returns
    /// [(step, tv)] rows. Data are generated from the stationary hidden
    /// marginal.
    #[pyo3(signature = (t_len, seed, replica=0))]
    fn filter_curve(&self, t_len: usize, seed: u64, replica: u64) -> PyResult<Vec<(usize, f64)>> {
        let m = self.hmm.n_hidden();
        let l = self.hmm.n_symbols();
        let mu = Categorical::point_mass(m, 0).map_err(value_err)?;
        let nu = Categorical::point_mass(m, m - 1).map_err(value_err)?;
        let pi = stationary(&self.hmm.joint_chain().map_err(value_err)?).map_err(value_err)?;
        let mut hidden = vec![0.0; m];
        for x in 0..m {
            for y in 0..l {
                hidden[x] += pi.probs()[x * l + y];
            }
        }
        let gamma = Categorical::new(hidden).map_err(value_err)?;
        let curve = stability_run_exact(&self.hmm, &mu, &nu, &gamma, t_len, seed, replica)
            .map_err(value_err)?;
        Ok(curve.rows().iter().map(|r| (r.n, r.distance)).collect())
    }

    /// Conditional-mixing inheritance table over sampled observation paths:
    /// worst-pair and mean conditional TV at each lag.
    fn inheritance<'py>(
        &self,
        py: Python<'py>,
        n_paths: usize,
        t_len: usize,
        lags: Vec<usize>,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let table =
            inheritance_experiment(&self.hmm, n_paths, t_len, &lags, seed).map_err(value_err)?;
        let out = PyDict::new(py);
        out.set_item("lags", table.lags)?;
        out.set_item("max_tv", table.max_tv)?;
        out.set_item("mean_tv", table.mean_tv)?;
        out.set_item("n_paths", table.n_paths)?;
        Ok(out)
    }
}

#[pymodule]
fn ergolab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(fixtures, m)?)?;
    m.add_function(wrap_pyfunction!(experiments, m)?)?;
    m.add_function(wrap_pyfunction!(stream_uniforms, m)?)?;
    m.add_function(wrap_pyfunction!(validate_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_class::<Chain>()?;
    m.add_class::<Hmm>()?;
    Ok(())
}
