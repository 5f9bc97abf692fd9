//! Python bindings. Report types cross the boundary as plain dicts/lists
//! (via their serde form), model types as thin wrapper classes.

use std::path::PathBuf;

use detcap::capacity_harness::{self, AchievabilityTarget, RoundSchedule, SweepSettings};
use detcap::ensemble_analysis::{self, QuenchedEvaluator};
use detcap::{
    detection_core, verify, ConfigAlphabet, Configuration, FamilySpec, Scheme, SchemeFamily,
    StreamKey,
};
use pyo3::exceptions::{PyFileNotFoundError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn err(e: detcap::Error) -> PyErr {
    match e {
        detcap::Error::ConfigNotFound(_) => PyFileNotFoundError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn parse_spec(spec: &str) -> PyResult<FamilySpec> {
    spec.parse().map_err(err)
}

/// Finite distribution over detection probabilities.
#[pyclass(name = "Alphabet", module = "detcap_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyAlphabet(ConfigAlphabet);

#[pymethods]
impl PyAlphabet {
    #[new]
    #[pyo3(signature = (values, weights=None))]
    fn new(values: Vec<f64>, weights: Option<Vec<f64>>) -> PyResult<Self> {
        let a = match weights {
            Some(w) => ConfigAlphabet::new(values, w),
            None => ConfigAlphabet::uniform(values),
        };
        a.map(Self).map_err(err)
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.0.weights().to_vec()
    }

    #[getter]
    fn p_average(&self) -> f64 {
        self.0.p_average()
    }

    #[getter]
    fn p_min(&self) -> f64 {
        self.0.p_min()
    }

    /// `E (1-p)^w`.
    fn moment(&self, w: u32) -> PyResult<f64> {
        self.0.moment(w).map_err(err)
    }

    fn sample_configuration(&self, n: usize, seed: u64) -> PyResult<PyConfiguration> {
        self.0
            .sample_configuration(n, StreamKey::new(seed))
            .map(PyConfiguration)
            .map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Alphabet(values={:?}, weights={:?})",
            self.0.values(),
            self.0.weights()
        )
    }
}

#[pyclass(
    name = "Configuration",
    module = "detcap_py",
    frozen,
    skip_from_py_object
)]
#[derive(Clone)]
struct PyConfiguration(Configuration);

#[pymethods]
impl PyConfiguration {
    #[new]
    fn new(probs: Vec<f64>) -> PyResult<Self> {
        Configuration::from_probs_inferred(&probs)
            .map(Self)
            .map_err(err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn probs(&self) -> Vec<f64> {
        self.0.probs().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("Configuration(probs={:?})", self.0.probs())
    }
}

/// Detector assignment, 1-based on the Python side.
#[pyclass(name = "Scheme", module = "detcap_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyScheme(Scheme);

#[pymethods]
impl PyScheme {
    #[new]
    fn new(assignment: Vec<usize>, n: usize) -> PyResult<Self> {
        Scheme::from_one_based(&assignment, n)
            .map(Self)
            .map_err(err)
    }

    #[getter]
    fn r(&self) -> usize {
        self.0.r()
    }

    #[getter]
    fn assignment(&self) -> Vec<usize> {
        self.0.one_based()
    }

    fn __repr__(&self) -> String {
        format!("Scheme({:?})", self.0.one_based())
    }
}

/// A scheme family built from a spec string such as
/// `"block_repeat(2,uniform_injective)"`.
#[pyclass(name = "Family", module = "detcap_py", frozen)]
struct PyFamily {
    spec: FamilySpec,
    inner: SchemeFamily,
}

#[pymethods]
impl PyFamily {
    #[new]
    fn new(spec: &str, n: usize, r: usize) -> PyResult<Self> {
        let spec = parse_spec(spec)?;
        let inner = spec.build(n, r).map_err(err)?;
        Ok(Self { spec, inner })
    }

    #[staticmethod]
    fn catalog() -> Vec<String> {
        FamilySpec::catalog()
            .iter()
            .map(FamilySpec::label)
            .collect()
    }

    #[getter]
    fn label(&self) -> String {
        self.spec.label()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn r(&self) -> usize {
        self.inner.r()
    }

    fn sample(&self, seed: u64) -> PyScheme {
        PyScheme(self.inner.sample(StreamKey::new(seed)))
    }

    /// Probability that the first `k` picks are distinct.
    fn a_k(&self, k: usize) -> f64 {
        self.inner.exact_a(k)
    }

    /// Probability that two disjoint `k`-blocks share no detector.
    fn b_k(&self, k: usize) -> f64 {
        self.inner.exact_b(k)
    }

    fn __repr__(&self) -> String {
        format!(
            "Family({:?}, n={}, r={})",
            self.spec.label(),
            self.inner.n(),
            self.inner.r()
        )
    }
}

#[pyfunction]
fn detection_pmf(
    py: Python<'_>,
    scheme: &PyScheme,
    config: &PyConfiguration,
) -> PyResult<Py<PyAny>> {
    let d = detection_core::detection_pmf(&scheme.0, &config.0).map_err(err)?;
    to_py(py, &d)
}

#[pyfunction]
fn expected_truncated_time(scheme: &PyScheme, config: &PyConfiguration) -> PyResult<f64> {
    detection_core::expected_truncated_time(&scheme.0, &config.0).map_err(err)
}

/// Scheme-averaged `T(p)` and `S(p)` for one configuration.
#[pyfunction]
fn quenched_stats(
    py: Python<'_>,
    family: &PyFamily,
    config: &PyConfiguration,
) -> PyResult<Py<PyAny>> {
    let stats = QuenchedEvaluator::new(&family.inner)
        .and_then(|ev| ev.stats(&config.0))
        .map_err(err)?;
    to_py(py, &stats)
}

/// Exact configuration average of `T(p)`, or `None` when no closed form
/// fits the budget.
#[pyfunction]
fn exact_mean_t(family: &PyFamily, alphabet: &PyAlphabet) -> PyResult<Option<f64>> {
    ensemble_analysis::exact_mean_t(&family.inner, &alphabet.0).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (family, alphabet, replicates=10_000, seed=0))]
fn ensemble_report(
    py: Python<'_>,
    family: &PyFamily,
    alphabet: &PyAlphabet,
    replicates: usize,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let rep = py
        .detach(|| {
            ensemble_analysis::ensemble_report(
                &family.inner,
                &alphabet.0,
                replicates,
                StreamKey::new(seed),
            )
        })
        .map_err(err)?;
    to_py(py, &rep)
}

#[pyfunction]
#[pyo3(signature = (family, alphabet, k=3, replicates=10_000, seed=0))]
fn variance_sandwich(
    py: Python<'_>,
    family: &PyFamily,
    alphabet: &PyAlphabet,
    k: usize,
    replicates: usize,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let rep = py
        .detach(|| {
            ensemble_analysis::variance_sandwich_check(
                &family.inner,
                &alphabet.0,
                k,
                replicates,
                StreamKey::new(seed),
            )
        })
        .map_err(err)?;
    to_py(py, &rep)
}

#[pyfunction]
#[pyo3(signature = (alphabet, j_max=3, pair_max=3))]
fn lemma_constants(
    py: Python<'_>,
    alphabet: &PyAlphabet,
    j_max: usize,
    pair_max: usize,
) -> PyResult<Py<PyAny>> {
    let c = ensemble_analysis::lemma_constants(&alphabet.0, j_max, pair_max).map_err(err)?;
    to_py(py, &c)
}

/// Sweep one family over `grid` with `r = floor(sqrt(n))` and report the
/// capacity verdict.
#[pyfunction]
#[pyo3(signature = (spec, alphabet, grid, replicates=10_000, k=3, epsilon=0.05, delta=0.05, seed=0))]
#[allow(clippy::too_many_arguments)]
fn capacity_sweep(
    py: Python<'_>,
    spec: &str,
    alphabet: &PyAlphabet,
    grid: Vec<usize>,
    replicates: usize,
    k: usize,
    epsilon: f64,
    delta: f64,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let spec = parse_spec(spec)?;
    let target =
        AchievabilityTarget::new(1.0 / alphabet.0.p_average(), epsilon, delta).map_err(err)?;
    let settings = SweepSettings {
        schedule: RoundSchedule::Sqrt,
        target,
        replicates,
        k,
    };
    let v = py
        .detach(|| {
            capacity_harness::capacity_sweep(
                &spec,
                &alphabet.0,
                &grid,
                &settings,
                StreamKey::new(seed),
            )
        })
        .map_err(err)?;
    to_py(py, &v)
}

/// Run an experiment config (path or bundled name); returns the verdicts.
#[pyfunction]
#[pyo3(signature = (config, out, seed=None))]
fn run_experiment(
    py: Python<'_>,
    config: &str,
    out: PathBuf,
    seed: Option<u64>,
) -> PyResult<Py<PyAny>> {
    let cfg = capacity_harness::ExperimentConfig::load(config).map_err(err)?;
    let summary = py
        .detach(|| capacity_harness::run_experiment(&cfg, &out, seed))
        .map_err(err)?;
    to_py(py, &summary.verdicts)
}

/// Invariant suite; returns `(name, passed, detail)` triples.
#[pyfunction]
#[pyo3(signature = (fast=true, seed=0))]
fn verify_suite(py: Python<'_>, fast: bool, seed: u64) -> Vec<(String, bool, String)> {
    py.detach(|| verify::run_suite(fast, seed))
        .into_iter()
        .map(|c| (c.name.to_string(), c.passed, c.detail))
        .collect()
}

#[pymodule]
fn detcap_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyAlphabet>()?;
    m.add_class::<PyConfiguration>()?;
    m.add_class::<PyScheme>()?;
    m.add_class::<PyFamily>()?;
    m.add_function(wrap_pyfunction!(detection_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(expected_truncated_time, m)?)?;
    m.add_function(wrap_pyfunction!(quenched_stats, m)?)?;
    m.add_function(wrap_pyfunction!(exact_mean_t, m)?)?;
    m.add_function(wrap_pyfunction!(ensemble_report, m)?)?;
    m.add_function(wrap_pyfunction!(variance_sandwich, m)?)?;
    m.add_function(wrap_pyfunction!(lemma_constants, m)?)?;
    m.add_function(wrap_pyfunction!(capacity_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(verify_suite, m)?)?;
    Ok(())
}
