//! Python bindings: learners, datasets, ordering plans, metrics and the
//! matrix runner.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use streamcl::feature_store::{synthesize_gaussian_dataset, Dataset as CoreDataset, SynthConfig};
use streamcl::harness::{run_matrix, ExperimentConfig};
use streamcl::learners::{AnyLearner, Learner as _, LearnerConfig};
use streamcl::metrics::{self, LabeledPool, NetScoreParams};
use streamcl::stream_orderings::OrderingConfig;
use streamcl::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// An online learner. `config` is a learner kind such as `"slda"` or a
/// JSON object like `{"kind": "replay", "per_class_quota": 2}`.
#[pyclass(module = "pystreamcl")]
struct Learner {
    inner: AnyLearner,
}

#[pymethods]
impl Learner {
    #[new]
    #[pyo3(signature = (config, num_classes, dim, seed = 0))]
    fn new(config: &str, num_classes: usize, dim: usize, seed: u64) -> PyResult<Self> {
        let text = if config.trim_start().starts_with('{') {
            config.to_string()
        } else {
            serde_json::json!({ "kind": config }).to_string()
        };
        let config: LearnerConfig = serde_json::from_str(&text).map_err(json_err)?;
        let inner = config.build(num_classes, dim, seed).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn fit_one(&mut self, x: Vec<f64>, y: usize) -> PyResult<()> {
        self.inner.fit_one(&x, y).map_err(to_py)
    }

    /// Trains on rows in order.
    fn fit(&mut self, xs: Vec<Vec<f64>>, ys: Vec<usize>) -> PyResult<()> {
        if xs.len() != ys.len() {
            return Err(PyValueError::new_err("xs and ys differ in length"));
        }
        for (x, y) in xs.iter().zip(ys) {
            self.inner.fit_one(x, y).map_err(to_py)?;
        }
        Ok(())
    }

    fn scores(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.scores(&x).map_err(to_py)
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<usize> {
        self.inner.predict(&x).map_err(to_py)
    }

    /// Top-1 accuracy in percent, optionally over a subset of classes.
    #[pyo3(signature = (xs, ys, classes = None))]
    fn evaluate(
        &self,
        xs: Vec<Vec<f64>>,
        ys: Vec<usize>,
        classes: Option<Vec<u32>>,
    ) -> PyResult<f64> {
        let pool = LabeledPool::new(xs, ys).map_err(to_py)?;
        let classes = classes.map(|mut c| {
            c.sort_unstable();
            c.dedup();
            c
        });
        metrics::evaluate(&self.inner, &pool, classes.as_deref()).map_err(to_py)
    }

    fn stored_scalars(&self) -> u64 {
        self.inner.stored_scalars()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label()
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save_checkpoint(path).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: AnyLearner::load_checkpoint(path).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Learner({:?}, num_classes={}, dim={})",
            self.inner.label(),
            self.inner.num_classes(),
            self.inner.dim()
        )
    }
}

/// A feature file with its manifest.
#[pyclass(module = "pystreamcl")]
struct Dataset {
    inner: CoreDataset,
}

#[pymethods]
impl Dataset {
    #[staticmethod]
    fn open(features: &str, manifest: &str) -> PyResult<Self> {
        Ok(Self {
            inner: CoreDataset::open(features, manifest).map_err(to_py)?,
        })
    }

    /// Seeded Gaussian class mixture; keyword arguments override defaults.
    #[staticmethod]
    #[pyo3(signature = (classes = 10, dim = 32, train_per_class = 100, test_per_class = 50, seed = 0, shared_mean_norm = 10.0))]
    fn synthetic(
        classes: usize,
        dim: usize,
        train_per_class: usize,
        test_per_class: usize,
        seed: u64,
        shared_mean_norm: f64,
    ) -> PyResult<Self> {
        let cfg = SynthConfig {
            classes,
            dim,
            train_per_class,
            test_per_class,
            seed,
            shared_mean_norm,
            ..Default::default()
        };
        let (inner, _) = synthesize_gaussian_dataset(&cfg).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn write(&self, features: &str, manifest: &str) -> PyResult<()> {
        self.inner.write(features, manifest).map_err(to_py)?;
        Ok(())
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    fn __len__(&self) -> usize {
        self.inner.manifest().len()
    }

    /// `(features, label)` of a sample id.
    fn sample(&self, sample_id: u64) -> PyResult<(Vec<f64>, usize)> {
        self.inner.sample(sample_id).map_err(to_py)
    }

    fn train_ids(&self) -> Vec<u64> {
        self.inner.manifest().train().map(|r| r.sample_id).collect()
    }

    fn test_ids(&self) -> Vec<u64> {
        self.inner.manifest().test().map(|r| r.sample_id).collect()
    }

    /// An ordering plan as a JSON string. `ordering` is a kind such as
    /// `"class_iid"` or a JSON object like `{"kind": "k_shot_class_iid", "k": 5}`.
    fn plan(&self, ordering: &str, seed: u64) -> PyResult<String> {
        let text = if ordering.trim_start().starts_with('{') {
            ordering.to_string()
        } else {
            serde_json::json!({ "kind": ordering }).to_string()
        };
        let cfg: OrderingConfig = serde_json::from_str(&text).map_err(json_err)?;
        let plan = cfg.make(self.inner.manifest(), seed).map_err(to_py)?;
        plan.to_json().map_err(to_py)
    }
}

/// `s * ln(a^alpha / (p^beta * c^gamma))`.
#[pyfunction]
#[pyo3(signature = (accuracy, params, seconds, alpha = 2.0, beta = 0.25, gamma = 0.25, scale = 20.0))]
fn netscore(
    accuracy: f64,
    params: f64,
    seconds: f64,
    alpha: f64,
    beta: f64,
    gamma: f64,
    scale: f64,
) -> PyResult<f64> {
    let np = NetScoreParams {
        alpha,
        beta,
        gamma,
        scale,
    };
    metrics::netscore(accuracy, params, seconds, np).map_err(to_py)
}

#[pyfunction]
fn harmonic_mean(a: f64, b: f64) -> f64 {
    metrics::harmonic_mean(a, b)
}

#[pyfunction]
fn mean_across_backbones(values: Vec<f64>) -> PyResult<f64> {
    metrics::mean_across_backbones(&values).map_err(to_py)
}

#[pyfunction]
fn normalize_for_summary(values: Vec<f64>) -> Vec<f64> {
    metrics::normalize_for_summary(&values)
}

/// Runs the matrix described by a config file; returns the records as a
/// JSON array and raises if any cell failed.
#[pyfunction]
#[pyo3(signature = (config_path, force = false))]
fn run_config(py: Python<'_>, config_path: &str, force: bool) -> PyResult<String> {
    let cfg = ExperimentConfig::load(config_path).map_err(to_py)?;
    let outcome = py.detach(|| run_matrix(&cfg, force)).map_err(to_py)?;
    if let Some(f) = outcome.failures.first() {
        return Err(PyValueError::new_err(format!(
            "{} cell(s) failed; first: {}: {}",
            outcome.failures.len(),
            f.cell,
            f.error
        )));
    }
    serde_json::to_string(&outcome.records).map_err(json_err)
}

#[pymodule]
fn pystreamcl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Learner>()?;
    m.add_class::<Dataset>()?;
    m.add_function(wrap_pyfunction!(netscore, m)?)?;
    m.add_function(wrap_pyfunction!(harmonic_mean, m)?)?;
    m.add_function(wrap_pyfunction!(mean_across_backbones, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_for_summary, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
