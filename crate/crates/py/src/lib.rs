//! Python bindings: circuits and statevectors, the metric suite, run
//! configuration, training and checkpoint inference.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyIndexError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use qmvit::checkpoint::Checkpoint as CoreCheckpoint;
use qmvit::cli;
use qmvit::config::RunConfig as CoreConfig;
use qmvit::metrics::{self, ConfusionMatrix, MetricReport, ScoredPrediction};
use qmvit::pqc::ParamVector;
use qmvit::qsim::{self, Amplitude, Circuit as CoreCircuit, Gate, StateVector};
use qmvit::Error;

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Io { .. } | Error::Format { .. } => PyIOError::new_err(msg),
        Error::Index(_) => PyIndexError::new_err(msg),
        Error::Numeric(_) | Error::NonFinite(_) => PyRuntimeError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Little-endian statevector: qubit 0 is the least significant index bit.
#[pyclass(name = "State", module = "pyqmvit", skip_from_py_object)]
#[derive(Clone)]
struct PyState {
    inner: StateVector,
}

#[pymethods]
impl PyState {
    #[new]
    fn new(n_qubits: usize) -> PyResult<Self> {
        Ok(PyState { inner: StateVector::zero(n_qubits).map_err(py_err)? })
    }

    /// Builds a state from `(re, im)` pairs; the norm must be 1.
    #[staticmethod]
    fn from_amplitudes(amps: Vec<(f64, f64)>) -> PyResult<Self> {
        let v = amps.into_iter().map(|(re, im)| Amplitude::new(re, im)).collect();
        Ok(PyState { inner: StateVector::from_amplitudes(v).map_err(py_err)? })
    }

    #[getter]
    fn n_qubits(&self) -> usize {
        self.inner.n_qubits()
    }

    fn amplitudes(&self) -> Vec<(f64, f64)> {
        self.inner.amplitudes().iter().map(|a| (a.re, a.im)).collect()
    }

    fn probabilities(&self) -> Vec<f64> {
        self.inner.probabilities()
    }

    fn norm(&self) -> f64 {
        self.inner.norm()
    }

    fn expectation_z(&self, qubit: usize) -> PyResult<f64> {
        self.inner.expectation_z(qubit).map_err(py_err)
    }

    fn expectations_z(&self) -> Vec<f64> {
        self.inner.expectations_z()
    }

    fn __len__(&self) -> usize {
        self.inner.dim()
    }

    fn __repr__(&self) -> String {
        format!("State(n_qubits={})", self.inner.n_qubits())
    }
}

#[pyclass(name = "Circuit", module = "pyqmvit", skip_from_py_object)]
#[derive(Clone)]
struct PyCircuit {
    inner: CoreCircuit,
}

impl PyCircuit {
    fn push(&mut self, g: Gate) -> PyResult<()> {
        self.inner.push(g).map_err(py_err)
    }
}

#[pymethods]
impl PyCircuit {
    #[new]
    fn new(n_qubits: usize) -> Self {
        PyCircuit { inner: CoreCircuit::new(n_qubits) }
    }

    /// Parses the text listing written by `str(circuit)`.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(PyCircuit { inner: text.parse().map_err(py_err)? })
    }

    fn h(&mut self, q: usize) -> PyResult<()> {
        self.push(Gate::h(q))
    }

    fn rx(&mut self, q: usize, angle: f64) -> PyResult<()> {
        self.push(Gate::rx(q, angle))
    }

    fn ry(&mut self, q: usize, angle: f64) -> PyResult<()> {
        self.push(Gate::ry(q, angle))
    }

    fn rz(&mut self, q: usize, angle: f64) -> PyResult<()> {
        self.push(Gate::rz(q, angle))
    }

    fn cnot(&mut self, control: usize, target: usize) -> PyResult<()> {
        self.push(Gate::cnot(control, target))
    }

    #[getter]
    fn n_qubits(&self) -> usize {
        self.inner.n_qubits()
    }

    /// Runs from `init`, or from |0...0> when omitted.
    #[pyo3(signature = (init=None))]
    fn run(&self, init: Option<&PyState>) -> PyResult<PyState> {
        let start = match init {
            Some(s) => s.inner.clone(),
            None => StateVector::zero(self.inner.n_qubits()).map_err(py_err)?,
        };
        let inner = qsim::run_circuit(&self.inner, &start).map_err(py_err)?;
        Ok(PyState { inner })
    }

    /// Dense unitary as rows of `(re, im)`; limited to small registers.
    fn unitary(&self) -> PyResult<Vec<Vec<(f64, f64)>>> {
        let u = qsim::dense_unitary(&self.inner).map_err(py_err)?;
        Ok((0..u.dim())
            .map(|r| (0..u.dim()).map(|c| u.get(r, c)).map(|a| (a.re, a.im)).collect())
            .collect())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Circuit(n_qubits={}, gates={})", self.inner.n_qubits(), self.inner.len())
    }
}

/// Text-keyed run configuration with per-model presets.
#[pyclass(name = "RunConfig", module = "pyqmvit", skip_from_py_object)]
#[derive(Clone)]
struct PyRunConfig {
    inner: CoreConfig,
}

#[pymethods]
impl PyRunConfig {
    /// Preset for `model`, then each override applied in key order.
    #[new]
    #[pyo3(signature = (model="qmvit", **overrides))]
    fn new(model: &str, overrides: Option<BTreeMap<String, Bound<'_, PyAny>>>) -> PyResult<Self> {
        let mut inner = CoreConfig::for_model(model.parse().map_err(py_err)?);
        for (k, v) in overrides.unwrap_or_default() {
            inner.set(&k, &v.str()?.to_string_lossy()).map_err(py_err)?;
        }
        inner.validate().map_err(py_err)?;
        Ok(PyRunConfig { inner })
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(PyRunConfig { inner: CoreConfig::parse_text(text).map_err(py_err)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyRunConfig { inner: CoreConfig::load(&path).map_err(py_err)? })
    }

    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.inner.set(key, value).map_err(py_err)
    }

    #[getter]
    fn model(&self) -> String {
        self.inner.model.to_string()
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn __repr__(&self) -> String {
        format!("RunConfig(model={})", self.inner.model)
    }
}

#[pyclass(name = "Checkpoint", module = "pyqmvit")]
struct PyCheckpoint {
    inner: CoreCheckpoint,
}

#[pymethods]
impl PyCheckpoint {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyCheckpoint { inner: CoreCheckpoint::load(&path).map_err(py_err)? })
    }

    #[getter]
    fn config(&self) -> PyRunConfig {
        PyRunConfig { inner: self.inner.config.clone() }
    }

    fn array_names(&self) -> Vec<String> {
        self.inner.arrays.iter().map(|a| a.name.clone()).collect()
    }

    /// `(shape, flat values)` of a stored array.
    fn array(&self, name: &str) -> PyResult<(Vec<usize>, Vec<f64>)> {
        let a = self.inner.array(name).map_err(py_err)?;
        Ok((a.shape.clone(), a.data.clone()))
    }

    /// JSON with `class`, `probabilities` and `edible` for one PPM image.
    fn predict(&self, image: PathBuf) -> PyResult<String> {
        cli::predict_json(&self.inner, &image).map_err(py_err)
    }

    /// Metrics JSON over every manifest row; also writes report files when
    /// `out` is given.
    #[pyo3(signature = (manifest, out=None))]
    fn evaluate(&self, manifest: PathBuf, out: Option<PathBuf>) -> PyResult<String> {
        cli::eval_checkpoint(&self.inner, &manifest, out.as_deref()).map_err(py_err)
    }

    /// Gate listing of the first attention circuit with its trained angles.
    fn export_circuit(&self) -> PyResult<PyCircuit> {
        let t = self.inner.array("blocks.0.heads.0.theta_q").map_err(py_err)?;
        let theta = ParamVector(t.data.clone());
        let (_, inner) = cli::export_circuit(&self.inner.config, Some(&theta)).map_err(py_err)?;
        Ok(PyCircuit { inner })
    }
}

/// Trains per `config`, writes the run directory and returns the final
/// training-set metrics as JSON.
#[pyfunction]
fn train(py: Python<'_>, config: &PyRunConfig, out_dir: PathBuf) -> PyResult<String> {
    let cfg = config.inner.clone();
    let out = py
        .detach(|| qmvit::train::run_train(&cfg, &out_dir, &mut |_| {}))
        .map_err(py_err)?;
    serde_json::to_string(&out.train_eval.report.values()).map_err(json_err)
}

/// Writes the synthetic toyset and its `manifest.csv` under `out_dir`.
#[pyfunction]
#[pyo3(signature = (out_dir, seed=7, classes=4, per_class=32, size=32))]
fn make_toyset(out_dir: PathBuf, seed: u64, classes: usize, per_class: usize, size: usize) -> PyResult<PathBuf> {
    cli::make_toyset(seed, classes, per_class, size, &out_dir).map_err(py_err)?;
    Ok(out_dir.join("manifest.csv"))
}

/// Metric dictionary from hard predictions, plus curve areas when class
/// probabilities are supplied.
#[pyfunction]
#[pyo3(signature = (preds, labels, n_classes, probabilities=None))]
fn classification_metrics(
    preds: Vec<usize>,
    labels: Vec<usize>,
    n_classes: usize,
    probabilities: Option<Vec<Vec<f64>>>,
) -> PyResult<BTreeMap<&'static str, f64>> {
    let cm = metrics::confusion(&preds, &labels, n_classes).map_err(py_err)?;
    let scored = match probabilities {
        Some(p) => {
            if p.len() != labels.len() {
                return Err(PyValueError::new_err("one probability row per label"));
            }
            let s = p
                .into_iter()
                .zip(&labels)
                .map(|(row, &y)| ScoredPrediction::new(row, y))
                .collect::<Result<Vec<_>, _>>()
                .map_err(py_err)?;
            Some(s)
        }
        None => None,
    };
    let report = MetricReport::from_confusion(&cm, scored.as_deref()).map_err(py_err)?;
    Ok(report.values())
}

#[pyfunction]
fn confusion_matrix(preds: Vec<usize>, labels: Vec<usize>, n_classes: usize) -> PyResult<Vec<Vec<u64>>> {
    Ok(metrics::confusion(&preds, &labels, n_classes).map_err(py_err)?.rows())
}

#[pyfunction]
fn mcc(rows: Vec<Vec<u64>>) -> PyResult<f64> {
    Ok(metrics::mcc(&ConfusionMatrix::from_rows(&rows).map_err(py_err)?))
}

#[pyfunction]
fn roc_auc(scores: Vec<f64>, positive: Vec<bool>) -> PyResult<f64> {
    metrics::roc_auc_binary(&scores, &positive).map_err(py_err)
}

#[pyfunction]
fn pr_auc(scores: Vec<f64>, positive: Vec<bool>) -> PyResult<f64> {
    metrics::pr_auc_binary(&scores, &positive).map_err(py_err)
}

#[pymodule]
fn pyqmvit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyState>()?;
    m.add_class::<PyCircuit>()?;
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyCheckpoint>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(make_toyset, m)?)?;
    m.add_function(wrap_pyfunction!(classification_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(confusion_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(mcc, m)?)?;
    m.add_function(wrap_pyfunction!(roc_auc, m)?)?;
    m.add_function(wrap_pyfunction!(pr_auc, m)?)?;
    Ok(())
}
