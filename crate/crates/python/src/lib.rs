//! Python bindings. Series cross the boundary as nested lists shaped
//! `[steps][dims]`; configs and reports travel as plain dicts.

use std::path::PathBuf;

use dfa_esn::data::{self, LabeledSeries, SyntheticSpec};
use dfa_esn::harness::{run_training, LoadedSpec};
use dfa_esn::numerics::{self, Matrix, SeededRng};
use dfa_esn::reservoir;
use dfa_esn::trainer::{self, TrainConfig};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: dfa_esn::Error) -> PyErr {
    match e {
        dfa_esn::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(format!("{}: {e}", e.kind())),
    }
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: serde::de::DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn matrix_from_rows(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("ragged rows"));
    }
    let n = rows.len();
    Matrix::from_vec(n, cols, rows.into_iter().flatten().collect()).map_err(py_err)
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

fn to_series(xs: Vec<Vec<Vec<f64>>>, labels: Option<Vec<usize>>) -> PyResult<Vec<LabeledSeries>> {
    if let Some(l) = &labels {
        if l.len() != xs.len() {
            return Err(PyValueError::new_err(format!("{} series but {} labels", xs.len(), l.len())));
        }
    }
    xs.into_iter()
        .enumerate()
        .map(|(i, x)| {
            let label = labels.as_ref().map_or(0, |l| l[i]);
            LabeledSeries::new(matrix_from_rows(x)?, label, format!("py#{i}")).map_err(py_err)
        })
        .collect()
}

type PySplit = (Vec<Vec<Vec<f64>>>, Vec<usize>);
type PySplits = (Vec<Vec<Vec<f64>>>, Vec<usize>, Vec<Vec<Vec<f64>>>, Vec<usize>);

fn split(series: &[LabeledSeries]) -> PySplit {
    series.iter().map(|s| (rows_of(s.values()), s.label())).unzip()
}

/// Training hyperparameters. Keyword arguments use the same names and
/// value spellings as the `config` block of an experiment spec.
#[pyclass(name = "TrainConfig", module = "dfa_esn")]
struct PyTrainConfig {
    inner: TrainConfig,
}

#[pymethods]
impl PyTrainConfig {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let inner: TrainConfig = match kwargs {
            Some(k) => from_py(k.as_any())?,
            None => TrainConfig::default(),
        };
        inner.validate().map_err(py_err)?;
        Ok(PyTrainConfig { inner })
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn effective_eta(&self, epoch: usize) -> f64 {
        self.inner.effective_eta(epoch)
    }

    fn __repr__(&self) -> String {
        format!(
            "TrainConfig(reservoir_size={}, depth={}, epochs={}, eta={})",
            self.inner.reservoir_size, self.inner.depth, self.inner.epochs, self.inner.eta
        )
    }
}

/// A deep echo state network together with the config it trains under.
#[pyclass(name = "DeepEsn", module = "dfa_esn")]
struct PyDeepEsn {
    esn: reservoir::DeepEsn,
    cfg: TrainConfig,
}

#[pymethods]
impl PyDeepEsn {
    #[new]
    #[pyo3(signature = (config, input_dim, num_classes, feedback = true))]
    fn new(config: &PyTrainConfig, input_dim: usize, num_classes: usize, feedback: bool) -> PyResult<Self> {
        let cfg = config.inner.clone();
        let arch = cfg.architecture(input_dim, num_classes, feedback);
        let esn = reservoir::DeepEsn::build(&SeededRng::new(cfg.seed), &arch).map_err(py_err)?;
        Ok(PyDeepEsn { esn, cfg })
    }

    #[getter]
    fn depth(&self) -> usize {
        self.esn.depth()
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.esn.input_dim()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.esn.output_dim()
    }

    /// Trains for `config.epochs` epochs and returns the per-epoch reports.
    #[pyo3(signature = (xs, ys, test_xs = None, test_ys = None))]
    fn fit<'py>(
        &mut self,
        py: Python<'py>,
        xs: Vec<Vec<Vec<f64>>>,
        ys: Vec<usize>,
        test_xs: Option<Vec<Vec<Vec<f64>>>>,
        test_ys: Option<Vec<usize>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let train = to_series(xs, Some(ys))?;
        let test = match (test_xs, test_ys) {
            (Some(x), Some(y)) => to_series(x, Some(y))?,
            (None, None) => Vec::new(),
            _ => return Err(PyValueError::new_err("test_xs and test_ys go together")),
        };
        let reports = trainer::fit(&mut self.esn, &train, &test, &self.cfg, |_, _| Ok(())).map_err(py_err)?;
        to_py(py, &reports)
    }

    fn predict(&self, xs: Vec<Vec<Vec<f64>>>) -> PyResult<Vec<usize>> {
        let series = to_series(xs, None)?;
        let out = trainer::predict(&self.esn, &series, &self.cfg).map_err(py_err)?;
        Ok(out.into_iter().map(|(label, _)| label).collect())
    }

    /// Mean readout scores per series, shaped `[series][classes]`.
    fn scores(&self, xs: Vec<Vec<Vec<f64>>>) -> PyResult<Vec<Vec<f64>>> {
        let series = to_series(xs, None)?;
        let out = trainer::predict(&self.esn, &series, &self.cfg).map_err(py_err)?;
        Ok(out.into_iter().map(|(_, s)| s).collect())
    }

    /// Percent correct.
    fn score(&self, xs: Vec<Vec<Vec<f64>>>, ys: Vec<usize>) -> PyResult<f64> {
        let series = to_series(xs, Some(ys))?;
        trainer::evaluate(&self.esn, &series, &self.cfg).map_err(py_err)
    }

    fn readout(&self) -> Vec<Vec<f64>> {
        rows_of(self.esn.w_out())
    }

    fn input_weights(&self, layer: usize) -> PyResult<Vec<Vec<f64>>> {
        let l = self
            .esn
            .layers()
            .get(layer)
            .ok_or_else(|| PyValueError::new_err(format!("layer {layer} out of range")))?;
        Ok(rows_of(l.w_in()))
    }
}

/// Largest absolute eigenvalue of a square matrix given as rows.
#[pyfunction]
#[pyo3(signature = (rows, tol = numerics::DEFAULT_TOL, max_iters = numerics::DEFAULT_MAX_ITERS))]
fn spectral_radius(rows: Vec<Vec<f64>>, tol: f64, max_iters: usize) -> PyResult<f64> {
    let m = matrix_from_rows(rows)?;
    Ok(numerics::spectral_radius(&m, tol, max_iters).map_err(py_err)?.radius)
}

/// Reads a `.ts` file into a dict with `dims`, `series_length`,
/// `class_labels`, `xs` and `ys`.
#[pyfunction]
fn parse_ts<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyDict>> {
    let bytes = std::fs::read(&path).map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))?;
    let file = data::parse_ts(&bytes, &path.display().to_string()).map_err(py_err)?;
    let (xs, ys) = split(&file.series);
    let d = PyDict::new(py);
    d.set_item("dims", file.dims)?;
    d.set_item("series_length", file.series_length)?;
    d.set_item("class_labels", file.class_labels)?;
    d.set_item("xs", xs)?;
    d.set_item("ys", ys)?;
    Ok(d)
}

/// Noisy class-dependent sinusoids; returns `(xs, ys, test_xs, test_ys)`.
#[pyfunction]
#[pyo3(signature = (**kwargs))]
fn synthetic(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<PySplits> {
    let spec: SyntheticSpec = match kwargs {
        Some(k) => from_py(k.as_any())?,
        None => return Err(PyValueError::new_err("classes, dims, length, train_per_class and test_per_class are required")),
    };
    let ds = data::synthetic_sines(&spec).map_err(py_err)?;
    let (xs, ys) = split(&ds.train);
    let (txs, tys) = split(&ds.test);
    Ok((xs, ys, txs, tys))
}

/// Runs the experiment a spec file describes and returns its run record.
#[pyfunction]
#[pyo3(signature = (spec, seed = None))]
fn run_spec<'py>(py: Python<'py>, spec: PathBuf, seed: Option<u64>) -> PyResult<Bound<'py, PyAny>> {
    let loaded = LoadedSpec::from_file(&spec).map_err(py_err)?;
    let outcome = py.detach(|| run_training(&loaded, seed)).map_err(py_err)?;
    to_py(py, &outcome.record)
}

#[pymodule]
#[pyo3(name = "dfa_esn")]
fn dfa_esn_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyTrainConfig>()?;
    m.add_class::<PyDeepEsn>()?;
    m.add_function(wrap_pyfunction!(spectral_radius, m)?)?;
    m.add_function(wrap_pyfunction!(parse_ts, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(run_spec, m)?)?;
    Ok(())
}
