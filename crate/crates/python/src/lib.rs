//! Python bindings: experiment configuration, simulation, training,
//! evaluation and the complexity model.

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;

use wdm_dbp::dbp::{self, ComplexityQuery, DbpConfig, Method, Rational};
use wdm_dbp::experiment::{self, ExperimentConfig, Role, SignalFile, TrainedModel};
use wdm_dbp::metrics::{estimate_gmi, MetricsReport};
use wdm_dbp::optimizer::CoefficientFile;
use wdm_dbp::qam::Constellation;
use wdm_dbp::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::Format(_) => PyOSError::new_err(e.to_string()),
        Error::Numerical(_) => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_method(name: &str) -> PyResult<Method> {
    name.parse().map_err(py_err)
}

/// Experiment configuration (the TOML file of the command line tool).
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    fn new() -> Self {
        Self {
            inner: ExperimentConfig::default(),
        }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ExperimentConfig::from_toml_str(text).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: ExperimentConfig::load(&path).map_err(py_err)?,
        })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    #[getter]
    fn method(&self) -> String {
        self.inner.dbp.method.to_string()
    }

    #[getter]
    fn n_steps(&self) -> usize {
        self.inner.dbp.n_steps
    }

    fn train_power_dbm(&self) -> f64 {
        self.inner.train_power_dbm()
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(seed={}, channels={}, spans={}, method={}, n_steps={})",
            self.inner.seed,
            self.inner.tx.n_channels,
            self.inner.link.n_spans,
            self.inner.dbp.method,
            self.inner.dbp.n_steps
        )
    }
}

/// A received field with its frame labels.
#[pyclass(name = "Field")]
struct PyField {
    inner: SignalFile,
}

#[pymethods]
impl PyField {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: SignalFile::read(&path).map_err(py_err)?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write(&path).map_err(py_err)
    }

    #[getter]
    fn n_channels(&self) -> usize {
        self.inner.tx.n_channels
    }

    #[getter]
    fn n_symbols(&self) -> usize {
        self.inner.frame.n_symbols()
    }

    #[getter]
    fn launch_power_dbm(&self) -> f64 {
        self.inner.tx.launch_power_dbm
    }

    #[getter]
    fn sample_rate(&self) -> f64 {
        self.inner.field().sample_rate()
    }

    /// The two polarizations of the received field.
    fn samples(&self) -> (Vec<Complex64>, Vec<Complex64>) {
        let f = self.inner.field();
        (f.x().to_vec(), f.y().to_vec())
    }
}

/// Trained equalizer parameters.
#[pyclass(name = "Model", from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: TrainedModel,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        let file = CoefficientFile::read(&path).map_err(py_err)?;
        Ok(Self {
            inner: TrainedModel::from_file(&file),
        })
    }

    fn write(&self, config: &PyConfig, path: PathBuf) -> PyResult<()> {
        let link = config.inner.link.link().map_err(py_err)?;
        self.inner.to_file(&link).write(&path).map_err(py_err)
    }

    #[getter]
    fn method(&self) -> String {
        self.inner.method.to_string()
    }

    #[getter]
    fn nl_scale(&self) -> f64 {
        self.inner.nl_scale
    }

    /// Training MSE before and after optimization, if this model was
    /// trained in this session.
    #[getter]
    fn mse(&self) -> Option<(f64, f64)> {
        self.inner.report.as_ref().map(|r| (r.initial_mse, r.final_mse))
    }
}

/// Per-channel GMI (bits/4D) and NMSE (dB) of one evaluation.
#[pyclass(name = "Report")]
struct PyReport {
    #[pyo3(get)]
    method: String,
    #[pyo3(get)]
    n_steps: usize,
    #[pyo3(get)]
    power_dbm: f64,
    #[pyo3(get)]
    gmi: Vec<f64>,
    #[pyo3(get)]
    nmse_db: Vec<f64>,
}

impl From<MetricsReport> for PyReport {
    fn from(r: MetricsReport) -> Self {
        Self {
            method: r.method.to_string(),
            n_steps: r.n_steps,
            power_dbm: r.power_dbm,
            gmi: r.channel_gmi,
            nmse_db: r.channel_nmse_db,
        }
    }
}

#[pymethods]
impl PyReport {
    #[getter]
    fn avg_gmi(&self) -> f64 {
        self.gmi.iter().sum::<f64>() / self.gmi.len() as f64
    }

    fn __repr__(&self) -> String {
        format!(
            "Report({} N_s={} at {} dBm, GMI {:.4} bits/4D)",
            self.method,
            self.n_steps,
            self.power_dbm,
            self.avg_gmi()
        )
    }
}

fn dbp_config(cfg: &PyConfig, method: Option<&str>, n_steps: Option<usize>) -> PyResult<DbpConfig> {
    let mut dbp = cfg.inner.dbp.clone();
    if let Some(m) = method {
        dbp.method = parse_method(m)?;
    }
    if let Some(n) = n_steps {
        dbp.n_steps = n;
    }
    dbp.validate().map_err(py_err)?;
    Ok(dbp)
}

/// Simulates transmission at `power_dbm` (evaluation frame, or the
/// training frame with `training=True`).
#[pyfunction]
#[pyo3(signature = (config, power_dbm, training = false))]
fn simulate(py: Python<'_>, config: &PyConfig, power_dbm: f64, training: bool) -> PyResult<PyField> {
    let role = if training { Role::Training } else { Role::Evaluation };
    let cfg = config.inner.clone();
    let inner = py
        .detach(move || experiment::simulate(&cfg, role, power_dbm))
        .map_err(py_err)?;
    Ok(PyField { inner })
}

/// Trains the equalizer; returns `None` for methods without parameters.
#[pyfunction]
#[pyo3(signature = (config, field, method = None, n_steps = None, init = None))]
fn train(
    py: Python<'_>,
    config: &PyConfig,
    field: &PyField,
    method: Option<&str>,
    n_steps: Option<usize>,
    init: Option<PyModel>,
) -> PyResult<Option<PyModel>> {
    let dbp = dbp_config(config, method, n_steps)?;
    let cfg = &config.inner;
    let file = &field.inner;
    let start = init.map(|m| m.inner);
    let model = py
        .detach(|| experiment::train(cfg, &dbp, file, start.as_ref()))
        .map_err(py_err)?;
    Ok(model.map(|inner| PyModel { inner }))
}

/// Equalizes `field` and computes GMI and NMSE per channel.
#[pyfunction]
#[pyo3(signature = (config, field, model = None, method = None, n_steps = None))]
fn evaluate(
    py: Python<'_>,
    config: &PyConfig,
    field: &PyField,
    model: Option<PyModel>,
    method: Option<&str>,
    n_steps: Option<usize>,
) -> PyResult<PyReport> {
    let dbp = dbp_config(config, method, n_steps)?;
    let cfg = &config.inner;
    let file = &field.inner;
    let model = model.map(|m| m.inner);
    let report = py
        .detach(|| experiment::evaluate(cfg, &dbp, file, model.as_ref()))
        .map_err(py_err)?;
    Ok(report.into())
}

/// Real multiplications per 4D symbol as an exact `(numerator,
/// denominator)` pair.
#[pyfunction]
#[pyo3(signature = (method, n_steps, fft_size = 4096, eta = (4, 3), samples_per_symbol = (5, 4), n_c = 32, n_ch = 4))]
fn complexity(
    method: &str,
    n_steps: i64,
    fft_size: i64,
    eta: (i64, i64),
    samples_per_symbol: (i64, i64),
    n_c: i64,
    n_ch: i64,
) -> PyResult<(i64, i64)> {
    let ratio = |(n, d): (i64, i64)| {
        if d == 0 {
            Err(PyValueError::new_err("zero denominator"))
        } else {
            Ok(Rational::new(n, d))
        }
    };
    let q = ComplexityQuery {
        method: parse_method(method)?,
        n_steps,
        fft_size,
        eta: ratio(eta)?,
        samples_per_symbol: ratio(samples_per_symbol)?,
        n_c,
        n_ch,
    };
    let c = dbp::complexity(&q).map_err(py_err)?;
    Ok((*c.numer(), *c.denom()))
}

/// 64-QAM GMI (bits per symbol of one polarization) of unit-energy
/// received symbols against their transmitted labels.
#[pyfunction]
fn gmi(rx: Vec<Complex64>, labels: Vec<u8>) -> PyResult<f64> {
    estimate_gmi(&rx, &labels, &Constellation::qam64()).map_err(py_err)
}

#[pymodule]
fn wdm_dbp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(complexity, m)?)?;
    m.add_function(wrap_pyfunction!(gmi, m)?)?;
    m.add("METHODS", Method::ALL.map(Method::name).to_vec())?;
    Ok(())
}
