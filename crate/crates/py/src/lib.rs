//! Python bindings: `import dedpy`.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;

use ded_core::bench::{estimate_from_stats, rows_to_csv, simulate_stream};
use ded_core::io::{read_event_stream, write_event_stream};
use ded_core::templates::{read_pulse_file, wrapped_gaussian};
use ded_core::{
    bounds_report, empirical_gating_frequencies, exact_gating_frequencies, information_rate,
    ingest_event_stream, rate_estimates, relative_mse, run_mc, Coords, DedError, ExperimentConfig,
    LidarParams, LidarRateModel, Method, ModelDims, OptimizerSettings, PhaseRates, PolicyKind,
    ThetaBox,
};

fn to_py(e: DedError) -> PyErr {
    match e {
        DedError::Io { .. } => PyOSError::new_err(e.to_string()),
        DedError::Config(_)
        | DedError::Domain(_)
        | DedError::Parse(_)
        | DedError::DataIntegrity(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn scheme(name: &str) -> PyResult<PolicyKind> {
    name.parse().map_err(to_py)
}

fn params(theta: [f64; 3]) -> LidarParams {
    LidarParams::new(theta[0], theta[1], theta[2])
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// Lidar rate model `λ_r = a f_τ(r) + b` over a parameter box.
#[pyclass(name = "LidarModel", module = "dedpy")]
struct PyLidarModel {
    inner: LidarRateModel,
}

#[pymethods]
impl PyLidarModel {
    /// Wrapped-Gaussian pulse of width `sigma` bins on a period of `k` bins.
    #[new]
    #[pyo3(signature = (sigma, k, theta_box=None))]
    fn new(sigma: f64, k: usize, theta_box: Option<[f64; 6]>) -> PyResult<Self> {
        let template = wrapped_gaussian(sigma, k).map_err(to_py)?;
        Ok(Self {
            inner: LidarRateModel::new(template, make_box(theta_box, k)?),
        })
    }

    /// Tabulated pulse histogram read from `path`.
    #[staticmethod]
    #[pyo3(signature = (path, k, theta_box=None))]
    fn from_pulse_file(path: PathBuf, k: usize, theta_box: Option<[f64; 6]>) -> PyResult<Self> {
        let template = read_pulse_file(&path, k).map_err(to_py)?;
        Ok(Self {
            inner: LidarRateModel::new(template, make_box(theta_box, k)?),
        })
    }

    #[getter]
    fn period(&self) -> usize {
        self.inner.template().period()
    }

    /// Binned pulse `f_τ(r)` for all phases.
    fn binned_profile(&self, tau: f64) -> Vec<f64> {
        self.inner.template().binned_profile(tau)
    }

    /// Rates `λ_r(θ)`; θ must lie in the box.
    fn rates(&self, theta: [f64; 3]) -> PyResult<Vec<f64>> {
        Ok(self
            .inner
            .lidar_rates(&params(theta))
            .map_err(to_py)?
            .lambda()
            .to_vec())
    }

    fn log_likelihood(&self, stats: &PyStats, theta: [f64; 3]) -> PyResult<f64> {
        let rates = self.inner.evaluate_params(&params(theta)).map_err(to_py)?;
        Ok(ded_core::log_likelihood(&stats.inner, &rates))
    }

    fn score(&self, stats: &PyStats, theta: [f64; 3]) -> PyResult<Vec<f64>> {
        let rates = self.inner.evaluate_params(&params(theta)).map_err(to_py)?;
        Ok(ded_core::score(&stats.inner, &rates))
    }

    /// Fisher information rate at θ for gating frequencies `gamma`, as a
    /// nested 3×3 list.
    fn information(&self, theta: [f64; 3], gamma: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let rates = self.inner.lidar_rates(&params(theta)).map_err(to_py)?;
        let info = information_rate(&rates, &gamma).map_err(to_py)?;
        Ok(info.row_major().chunks(3).map(<[f64]>::to_vec).collect())
    }

    /// Runs an estimator and returns its report as a dict.
    #[pyo3(signature = (stats, method="ose_robust", bin_width=1e-10))]
    fn estimate<'py>(
        &self,
        py: Python<'py>,
        stats: &PyStats,
        method: &str,
        bin_width: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let method: Method = method.parse().map_err(to_py)?;
        let report = estimate_from_stats(
            &stats.inner,
            &self.inner,
            method,
            &OptimizerSettings::default(),
            bin_width * 1e9,
        )
        .map_err(to_py)?;
        json_to_py(py, &report.to_json().to_string())
    }

    /// Simulates `horizon` bins at θ and returns the sufficient statistics.
    #[pyo3(signature = (theta, dead_time, horizon, seed, scheme="free_running"))]
    fn simulate(
        &self,
        theta: [f64; 3],
        dead_time: usize,
        horizon: u64,
        seed: u64,
        scheme: &str,
    ) -> PyResult<PyStats> {
        let kind = self::scheme(scheme)?;
        let rates = self.inner.lidar_rates(&params(theta)).map_err(to_py)?;
        let dims = ModelDims::new(self.period(), dead_time, horizon).map_err(to_py)?;
        let (stats, stream) = simulate_stream(&rates, kind, dims, seed, 0).map_err(to_py)?;
        Ok(PyStats {
            inner: stats,
            scheme: kind,
            events: stream.bins,
        })
    }
}

fn make_box(values: Option<[f64; 6]>, k: usize) -> PyResult<ThetaBox> {
    match values {
        None => Ok(ThetaBox::default_for(k)),
        Some(v) => ThetaBox::new((v[0], v[1]), (v[2], v[3]), (v[4], v[5])).map_err(to_py),
    }
}

/// Phasewise active-bin and detection counts.
#[pyclass(name = "SufficientStats", module = "dedpy")]
struct PyStats {
    inner: ded_core::SufficientStats,
    scheme: PolicyKind,
    events: Vec<u64>,
}

#[pymethods]
impl PyStats {
    /// Rebuilds the statistics from absolute detection bins.
    #[staticmethod]
    #[pyo3(signature = (bins, period, dead_time, horizon, scheme="free_running"))]
    fn from_events(
        bins: Vec<u64>,
        period: usize,
        dead_time: usize,
        horizon: u64,
        scheme: &str,
    ) -> PyResult<Self> {
        let kind = self::scheme(scheme)?;
        let dims = ModelDims::new(period, dead_time, horizon).map_err(to_py)?;
        let stats = ingest_event_stream(&bins, kind, dims).map_err(to_py)?;
        Ok(Self {
            inner: stats,
            scheme: kind,
            events: bins,
        })
    }

    /// Reads a detection-stream file.
    #[staticmethod]
    fn read_stream(path: PathBuf) -> PyResult<Self> {
        let stream = read_event_stream(&path).map_err(to_py)?;
        let stats = ingest_event_stream(&stream.bins, stream.scheme, stream.dims).map_err(to_py)?;
        Ok(Self {
            inner: stats,
            scheme: stream.scheme,
            events: stream.bins,
        })
    }

    /// Writes the detection stream this object was built from.
    fn write_stream(&self, path: PathBuf) -> PyResult<()> {
        let stream = ded_core::io::EventStream {
            dims: self.inner.dims,
            scheme: self.scheme,
            bins: self.events.clone(),
        };
        write_event_stream(&path, &stream).map_err(to_py)
    }

    #[getter]
    fn active(&self) -> Vec<f64> {
        self.inner.active().to_vec()
    }

    #[getter]
    fn detections(&self) -> Vec<f64> {
        self.inner.detections().to_vec()
    }

    #[getter]
    fn events(&self) -> Vec<u64> {
        self.events.clone()
    }

    #[getter]
    fn period(&self) -> usize {
        self.inner.dims.period
    }

    #[getter]
    fn dead_time(&self) -> usize {
        self.inner.dims.dead_time
    }

    #[getter]
    fn horizon(&self) -> u64 {
        self.inner.dims.horizon
    }

    /// Coates-corrected per-phase intensities.
    fn lambda_hat(&self) -> Vec<f64> {
        rate_estimates(&self.inner).lambda_hat
    }

    fn gating_frequencies(&self) -> PyResult<Vec<f64>> {
        Ok(empirical_gating_frequencies(&self.inner)
            .map_err(to_py)?
            .gamma)
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        let d = &self.inner.dims;
        format!(
            "SufficientStats(K={}, D={}, T={}, detections={})",
            d.period,
            d.dead_time,
            d.horizon,
            self.inner.total_detections()
        )
    }
}

/// Stationary gating frequencies of the dead-time timer chain for
/// per-bin detection probabilities `p`.
#[pyfunction]
#[pyo3(signature = (p, dead_time, scheme="free_running"))]
fn gating_frequencies(p: Vec<f64>, dead_time: usize, scheme: &str) -> PyResult<Vec<f64>> {
    let rates = PhaseRates::from_probabilities(&p).map_err(to_py)?;
    Ok(exact_gating_frequencies(&rates, self::scheme(scheme)?, dead_time).gamma)
}

/// Weighted relative squared error with circular delay distance.
#[pyfunction]
#[pyo3(signature = (theta_hat, theta0, k, a_tau_only=false))]
fn relative_error(theta_hat: [f64; 3], theta0: [f64; 3], k: usize, a_tau_only: bool) -> f64 {
    let coords = if a_tau_only {
        Coords::ATauOnly
    } else {
        Coords::Full
    };
    relative_mse(&params(theta_hat), &params(theta0), k, coords)
}

fn load_config(toml: Option<&str>) -> PyResult<ExperimentConfig> {
    match toml {
        Some(text) => ExperimentConfig::from_toml(text).map_err(to_py),
        None => Ok(ExperimentConfig::nominal(
            vec![1_000_000],
            vec![Method::OseRobust],
            0,
        )),
    }
}

/// Bounds at the true parameter of a TOML experiment (nominal when omitted).
#[pyfunction]
#[pyo3(signature = (config=None, dead_time=None))]
fn bounds<'py>(
    py: Python<'py>,
    config: Option<&str>,
    dead_time: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = load_config(config)?;
    if let Some(d) = dead_time {
        cfg.model.dead_time = d;
    }
    let report = py.detach(|| bounds_report(&cfg)).map_err(to_py)?;
    let text =
        serde_json::to_string(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    json_to_py(py, &text)
}

/// Monte Carlo risk table of a TOML experiment, as CSV text.
#[pyfunction]
fn monte_carlo(py: Python<'_>, config: &str) -> PyResult<String> {
    let cfg = load_config(Some(config))?;
    let rows = py.detach(|| run_mc(&cfg)).map_err(to_py)?;
    Ok(rows_to_csv(&rows))
}

/// Tags of the available estimators.
#[pyfunction]
fn estimators() -> Vec<&'static str> {
    Method::ALL.iter().map(|m| m.tag()).collect()
}

#[pymodule]
fn dedpy(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLidarModel>()?;
    m.add_class::<PyStats>()?;
    m.add_function(wrap_pyfunction!(gating_frequencies, m)?)?;
    m.add_function(wrap_pyfunction!(relative_error, m)?)?;
    m.add_function(wrap_pyfunction!(bounds, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo, m)?)?;
    m.add_function(wrap_pyfunction!(estimators, m)?)?;
    Ok(())
}
