//! Python bindings. Matrices cross the boundary as lists of rows.

use std::path::PathBuf;

use nalgebra::DMatrix;
use pyo3::exceptions::{PyArithmeticError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use kfactor_core as kf;
use kf::estimators::{parse_methods, PanelSpectra};
use kf::montecarlo::{parse_family, scenario_label};
use kf::selfcheck::{run_selfcheck, Fault};

fn to_py(e: kf::Error) -> PyErr {
    match e {
        kf::Error::Numerical(_) => PyArithmeticError::new_err(e.to_string()),
        kf::Error::Invariant(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

fn matrix_of(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Ok(DMatrix::from_fn(rows.len(), n, |r, c| rows[r][c]))
}

fn configs(methods: &str, k_max: usize, c: f64, allow_zero: bool) -> PyResult<Vec<kf::EstimatorConfig>> {
    Ok(parse_methods(methods)
        .map_err(to_py)?
        .into_iter()
        .map(|m| {
            kf::EstimatorConfig::new(m)
                .with_k_max(k_max)
                .with_c(c)
                .with_allow_zero(allow_zero)
        })
        .collect())
}

/// A `T x N` panel: rows are periods, columns are series. `NaN` marks a
/// missing cell.
#[pyclass(name = "Panel", module = "kfactor")]
struct PyPanel {
    inner: kf::DataPanel,
}

#[pymethods]
impl PyPanel {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = kf::DataPanel::with_missing(matrix_of(&rows)?).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (path, header = true, time_column = true))]
    fn read_csv(path: PathBuf, header: bool, time_column: bool) -> PyResult<Self> {
        let inner = kf::ingest_csv(&path, header, time_column).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write_csv(&path).map_err(to_py)
    }

    #[getter]
    fn t(&self) -> usize {
        self.inner.t()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn missing(&self) -> usize {
        self.inner.missing_count()
    }

    fn values(&self) -> Vec<Vec<f64>> {
        let mut out = rows_of(self.inner.values());
        let mask = self.inner.missing_mask();
        for (t, row) in out.iter_mut().enumerate() {
            for (i, v) in row.iter_mut().enumerate() {
                if mask[(t, i)] {
                    *v = f64::NAN;
                }
            }
        }
        out
    }

    fn time_labels(&self) -> Vec<String> {
        (0..self.inner.t()).map(|t| self.inner.time_label(t)).collect()
    }

    fn impute_column_mean(&self) -> PyResult<Self> {
        let inner = kf::impute_column_mean(&self.inner).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn double_demean(&self) -> PyResult<Self> {
        let inner = kf::double_demean(&self.inner).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn __repr__(&self) -> String {
        format!("Panel(T={}, N={})", self.inner.t(), self.inner.n())
    }
}

#[pyclass(name = "Estimate", module = "kfactor", get_all)]
struct PyEstimate {
    method: String,
    label: String,
    r_hat: usize,
    /// Criterion values from `first_index` to `k_max`.
    criterion: Vec<f64>,
    first_index: usize,
    eigenvalues: Vec<f64>,
}

#[pymethods]
impl PyEstimate {
    fn __repr__(&self) -> String {
        format!("Estimate({}, r_hat={})", self.label, self.r_hat)
    }
}

/// One `x(y|z)` cell of a simulation report.
#[pyclass(name = "Cell", module = "kfactor", get_all)]
struct PyCell {
    scenario: String,
    label: String,
    n: usize,
    t: usize,
    mean: f64,
    under: usize,
    over: usize,
    exact: usize,
    estimates: Vec<usize>,
}

#[pymethods]
impl PyCell {
    fn __repr__(&self) -> String {
        format!("Cell({} {}: {:.3}({}|{}))", self.scenario, self.label, self.mean, self.under, self.over)
    }
}

/// Sample multivariate Kendall's tau matrix of a panel (no demeaning).
#[pyfunction]
#[pyo3(signature = (panel, workers = 1))]
fn kendall_tau(panel: &PyPanel, workers: usize) -> PyResult<Vec<Vec<f64>>> {
    let k = kf::sample_kendall_tau_parallel(&panel.inner, workers).map_err(to_py)?;
    Ok(rows_of(k.matrix()))
}

/// Eigenvalues of a symmetric matrix, largest first.
#[pyfunction]
#[pyo3(signature = (matrix, top_k = None))]
fn eigenvalues(matrix: Vec<Vec<f64>>, top_k: Option<usize>) -> PyResult<Vec<f64>> {
    kf::eigenvalues_sym(&matrix_of(&matrix)?, top_k).map_err(to_py)
}

/// Estimates the number of factors with each listed method. Missing cells
/// are imputed with column means first.
#[pyfunction]
#[pyo3(signature = (panel, methods = "mker,mktcr", k_max = 8, c = kf::estimators::DEFAULT_C, allow_zero = false))]
fn estimate(panel: &PyPanel, methods: &str, k_max: usize, c: f64, allow_zero: bool) -> PyResult<Vec<PyEstimate>> {
    let data = if panel.inner.has_missing() {
        kf::impute_column_mean(&panel.inner).map_err(to_py)?
    } else {
        panel.inner.clone()
    };
    let mut spectra = PanelSpectra::new(data).map_err(to_py)?;
    configs(methods, k_max, c, allow_zero)?
        .iter()
        .map(|cfg| {
            let res = spectra.estimate(cfg).map_err(to_py)?;
            Ok(PyEstimate {
                method: cfg.method.name().to_string(),
                label: cfg.label(),
                r_hat: res.r_hat,
                first_index: res.first_index,
                eigenvalues: res.spectrum.raw().to_vec(),
                criterion: res.ratio_series,
            })
        })
        .collect()
}

fn scenario(id: &str, dist: Option<&str>, n: Option<usize>, t: Option<usize>, snr: Option<f64>) -> PyResult<kf::ScenarioSpec> {
    let family = dist.map(parse_family).transpose().map_err(to_py)?;
    let mut spec = kf::build_scenario(id, family).map_err(to_py)?;
    if n.is_some() || t.is_some() {
        let n = n.unwrap_or(spec.n);
        spec = spec.with_dims(n, t.unwrap_or(n));
    }
    if let Some(snr) = snr {
        spec = spec.with_snr(snr).map_err(to_py)?;
    }
    Ok(spec)
}

/// Draws one panel from a simulation scenario.
#[pyfunction]
#[pyo3(signature = (scenario_id, seed, stream = 0, dist = None, n = None, t = None, snr = None))]
fn simulate_panel(
    scenario_id: &str,
    seed: u64,
    stream: u64,
    dist: Option<&str>,
    n: Option<usize>,
    t: Option<usize>,
    snr: Option<f64>,
) -> PyResult<PyPanel> {
    let spec = scenario(scenario_id, dist, n, t, snr)?;
    let inner = kf::generate_panel(&spec, &mut kf::RngStream::new(seed, stream)).map_err(to_py)?;
    Ok(PyPanel { inner })
}

/// Monte Carlo replications of a scenario; one cell per method.
#[pyfunction]
#[pyo3(signature = (
    scenario_id, reps, seed, methods = "gr,er,mker,tcr,mktcr", dist = None, n = None, t = None, snr = None,
    k_max = 8, c = kf::estimators::DEFAULT_C, workers = 1
))]
#[allow(clippy::too_many_arguments)]
fn run_scenario(
    scenario_id: &str,
    reps: usize,
    seed: u64,
    methods: &str,
    dist: Option<&str>,
    n: Option<usize>,
    t: Option<usize>,
    snr: Option<f64>,
    k_max: usize,
    c: f64,
    workers: usize,
) -> PyResult<Vec<PyCell>> {
    let spec = scenario(scenario_id, dist, n, t, snr)?.with_reps(reps).with_k_max(k_max);
    let report = kf::run_scenario(&spec, &configs(methods, k_max, c, false)?, seed, workers).map_err(to_py)?;
    let name = scenario_label(&report.scenario);
    Ok(report
        .cells
        .into_iter()
        .map(|cell| PyCell {
            scenario: name.clone(),
            label: cell.label,
            n: spec.n,
            t: spec.t,
            mean: cell.mean,
            under: cell.under,
            over: cell.over,
            exact: cell.exact,
            estimates: cell.estimates,
        })
        .collect())
}

type RollingPoint = (String, Vec<usize>);

/// Rolling-window estimates: returns the method labels and one
/// `(time_label, [r_hat per method])` pair per window.
#[pyfunction]
#[pyo3(signature = (panel, window = 150, methods = "mker,mktcr", k_max = 8, c = kf::estimators::DEFAULT_C, workers = 1))]
fn rolling(
    panel: &PyPanel,
    window: usize,
    methods: &str,
    k_max: usize,
    c: f64,
    workers: usize,
) -> PyResult<(Vec<String>, Vec<RollingPoint>)> {
    let data = if panel.inner.has_missing() {
        kf::impute_column_mean(&panel.inner).map_err(to_py)?
    } else {
        panel.inner.clone()
    };
    let res = kf::rolling_estimate(&data, window, &configs(methods, k_max, c, false)?, workers).map_err(to_py)?;
    let points = res.points.into_iter().map(|p| (p.time_label, p.r_hat)).collect();
    Ok((res.labels, points))
}

/// Runs the invariant suite; returns `(passed, summary)`.
#[pyfunction]
#[pyo3(signature = (seed = 1))]
fn selfcheck(seed: u64) -> PyResult<(bool, String)> {
    let report = run_selfcheck(seed, Fault::None).map_err(to_py)?;
    Ok((report.passed(), report.summary()))
}

#[pymodule]
fn kfactor(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPanel>()?;
    m.add_class::<PyEstimate>()?;
    m.add_class::<PyCell>()?;
    m.add_function(wrap_pyfunction!(kendall_tau, m)?)?;
    m.add_function(wrap_pyfunction!(eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_panel, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(rolling, m)?)?;
    m.add_function(wrap_pyfunction!(selfcheck, m)?)?;
    m.add("DEFAULT_C", kf::estimators::DEFAULT_C)?;
    Ok(())
}
