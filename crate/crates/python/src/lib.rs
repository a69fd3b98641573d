//! Python bindings.
//!
//! Closed-form quantities are plain functions of `(n, gamma)`. Simulations
//! take the same keyword settings as the `thermal-filter` configuration file
//! and return their tables as dicts of column lists.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use pyo3::IntoPyObjectExt;

use thermal_filtering::analytics;
use thermal_filtering::gaussian::{self, GaussianMoments, SimConfig};
use thermal_filtering::io::commands::{self, Report};
use thermal_filtering::io::config::RunConfig;
use thermal_filtering::io::{Cell, Table};
use thermal_filtering::Error;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Domain { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn run_config(py: Python<'_>, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<RunConfig> {
    let Some(kwargs) = kwargs else {
        return Ok(RunConfig::default());
    };
    let text: String = py
        .import("json")?
        .call_method1("dumps", (kwargs,))?
        .extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(format!("settings: {e}")))
}

fn cell<'py>(py: Python<'py>, c: &Cell) -> PyResult<Bound<'py, PyAny>> {
    match c {
        Cell::Real(v) => v.into_bound_py_any(py),
        Cell::Int(v) => v.into_bound_py_any(py),
        Cell::Bool(v) => v.into_bound_py_any(py),
        Cell::Text(s) => s.into_bound_py_any(py),
    }
}

fn table_dict<'py>(py: Python<'py>, t: &Table) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (k, name) in t.columns.iter().enumerate() {
        let col = t
            .rows
            .iter()
            .map(|r| cell(py, &r[k]))
            .collect::<PyResult<Vec<_>>>()?;
        d.set_item(name, PyList::new(py, col)?)?;
    }
    Ok(d)
}

fn run_command<'py>(
    py: Python<'py>,
    kwargs: Option<&Bound<'py, PyDict>>,
    f: fn(&RunConfig) -> thermal_filtering::Result<Report>,
) -> PyResult<Report> {
    let cfg = run_config(py, kwargs)?;
    py.detach(|| f(&cfg)).map_err(to_py_err)
}

/// Bath occupation and purification.
#[pyclass(frozen, eq, from_py_object, module = "thermalfilter")]
#[derive(Clone, Copy, PartialEq)]
struct BathParams {
    inner: analytics::BathParams,
}

#[pymethods]
impl BathParams {
    #[new]
    fn new(n: f64, gamma: f64) -> PyResult<Self> {
        let inner = analytics::BathParams::new(n, gamma).map_err(to_py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n(&self) -> f64 {
        self.inner.n
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    fn steady_state_variance(&self) -> PyResult<f64> {
        analytics::steady_state_variance(self.inner).map_err(to_py_err)
    }

    fn steady_state_purity(&self) -> PyResult<f64> {
        analytics::steady_state_purity(self.inner).map_err(to_py_err)
    }

    fn coefficients(&self) -> PyResult<Coefficients> {
        let inner = analytics::compute_coefficients(self.inner).map_err(to_py_err)?;
        Ok(Coefficients { inner })
    }

    fn __repr__(&self) -> String {
        format!("BathParams(n={}, gamma={})", self.inner.n, self.inner.gamma)
    }
}

/// Derived scalars of the unravelling at fixed `(n, gamma)`.
#[pyclass(frozen, module = "thermalfilter")]
struct Coefficients {
    inner: analytics::UnravellingCoefficients,
}

#[pymethods]
impl Coefficients {
    #[getter]
    fn f(&self) -> f64 {
        self.inner.f
    }
    #[getter]
    fn h1(&self) -> f64 {
        self.inner.h1
    }
    #[getter]
    fn h2(&self) -> f64 {
        self.inner.h2
    }
    #[getter]
    fn m_plus(&self) -> f64 {
        self.inner.m_plus
    }
    #[getter]
    fn m_minus(&self) -> f64 {
        self.inner.m_minus
    }
    #[getter]
    fn a1(&self) -> f64 {
        self.inner.a1
    }
    #[getter]
    fn a2(&self) -> f64 {
        self.inner.a2
    }
    #[getter]
    fn b1(&self) -> f64 {
        self.inner.b1
    }
    #[getter]
    fn b2(&self) -> f64 {
        self.inner.b2
    }
    /// Covariance of the scaled outcome pair per unit time.
    #[getter]
    fn outcome_cov(&self) -> [[f64; 2]; 2] {
        self.inner.outcome_cov
    }
    #[getter]
    fn mixing(&self) -> [[f64; 2]; 2] {
        self.inner.mixing
    }
}

#[pyfunction]
fn compute_coefficients(n: f64, gamma: f64) -> PyResult<Coefficients> {
    BathParams::new(n, gamma)?.coefficients()
}

#[pyfunction]
fn steady_state_variance(n: f64, gamma: f64) -> PyResult<f64> {
    BathParams::new(n, gamma)?.steady_state_variance()
}

#[pyfunction]
fn steady_state_purity(n: f64, gamma: f64) -> PyResult<f64> {
    BathParams::new(n, gamma)?.steady_state_purity()
}

#[pyfunction]
fn squeezing_bound(n: f64) -> PyResult<f64> {
    analytics::squeezing_bound(n).map_err(to_py_err)
}

#[pyfunction]
fn gamma_threshold(n: f64) -> PyResult<f64> {
    analytics::gamma_threshold(n).map_err(to_py_err)
}

/// `(v_min, n_opt)`; `n_opt` is `inf` at gamma = 1.
#[pyfunction]
fn min_variance_over_n(gamma: f64) -> PyResult<(f64, f64)> {
    let o = analytics::min_variance_over_n(gamma).map_err(to_py_err)?;
    Ok((o.v_min, o.n_opt))
}

/// Covariance path from the vacuum or the thermal state, sampled every step.
#[pyfunction]
#[pyo3(signature = (n, gamma, dt=1e-3, t_final=30.0, init="vacuum"))]
fn integrate_covariance<'py>(
    py: Python<'py>,
    n: f64,
    gamma: f64,
    dt: f64,
    t_final: f64,
    init: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let p = BathParams::new(n, gamma)?.inner;
    let init = match init {
        "vacuum" => GaussianMoments::VACUUM,
        "thermal" => GaussianMoments::thermal(n),
        other => return Err(PyValueError::new_err(format!("unknown init `{other}`"))),
    };
    let cfg = SimConfig {
        dt,
        t_final,
        ..SimConfig::default()
    };
    let sol = py
        .detach(|| gaussian::integrate_covariance(p, init, &cfg))
        .map_err(to_py_err)?;
    let d = PyDict::new(py);
    let col = |f: fn(&gaussian::CovarianceSample) -> f64| -> Vec<f64> {
        sol.samples.iter().map(f).collect()
    };
    d.set_item("t", col(|s| s.time))?;
    d.set_item("var_x", col(|s| s.cov.var_x))?;
    d.set_item("var_p", col(|s| s.cov.var_p))?;
    d.set_item("cov_xp", col(|s| s.cov.cov_xp))?;
    d.set_item("final_residual", sol.final_residual)?;
    Ok(d)
}

/// Steady-state table over `n_grid` and `gamma_grid`.
#[pyfunction]
#[pyo3(signature = (**kwargs))]
fn sweep<'py>(
    py: Python<'py>,
    kwargs: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyDict>> {
    table_dict(py, &run_command(py, kwargs, commands::cmd_sweep)?.table)
}

/// One conditional trajectory; `representation` picks `"gaussian"` or `"fock"`.
#[pyfunction]
#[pyo3(signature = (**kwargs))]
fn simulate_trajectory<'py>(
    py: Python<'py>,
    kwargs: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyDict>> {
    table_dict(
        py,
        &run_command(py, kwargs, commands::cmd_trajectory)?.table,
    )
}

#[pyfunction]
#[pyo3(signature = (**kwargs))]
fn run_ensemble<'py>(
    py: Python<'py>,
    kwargs: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyDict>> {
    table_dict(py, &run_command(py, kwargs, commands::cmd_ensemble)?.table)
}

/// Gaussian-against-Fock checks; returns `(passed, table, notes)`.
#[pyfunction]
#[pyo3(signature = (**kwargs))]
fn oracle_check<'py>(
    py: Python<'py>,
    kwargs: Option<&Bound<'py, PyDict>>,
) -> PyResult<(bool, Bound<'py, PyDict>, Vec<String>)> {
    let r = run_command(py, kwargs, commands::cmd_oracle_check)?;
    Ok((r.passed, table_dict(py, &r.table)?, r.notes))
}

#[pymodule]
pub mod thermalfilter {
    #[pymodule_export]
    use super::{
        compute_coefficients, gamma_threshold, integrate_covariance, min_variance_over_n,
        oracle_check, run_ensemble, simulate_trajectory, squeezing_bound, steady_state_purity,
        steady_state_variance, sweep, BathParams, Coefficients,
    };
}
