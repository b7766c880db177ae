//! Python bindings: experiment runs, calibration, the Helffer–Sjöstrand matrix
//! calculus and the invariant counting function.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use nilcalc::almost_analytic::{AlmostAnalyticExtension, ExtensionParams};
use nilcalc::experiments::{self as ex, Report};
use nilcalc::rep::{CMat, C64};
use nilcalc::smooth::GrowthClassFunction;
use nilcalc::weyl::{counting_function as count_levels, invariant_spectrum, SpectralCaps, WeylSetup};
use nilcalc::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::UnknownColumn(_) | Error::NotHermitian(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn report_dict<'py>(py: Python<'py>, r: &Report) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("experiment", &r.experiment)?;
    d.set_item("passed", r.passed())?;
    d.set_item("summary", &r.summary)?;
    d.set_item("values", r.values.clone())?;
    let checks = PyList::empty(py);
    for c in &r.checks {
        let cd = PyDict::new(py);
        cd.set_item("name", &c.name)?;
        cd.set_item("value", c.value)?;
        cd.set_item("threshold", c.threshold)?;
        cd.set_item("bound", format!("{:?}", c.bound))?;
        cd.set_item("pass", c.pass)?;
        checks.append(cd)?;
    }
    d.set_item("checks", checks)?;
    let tables = PyDict::new(py);
    for t in &r.tables {
        let td = PyDict::new(py);
        td.set_item("columns", &t.columns)?;
        td.set_item("rows", &t.rows)?;
        tables.set_item(&t.name, td)?;
    }
    d.set_item("tables", tables)?;
    Ok(d)
}

/// Names of the available experiments.
#[pyfunction]
fn experiments() -> Vec<&'static str> {
    ex::EXPERIMENTS.to_vec()
}

/// Default parameters of an experiment, as TOML.
#[pyfunction]
fn default_params(name: &str) -> PyResult<String> {
    ex::default_params(name).map_err(to_py)
}

/// Runs an experiment; `params` is the TOML body of its [params] table.
#[pyfunction]
#[pyo3(signature = (name, params=None))]
fn run_experiment<'py>(py: Python<'py>, name: &str, params: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
    let r = py.detach(|| ex::run_named(name, params)).map_err(to_py)?;
    report_dict(py, &r)
}

/// Calibrated Plancherel constant with its cross-check residuals.
#[pyfunction]
fn calibrate_plancherel_constant<'py>(py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
    let r = py.detach(nilcalc::rep::calibrate_plancherel_constant).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("c_pl", r.c_pl)?;
    d.set_item("cross_residual", r.cross_residual)?;
    d.set_item("inversion_error", r.inversion_error)?;
    Ok(d)
}

/// ψ(H) for a Hermitian matrix through the Helffer–Sjöstrand formula.
#[pyfunction]
#[pyo3(signature = (name, params, matrix, decay_target=3, window=8.0))]
fn psi_of_matrix(
    name: &str,
    params: Vec<f64>,
    matrix: Vec<Vec<C64>>,
    decay_target: u32,
    window: f64,
) -> PyResult<Vec<Vec<C64>>> {
    let n = matrix.len();
    if matrix.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    let h = CMat::from_fn(n, n, |i, j| matrix[i][j]);
    let psi = GrowthClassFunction::registered(name, &params).map_err(to_py)?;
    let ext = AlmostAnalyticExtension::build(&psi, decay_target, ExtensionParams { window, ..Default::default() })
        .map_err(to_py)?;
    let f = nilcalc::hs::hs_apply(&ext, &h).map_err(to_py)?;
    Ok((0..n).map(|i| (0..n).map(|j| f[(i, j)]).collect()).collect())
}

/// (N, ties): eigenvalues of ε²L_A + V on the standard nilmanifold in [lo, hi].
#[pyfunction]
fn counting_function(a: [[f64; 2]; 2], v: f64, eps: f64, lo: f64, hi: f64) -> PyResult<(u64, u64)> {
    let caps = SpectralCaps::covering(a, v, eps, hi + 1e-6);
    let spec = invariant_spectrum(a, v, eps, caps).map_err(to_py)?;
    let c = count_levels(&spec, lo, hi).map_err(to_py)?;
    Ok((c.count, c.ties))
}

/// Phase-space volume ∫∫ Tr 1_[lo, hi](σ₀) for constant A and V.
#[pyfunction]
#[pyo3(signature = (a, v, lo, hi, c_pl=None))]
fn weyl_integral(py: Python<'_>, a: [[f64; 2]; 2], v: f64, lo: f64, hi: f64, c_pl: Option<f64>) -> PyResult<f64> {
    py.detach(|| {
        let c = match c_pl {
            Some(c) => c,
            None => nilcalc::rep::calibrate_plancherel_constant()?.c_pl,
        };
        let setup = WeylSetup { a, v, interval: (lo, hi), ..WeylSetup::standard(c) };
        Ok(setup.integral()?.value)
    })
    .map_err(to_py)
}

#[pymodule]
fn nilcalc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(experiments, m)?)?;
    m.add_function(wrap_pyfunction!(default_params, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_plancherel_constant, m)?)?;
    m.add_function(wrap_pyfunction!(psi_of_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(counting_function, m)?)?;
    m.add_function(wrap_pyfunction!(weyl_integral, m)?)?;
    Ok(())
}
