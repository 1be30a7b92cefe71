//! Python bindings for the exposure engine: keyed normal streams, GBM paths,
//! payoffs, the regression proxy and full exposure runs, all driven by the
//! same TOML configuration surface as the CLI.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use lsmc_exposure::config::{parse_config, InstrumentConfig};
use lsmc_exposure::engine::{self, RunMode};
use lsmc_exposure::error::Error;
use lsmc_exposure::models::{self, Discount, FixingSchedule, GbmParams, OptionKind};
use lsmc_exposure::regression::{self, BasisSpec, StateBasis};
use lsmc_exposure::rng::{open_antithetic_stream, open_stream, StreamKey, StreamPurpose};
use lsmc_exposure::variance::{lsmc_covariance, McCovariance};

fn to_py_err(err: Error) -> PyErr {
    match err {
        Error::Config(_) => PyValueError::new_err(err.to_string()),
        Error::InvalidArgument(_) | Error::DegenerateInput(_) => {
            PyValueError::new_err(err.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn option_kind(kind: &str) -> PyResult<OptionKind> {
    match kind {
        "call" => Ok(OptionKind::Call),
        "put" => Ok(OptionKind::Put),
        other => Err(PyValueError::new_err(format!("kind must be call or put, got {other}"))),
    }
}

/// Black-Scholes price of a European option; `kind` is "call" or "put".
#[pyfunction]
fn black_scholes(s: f64, strike: f64, rate: f64, sigma: f64, tau: f64, kind: &str) -> PyResult<f64> {
    models::black_scholes(s, strike, rate, sigma, tau, option_kind(kind)?).map_err(to_py_err)
}

/// Draw standard normal variates from the keyed substream
/// (seed, purpose, time_index, scenario_index); equal keys reproduce equal
/// sequences. `purpose` is "outer", "inner" or "baseline".
#[pyfunction]
#[pyo3(signature = (seed, purpose, time_index, scenario_index, count, antithetic = false))]
fn standard_normals(
    seed: u64,
    purpose: &str,
    time_index: u32,
    scenario_index: u64,
    count: usize,
    antithetic: bool,
) -> PyResult<Vec<f64>> {
    let purpose = match purpose {
        "outer" => StreamPurpose::Outer,
        "inner" => StreamPurpose::Inner,
        "baseline" => StreamPurpose::Baseline,
        other => {
            return Err(PyValueError::new_err(format!(
                "purpose must be outer, inner or baseline, got {other}"
            )))
        }
    };
    let key = StreamKey::new(seed, purpose, time_index, scenario_index);
    let mut stream = if antithetic { open_antithetic_stream(key) } else { open_stream(key) };
    stream.standard_normals(count).map_err(to_py_err)
}

/// Simulate `n` GBM paths over the fixing times, one row per path.
#[pyfunction]
fn outer_paths(
    s0: f64,
    drift: f64,
    sigma: f64,
    rate: f64,
    times: Vec<f64>,
    n: usize,
    seed: u64,
) -> PyResult<Vec<Vec<f64>>> {
    let params = GbmParams::new(s0, drift, sigma, rate).map_err(to_py_err)?;
    let schedule = FixingSchedule::new(times).map_err(to_py_err)?;
    let set = models::generate_outer(&params, &schedule, n, seed).map_err(to_py_err)?;
    Ok((0..n).map(|i| set.path(i).to_vec()).collect())
}

/// Discounted payoff of an instrument (described by a TOML table body, the
/// same keys as the CLI `[instrument]` section) along a realized path.
#[pyfunction]
fn discounted_payoff(
    instrument_toml: &str,
    times: Vec<f64>,
    fixings: Vec<f64>,
    rate: f64,
    valuation_time: f64,
    s0: f64,
) -> PyResult<f64> {
    let cfg: InstrumentConfig = toml::from_str(instrument_toml)
        .map_err(|e| PyValueError::new_err(format!("instrument: {}", e.message())))?;
    let schedule = FixingSchedule::new(times).map_err(to_py_err)?;
    let instrument = cfg.resolve(&schedule, s0).map_err(to_py_err)?;
    instrument
        .discounted_payoff(&schedule, &fixings, &Discount::new(rate, valuation_time))
        .map_err(to_py_err)
}

fn basis_spec(family: &str, degree: usize, threshold: Option<f64>) -> PyResult<BasisSpec> {
    let mut spec = match family {
        "monomial" => BasisSpec::monomial(degree),
        "forsythe" => BasisSpec::forsythe(degree),
        "monomial_dummy" => BasisSpec::monomial_dummy(
            degree,
            threshold.ok_or_else(|| {
                PyValueError::new_err("monomial_dummy requires a dummy threshold")
            })?,
        ),
        other => {
            return Err(PyValueError::new_err(format!(
                "family must be monomial, monomial_dummy or forsythe, got {other}"
            )))
        }
    };
    spec.max_degree = spec.max_degree.max(degree);
    Ok(spec)
}

/// Least-squares polynomial fit of `y` on `x`; returns coefficients in the
/// basis, fitted values, the residual sum of squares and the design rank.
#[pyfunction]
#[pyo3(signature = (x, y, degree, family = "forsythe", threshold = None))]
fn fit_polynomial<'py>(
    py: Python<'py>,
    x: Vec<f64>,
    y: Vec<f64>,
    degree: usize,
    family: &str,
    threshold: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    if x.len() != y.len() {
        return Err(PyValueError::new_err("x and y must have the same length"));
    }
    let spec = basis_spec(family, degree, threshold)?;
    let states: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
    let basis = StateBasis::fit(&spec, &states, 1, false).map_err(to_py_err)?;
    let design = basis.design(&states).map_err(to_py_err)?;
    let fit = regression::fit(&design, &y).map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("beta", fit.beta.iter().copied().collect::<Vec<f64>>())?;
    out.set_item("fitted", fit.fitted.iter().copied().collect::<Vec<f64>>())?;
    out.set_item("sse", fit.sse)?;
    out.set_item("rank", fit.rank)?;
    Ok(out)
}

/// Trace ratio tr(H Sigma H) / tr(Sigma) for a polynomial design over `x`
/// and a diagonal covariance; the headline variance-reduction diagnostic.
#[pyfunction]
#[pyo3(signature = (x, degree, variances, family = "forsythe"))]
fn trace_ratio<'py>(
    py: Python<'py>,
    x: Vec<f64>,
    degree: usize,
    variances: Vec<f64>,
    family: &str,
) -> PyResult<Bound<'py, PyDict>> {
    if x.len() != variances.len() {
        return Err(PyValueError::new_err("x and variances must have the same length"));
    }
    let spec = basis_spec(family, degree, None)?;
    let states: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
    let basis = StateBasis::fit(&spec, &states, 1, false).map_err(to_py_err)?;
    let design = basis.design(&states).map_err(to_py_err)?;
    let cov = McCovariance::Diagonal { variances, p: 2 };
    let report = lsmc_covariance(&design, &cov).map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("total_mc_variance", report.total_mc_variance)?;
    out.set_item("total_lsmc_variance", report.total_lsmc_variance)?;
    out.set_item("ratio", report.ratio)?;
    out.set_item("theoretical_ratio", report.theoretical_ratio)?;
    Ok(out)
}

fn profile_dict<'py>(
    py: Python<'py>,
    profile: &engine::ExposureProfile,
) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("method", profile.method.label())?;
    out.set_item("times", profile.times.clone())?;
    out.set_item("ee", profile.ee.clone())?;
    out.set_item("pfe", profile.pfe.clone())?;
    out.set_item("quantile", profile.quantile)?;
    Ok(out)
}

/// Run the exposure pipeline from a TOML configuration document (the CLI
/// schema). Returns the LSMC profile, optionally the nested baseline
/// profile, and the per-step variance reports.
#[pyfunction]
#[pyo3(signature = (config_toml, with_baseline = false))]
fn run_exposure<'py>(
    py: Python<'py>,
    config_toml: &str,
    with_baseline: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let config = parse_config(config_toml).map_err(to_py_err)?;
    let plan = config.to_run_plan().map_err(to_py_err)?;
    let mode = if with_baseline { RunMode::Both } else { RunMode::LsmcOnly };
    let result = engine::run(&plan, mode).map_err(to_py_err)?;
    let out = PyDict::new(py);
    if let Some(profile) = &result.lsmc_profile {
        out.set_item("lsmc", profile_dict(py, profile)?)?;
    }
    if let Some(profile) = &result.baseline_profile {
        out.set_item("baseline", profile_dict(py, profile)?)?;
    }
    if let Some(surface) = &result.lsmc {
        let reports: Vec<Bound<'py, PyDict>> = surface
            .step_indices
            .iter()
            .zip(&surface.variance)
            .map(|(step, report)| {
                let d = PyDict::new(py);
                d.set_item("step", step)?;
                match report {
                    Some(r) => {
                        d.set_item("total_mc_variance", r.total_mc_variance)?;
                        d.set_item("total_lsmc_variance", r.total_lsmc_variance)?;
                        d.set_item("ratio", r.ratio)?;
                        d.set_item("theoretical_ratio", r.theoretical_ratio)?;
                    }
                    None => d.set_item("ratio", py.None())?,
                }
                Ok(d)
            })
            .collect::<PyResult<_>>()?;
        out.set_item("variance", reports)?;
    }
    Ok(out)
}

#[pymodule]
fn lsmc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(black_scholes, m)?)?;
    m.add_function(wrap_pyfunction!(standard_normals, m)?)?;
    m.add_function(wrap_pyfunction!(outer_paths, m)?)?;
    m.add_function(wrap_pyfunction!(discounted_payoff, m)?)?;
    m.add_function(wrap_pyfunction!(fit_polynomial, m)?)?;
    m.add_function(wrap_pyfunction!(trace_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(run_exposure, m)?)?;
    Ok(())
}
