//! Python bindings for the `quantum_otto` engine simulator.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use quantum_otto::algebra::BVector;
use quantum_otto::cli;
use quantum_otto::cycle::{self, Integrator, Schedule as CoreSchedule};
use quantum_otto::dynamics::Ladder;
use quantum_otto::noise::{self, NoiseConfig};
use quantum_otto::optimize::{self, DephasingMode, OptimizeOptions};
use quantum_otto::thermo::CycleSummary;
use quantum_otto::Error;

create_exception!(quantum_otto, EngineError, PyException);
create_exception!(quantum_otto, ConfigError, PyValueError);

fn err(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(format!("{}: {e}", e.name()))
    } else {
        EngineError::new_err(format!("{}: {e}", e.name()))
    }
}

fn integrator(n_seg: usize, ladder: &str) -> PyResult<Integrator> {
    let ladder = match ladder {
        "midpoint" => Ladder::Midpoint,
        "endpoint" => Ladder::Endpoint,
        other => return Err(PyValueError::new_err(format!("unknown ladder `{other}`"))),
    };
    Ok(Integrator { n_seg, ladder })
}

/// Engine parameters. Defaults are the reference set without dephasing.
#[pyclass(get_all, set_all, from_py_object)]
#[derive(Debug, Clone, Copy)]
struct EngineParams {
    j: f64,
    omega_a: f64,
    omega_b: f64,
    t_h: f64,
    t_c: f64,
    gamma_h: f64,
    gamma_c: f64,
    gamma_dephasing_h: f64,
    gamma_dephasing_c: f64,
    lambda_ab: f64,
    lambda_ba: f64,
}

impl From<EngineParams> for cycle::EngineParams {
    fn from(p: EngineParams) -> Self {
        cycle::EngineParams {
            j: p.j,
            omega_a: p.omega_a,
            omega_b: p.omega_b,
            t_h: p.t_h,
            t_c: p.t_c,
            gamma_h: p.gamma_h,
            gamma_c: p.gamma_c,
            gamma_dephasing_h: p.gamma_dephasing_h,
            gamma_dephasing_c: p.gamma_dephasing_c,
            lambda_ab: p.lambda_ab,
            lambda_ba: p.lambda_ba,
        }
    }
}

impl From<cycle::EngineParams> for EngineParams {
    fn from(p: cycle::EngineParams) -> Self {
        EngineParams {
            j: p.j,
            omega_a: p.omega_a,
            omega_b: p.omega_b,
            t_h: p.t_h,
            t_c: p.t_c,
            gamma_h: p.gamma_h,
            gamma_c: p.gamma_c,
            gamma_dephasing_h: p.gamma_dephasing_h,
            gamma_dephasing_c: p.gamma_dephasing_c,
            lambda_ab: p.lambda_ab,
            lambda_ba: p.lambda_ba,
        }
    }
}

#[pymethods]
impl EngineParams {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut p = EngineParams::from(cycle::EngineParams::reference());
        if let Some(kw) = kwargs {
            let obj = Bound::new(kw.py(), p)?;
            for (k, v) in kw.iter() {
                obj.setattr(k.extract::<String>()?.as_str(), v)?;
            }
            p = *obj.borrow();
        }
        Ok(p)
    }

    fn validate(&self) -> PyResult<()> {
        cycle::EngineParams::from(*self).validate().map_err(err)
    }

    fn with_lambdas(&self, lambda_ab: f64, lambda_ba: f64) -> Self {
        EngineParams {
            lambda_ab,
            lambda_ba,
            ..*self
        }
    }

    fn __repr__(&self) -> String {
        format!("{self:?}")
    }
}

/// Time allocations on the hot isochore, expansion, cold isochore and
/// compression.
#[pyclass(get_all, set_all, from_py_object)]
#[derive(Debug, Clone, Copy)]
struct Schedule {
    tau_h: f64,
    tau_ba: f64,
    tau_c: f64,
    tau_ab: f64,
}

impl From<Schedule> for CoreSchedule {
    fn from(s: Schedule) -> Self {
        CoreSchedule::from_array([s.tau_h, s.tau_ba, s.tau_c, s.tau_ab])
    }
}

impl From<CoreSchedule> for Schedule {
    fn from(s: CoreSchedule) -> Self {
        Schedule {
            tau_h: s.tau_h,
            tau_ba: s.tau_ba,
            tau_c: s.tau_c,
            tau_ab: s.tau_ab,
        }
    }
}

#[pymethods]
impl Schedule {
    #[new]
    #[pyo3(signature = (tau_h=1.0795, tau_ba=0.01478, tau_c=1.0088, tau_ab=0.0069))]
    fn new(tau_h: f64, tau_ba: f64, tau_c: f64, tau_ab: f64) -> Self {
        Schedule {
            tau_h,
            tau_ba,
            tau_c,
            tau_ab,
        }
    }

    fn total(&self) -> f64 {
        CoreSchedule::from(*self).total()
    }

    fn __repr__(&self) -> String {
        format!("{self:?}")
    }
}

fn summary_dict<'py>(py: Python<'py>, s: &CycleSummary) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("W_net", s.w_net)?;
    d.set_item("W_field", s.w_field)?;
    d.set_item("W_friction", s.w_friction)?;
    d.set_item("Q_h", s.q_h)?;
    d.set_item("Q_c", s.q_c)?;
    d.set_item("P", s.p_avg)?;
    d.set_item("dS", s.ds_ext)?;
    d.set_item("dS_rate", s.entropy_rate())?;
    d.set_item("tau", s.tau)?;
    Ok(d)
}

/// Limit-cycle totals: works, heats, power and entropy production.
#[pyfunction]
#[pyo3(signature = (params, schedule, n_seg=512, ladder="midpoint"))]
fn evaluate_cycle<'py>(
    py: Python<'py>,
    params: EngineParams,
    schedule: Schedule,
    n_seg: usize,
    ladder: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let s = cycle::evaluate_cycle(
        &params.into(),
        &schedule.into(),
        &integrator(n_seg, ladder)?,
    )
    .map_err(err)?;
    summary_dict(py, &s)
}

/// Limit-cycle state `[b1..b5]` at the start of the hot isochore.
#[pyfunction]
#[pyo3(signature = (params, schedule, n_seg=512))]
fn limit_cycle(params: EngineParams, schedule: Schedule, n_seg: usize) -> PyResult<[f64; 5]> {
    let maps = cycle::branch_maps(
        &params.into(),
        &schedule.into(),
        &integrator(n_seg, "midpoint")?,
    )
    .map_err(err)?;
    let b: BVector = cycle::limit_cycle(&maps.cycle_map()).map_err(err)?;
    Ok(b.as_array())
}

/// One sampled period as a dict of columns.
#[pyfunction]
#[pyo3(signature = (params, schedule, resolution=200, n_seg=512))]
fn run_cycle<'py>(
    py: Python<'py>,
    params: EngineParams,
    schedule: Schedule,
    resolution: usize,
    n_seg: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let record = cycle::run_cycle(
        &params.into(),
        &schedule.into(),
        &integrator(n_seg, "midpoint")?,
        resolution,
    )
    .map_err(err)?;
    let col = |f: &dyn Fn(&quantum_otto::thermo::ThermoSample) -> f64| -> Vec<f64> {
        record.samples.iter().map(|s| f(&s.sample)).collect()
    };
    let d = PyDict::new(py);
    d.set_item("t", col(&|s| s.t))?;
    d.set_item("omega", col(&|s| s.omega))?;
    for k in 0..5 {
        d.set_item(format!("b{}", k + 1), col(&|s| s.b[k]))?;
    }
    d.set_item("E", col(&|s| s.energy))?;
    d.set_item("S_E", col(&|s| s.s_e))?;
    d.set_item("S_vn", col(&|s| s.s_vn))?;
    d.set_item("P_field", col(&|s| s.p_field))?;
    d.set_item("P_friction", col(&|s| s.p_friction))?;
    d.set_item("Qdot", col(&|s| s.qdot))?;
    let branches: Vec<&str> = record.samples.iter().map(|s| s.branch.label()).collect();
    d.set_item("branch", branches)?;
    d.set_item("summary", summary_dict(py, &record.summary)?)?;
    Ok(d)
}

/// Power-optimal schedule for a total cycle time. Returns `(schedule, power)`.
#[pyfunction]
#[pyo3(signature = (params, tau_total, starts=8, seed=0))]
fn optimize_allocations(
    params: EngineParams,
    tau_total: f64,
    starts: usize,
    seed: u64,
) -> PyResult<(Schedule, f64)> {
    let opts = OptimizeOptions {
        starts,
        seed,
        ..OptimizeOptions::default()
    };
    let best = optimize::optimize_allocations(&params.into(), tau_total, &opts).map_err(err)?;
    Ok((best.schedule.into(), best.power))
}

/// Timing-noise amplitude equivalent to dephasing `lam` on an adiabat.
#[pyfunction]
#[pyo3(signature = (lam, tau, n=200))]
fn sigma_for_lambda(lam: f64, tau: f64, n: usize) -> PyResult<f64> {
    noise::sigma_for_lambda(lam, tau, n).map_err(err)
}

/// Monte Carlo ensemble of cycles with noisy adiabat timing matching the
/// dephasing of `params`. Returns `(mean, standard_error)` summary dicts.
#[pyfunction]
#[pyo3(signature = (params, schedule, n_cycles=2000, seed=0, n=200))]
fn monte_carlo<'py>(
    py: Python<'py>,
    params: EngineParams,
    schedule: Schedule,
    n_cycles: usize,
    seed: u64,
    n: usize,
) -> PyResult<(Bound<'py, PyDict>, Bound<'py, PyDict>)> {
    let p: cycle::EngineParams = params.into();
    let s: CoreSchedule = schedule.into();
    let mut cfg = NoiseConfig {
        n,
        n_cycles,
        seed,
        ..NoiseConfig::default()
    };
    cfg.set_lambdas(p.lambda_ab, p.lambda_ba, &s).map_err(err)?;
    let mc = py
        .detach(|| noise::monte_carlo_cycle(&p.with_lambdas(0.0, 0.0), &s, &cfg))
        .map_err(err)?;
    Ok((summary_dict(py, &mc.mean)?, summary_dict(py, &mc.se)?))
}

/// Power and entropy-production rate over a `Λ_ab` grid with
/// `Λ_ba = Λ_ab / ratio`, from the dephasing generator or the noise ensemble.
#[pyfunction]
#[pyo3(signature = (params, schedule, grid, ratio=0.5, mode="lindblad", n_cycles=2000, seed=0))]
#[allow(clippy::too_many_arguments)]
fn dephasing_sweep<'py>(
    py: Python<'py>,
    params: EngineParams,
    schedule: Schedule,
    grid: Vec<f64>,
    ratio: f64,
    mode: &str,
    n_cycles: usize,
    seed: u64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mode = match mode {
        "lindblad" => DephasingMode::Lindblad,
        "noise" => DephasingMode::Noise,
        other => return Err(PyValueError::new_err(format!("unknown mode `{other}`"))),
    };
    let cfg = NoiseConfig {
        n_cycles,
        seed,
        ..NoiseConfig::default()
    };
    let (p, s) = (params.into(), schedule.into());
    let points = py
        .detach(|| optimize::lambda_sigma_sweep(&p, &s, &grid, ratio, mode, &cfg))
        .map_err(err)?;
    points
        .iter()
        .map(|q| {
            let d = PyDict::new(py);
            d.set_item("Lambda_ab", q.lambda_ab)?;
            d.set_item("Lambda_ba", q.lambda_ba)?;
            d.set_item("sigma_ab", q.sigma_ab)?;
            d.set_item("sigma_ba", q.sigma_ba)?;
            d.set_item("P", q.power)?;
            d.set_item("P_se", q.power_se)?;
            d.set_item("dS_rate", q.entropy_rate)?;
            d.set_item("dS_rate_se", q.entropy_rate_se)?;
            d.set_item("W_friction", q.w_friction)?;
            Ok(d)
        })
        .collect()
}

/// Runs a config file's text like the `engine` binary and returns the
/// written file names.
#[pyfunction]
#[pyo3(signature = (text, out, mode=None))]
fn run_config(
    py: Python<'_>,
    text: &str,
    out: PathBuf,
    mode: Option<&str>,
) -> PyResult<Vec<String>> {
    let mode = match mode {
        None => None,
        Some(m) => Some(m.parse::<cli::Mode>().map_err(PyValueError::new_err)?),
    };
    let mut cfg = cli::parse_config(text, mode).map_err(|e| ConfigError::new_err(e.to_string()))?;
    cfg.out = out;
    py.detach(|| cli::run(&cfg)).map_err(|e| match e {
        cli::RunError::Model(m) => err(m),
        cli::RunError::Config(c) => ConfigError::new_err(c.to_string()),
        cli::RunError::Io(s) => pyo3::exceptions::PyOSError::new_err(s),
    })
}

#[pymodule]
fn quantum_otto_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("EngineError", m.py().get_type::<EngineError>())?;
    m.add("ConfigError", m.py().get_type::<ConfigError>())?;
    m.add_class::<EngineParams>()?;
    m.add_class::<Schedule>()?;
    m.add_function(wrap_pyfunction!(evaluate_cycle, m)?)?;
    m.add_function(wrap_pyfunction!(limit_cycle, m)?)?;
    m.add_function(wrap_pyfunction!(run_cycle, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_allocations, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_for_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo, m)?)?;
    m.add_function(wrap_pyfunction!(dephasing_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
