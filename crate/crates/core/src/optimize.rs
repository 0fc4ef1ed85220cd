//! Time-allocation optimization at fixed cycle time, and the sweeps behind
//! the power, friction and dephasing-equivalence curves.
//!
//! Allocations are searched over the simplex of time fractions through an
//! unconstrained softmax parameterization,
//! `f_i = ε + (1 − 4ε) e^{x_i} / Σ e^{x_j}` with `x_4 = 0`, using
//! Nelder–Mead from several starts.

use std::cell::RefCell;
use std::rc::Rc;

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cycle::{
    cycle_power, evaluate_cycle, run_cycle, AdiabatWorkTrace, EngineParams, Integrator, Schedule,
};
use crate::error::{Error, Result};
use crate::noise::{monte_carlo_cycle, NoiseConfig};
use crate::thermo::CycleSummary;

/// Paired coefficients of the lubricated engine, `(Λ_ab, Λ_ba)`.
pub const LUBRICANT: (f64, f64) = (0.64, 1.28);

/// Fixed allocation fractions every start set contains.
const SEED_FRACTIONS: [[f64; 4]; 4] = [
    [0.25, 0.25, 0.25, 0.25],
    [0.45, 0.05, 0.45, 0.05],
    [0.49, 0.01, 0.49, 0.01],
    [0.40, 0.10, 0.40, 0.10],
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeOptions {
    /// Number of Nelder–Mead starts (at least 8).
    pub starts: usize,
    pub max_iters: u64,
    /// Polishing restarts from the best vertex after convergence.
    pub restarts: usize,
    /// Simplex standard-deviation tolerance on the cost.
    pub tolerance: f64,
    /// Per-branch floor as a fraction of the cycle time.
    pub floor: f64,
    pub seed: u64,
    #[serde(skip)]
    pub integrator: Integrator,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            starts: 8,
            max_iters: 4000,
            restarts: 2,
            tolerance: 1e-13,
            floor: 1e-6,
            seed: 0,
            integrator: Integrator::default(),
        }
    }
}

impl OptimizeOptions {
    pub fn validate(&self) -> Result<()> {
        if self.starts < 8 {
            return Err(Error::param("starts", "must be >= 8"));
        }
        if !(self.floor > 0.0 && self.floor < 0.25) {
            return Err(Error::param("floor", "must lie in (0, 0.25)"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::param("tolerance", "must be > 0"));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be >= 1"));
        }
        Ok(())
    }
}

/// Fractions from softmax logits `(x1, x2, x3, 0)`.
pub fn fractions_from_logits(x: &[f64], floor: f64) -> [f64; 4] {
    let logits = [x[0], x[1], x[2], 0.0];
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = logits.map(|l| (l - top).exp());
    let sum: f64 = e.iter().sum();
    e.map(|v| floor + (1.0 - 4.0 * floor) * v / sum)
}

/// Logits reproducing `fractions` (each above the floor).
pub fn logits_from_fractions(fractions: &[f64; 4], floor: f64) -> Vec<f64> {
    let total: f64 = fractions.iter().sum();
    let p = fractions.map(|f| ((f / total - floor) / (1.0 - 4.0 * floor)).max(1e-300));
    (0..3).map(|i| (p[i] / p[3]).ln()).collect()
}

/// One objective evaluation during a search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub start: usize,
    pub evaluation: usize,
    pub fractions: [f64; 4],
    /// `None` when the cycle had no limit cycle.
    pub power: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartResult {
    pub start: usize,
    pub initial: [f64; 4],
    pub schedule: Schedule,
    pub power: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub schedule: Schedule,
    pub power: f64,
    /// Index of the winning start.
    pub best_start: usize,
    pub starts: Vec<StartResult>,
    pub trace: Vec<TracePoint>,
}

struct PowerObjective<'a> {
    params: &'a EngineParams,
    tau: f64,
    floor: f64,
    integrator: &'a Integrator,
    start: usize,
    trace: Rc<RefCell<Vec<TracePoint>>>,
}

impl PowerObjective<'_> {
    fn schedule(&self, x: &[f64]) -> Schedule {
        let f = fractions_from_logits(x, self.floor);
        Schedule::from_array(f.map(|v| v * self.tau))
    }
}

impl CostFunction for PowerObjective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let power = cycle_power(self.params, &self.schedule(x), self.integrator).ok();
        let mut trace = self.trace.borrow_mut();
        let evaluation = trace.len();
        trace.push(TracePoint {
            start: self.start,
            evaluation,
            fractions: fractions_from_logits(x, self.floor),
            power,
        });
        Ok(power.map_or(f64::INFINITY, |p| -p))
    }
}

fn initial_simplex(x0: &[f64]) -> Vec<Vec<f64>> {
    let mut simplex = vec![x0.to_vec()];
    for i in 0..x0.len() {
        let mut v = x0.to_vec();
        v[i] += 1.0;
        simplex.push(v);
    }
    simplex
}

fn start_set(opts: &OptimizeOptions) -> Vec<[f64; 4]> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts: Vec<[f64; 4]> = SEED_FRACTIONS.to_vec();
    while starts.len() < opts.starts {
        let logits: [f64; 4] = std::array::from_fn(|_| 2.0 * rng.sample::<f64, _>(StandardNormal));
        let x: Vec<f64> = (0..3).map(|i| logits[i] - logits[3]).collect();
        starts.push(fractions_from_logits(&x, opts.floor));
    }
    starts.truncate(opts.starts);
    starts
}

fn run_start(
    params: &EngineParams,
    tau: f64,
    opts: &OptimizeOptions,
    start: usize,
    initial: [f64; 4],
) -> (Option<StartResult>, Vec<TracePoint>) {
    let trace = Rc::new(RefCell::new(Vec::new()));
    let objective = || PowerObjective {
        params,
        tau,
        floor: opts.floor,
        integrator: &opts.integrator,
        start,
        trace: Rc::clone(&trace),
    };
    let mut x = logits_from_fractions(&initial, opts.floor);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _ in 0..=opts.restarts {
        let Ok(solver) = NelderMead::new(initial_simplex(&x)).with_sd_tolerance(opts.tolerance)
        else {
            break;
        };
        let run = Executor::new(objective(), solver)
            .configure(|s| s.max_iters(opts.max_iters))
            .run();
        let Ok(run) = run else { break };
        let state = run.state();
        let (Some(param), cost) = (state.get_best_param(), state.get_best_cost()) else {
            break;
        };
        if !cost.is_finite() {
            break;
        }
        let improved = best.as_ref().is_none_or(|(_, c)| cost < *c);
        if improved {
            best = Some((param.clone(), cost));
        }
        x = param.clone();
        if !improved {
            break;
        }
    }
    let trace = trace.take();
    let result = best.map(|(x, cost)| StartResult {
        start,
        initial,
        schedule: objective_schedule(&x, tau, opts.floor),
        power: -cost,
        evaluations: trace.len(),
    });
    (result, trace)
}

fn objective_schedule(x: &[f64], tau: f64, floor: f64) -> Schedule {
    Schedule::from_array(fractions_from_logits(x, floor).map(|v| v * tau))
}

/// Maximizes the limit-cycle power `−W_net/τ` over allocations summing to
/// `tau_total`.
pub fn optimize_allocations(
    params: &EngineParams,
    tau_total: f64,
    opts: &OptimizeOptions,
) -> Result<Optimum> {
    params.validate()?;
    opts.validate()?;
    if !(tau_total > 0.0) || !tau_total.is_finite() {
        return Err(Error::InfeasibleSchedule(format!(
            "cycle time must be > 0, got {tau_total}"
        )));
    }
    let starts = start_set(opts);
    let runs: Vec<(Option<StartResult>, Vec<TracePoint>)> = starts
        .par_iter()
        .enumerate()
        .map(|(i, f)| run_start(params, tau_total, opts, i, *f))
        .collect();
    let mut results = Vec::new();
    let mut trace = Vec::new();
    for (r, t) in runs {
        results.extend(r);
        trace.extend(t);
    }
    let best = results
        .iter()
        .fold(None::<&StartResult>, |acc, r| match acc {
            Some(a) if a.power >= r.power => Some(a),
            _ => Some(r),
        })
        .ok_or_else(|| {
            Error::InfeasibleSchedule(format!(
                "no start reached a limit cycle at tau = {tau_total}"
            ))
        })?;
    Ok(Optimum {
        schedule: best.schedule,
        power: best.power,
        best_start: best.start,
        starts: results.clone(),
        trace,
    })
}

/// Exhaustive search over allocations that are multiples of `τ/steps`
/// (`(steps+1)(steps+2)(steps+3)/6` points). Points without a limit cycle
/// are skipped.
pub fn grid_search(
    params: &EngineParams,
    tau_total: f64,
    steps: usize,
    integrator: &Integrator,
) -> Result<(Schedule, f64)> {
    let mut points = Vec::new();
    for i in 0..=steps {
        for j in 0..=steps - i {
            for k in 0..=steps - i - j {
                let l = steps - i - j - k;
                points.push([i, j, k, l].map(|n| tau_total * n as f64 / steps as f64));
            }
        }
    }
    let powers: Vec<Option<f64>> = points
        .par_iter()
        .map(|a| cycle_power(params, &Schedule::from_array(*a), integrator).ok())
        .collect();
    points
        .iter()
        .zip(powers)
        .filter_map(|(a, p)| p.map(|p| (Schedule::from_array(*a), p)))
        .fold(None::<(Schedule, f64)>, |acc, (s, p)| match acc {
            Some((bs, bp)) if bp >= p => Some((bs, bp)),
            _ => Some((s, p)),
        })
        .ok_or_else(|| Error::InfeasibleSchedule("no grid point reached a limit cycle".into()))
}

/// One point of the optimal-power curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub tau: f64,
    pub schedule: Schedule,
    pub p_ref: f64,
    pub p_lubricated: f64,
}

/// Optimizes allocations without dephasing at each cycle time, then
/// re-evaluates the frozen schedule with `lubricant = (Λ_ab, Λ_ba)`.
pub fn power_vs_cycle_time(
    params: &EngineParams,
    lubricant: (f64, f64),
    taus: &[f64],
    opts: &OptimizeOptions,
) -> Result<Vec<PowerPoint>> {
    check_grid(taus)?;
    let reference = params.with_lambdas(0.0, 0.0);
    let lubricated = params.with_lambdas(lubricant.0, lubricant.1);
    lubricated.validate()?;
    taus.par_iter()
        .map(|&tau| {
            let best = optimize_allocations(&reference, tau, opts)?;
            Ok(PowerPoint {
                tau,
                schedule: best.schedule,
                p_ref: best.power,
                p_lubricated: cycle_power(&lubricated, &best.schedule, &opts.integrator)?,
            })
        })
        .collect()
}

/// Checks that `grid` is non-empty, finite and strictly monotone.
pub fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::param("grid", "must not be empty"));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::param("grid", "values must be finite"));
    }
    let up = grid.windows(2).all(|w| w[1] > w[0]);
    let down = grid.windows(2).all(|w| w[1] < w[0]);
    if !(up || down) {
        return Err(Error::param("grid", "must be strictly monotone"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DephasingMode {
    Lindblad,
    Noise,
}

/// One point of a dephasing sweep. Standard errors are zero in Lindblad
/// mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DephasingPoint {
    pub lambda_ab: f64,
    pub lambda_ba: f64,
    pub sigma_ab: f64,
    pub sigma_ba: f64,
    pub power: f64,
    pub power_se: f64,
    pub entropy_rate: f64,
    pub entropy_rate_se: f64,
    pub w_friction: f64,
    pub w_friction_se: f64,
}

/// Sweeps `Λ_ab` over `grid` with `Λ_ba = Λ_ab / ratio` at a fixed schedule.
/// In noise mode each point is a Monte Carlo ensemble with `σ = √(2τΛ/N)`;
/// `noise` supplies everything else (its amplitudes are overwritten). In
/// Lindblad mode the integrator matches the noise segmentation.
pub fn lambda_sigma_sweep(
    params: &EngineParams,
    schedule: &Schedule,
    grid: &[f64],
    ratio: f64,
    mode: DephasingMode,
    noise: &NoiseConfig,
) -> Result<Vec<DephasingPoint>> {
    check_grid(grid)?;
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(Error::param("ratio", "must be > 0"));
    }
    let mut out = Vec::with_capacity(grid.len());
    for &lambda_ab in grid {
        let lambda_ba = lambda_ab / ratio;
        let mut cfg = *noise;
        cfg.set_lambdas(lambda_ab, lambda_ba, schedule)?;
        let point = match mode {
            DephasingMode::Lindblad => {
                let s = evaluate_cycle(
                    &params.with_lambdas(lambda_ab, lambda_ba),
                    schedule,
                    &cfg.integrator(),
                )?;
                lindblad_point(lambda_ab, lambda_ba, &cfg, &s)
            }
            DephasingMode::Noise => {
                let mc = monte_carlo_cycle(&params.with_lambdas(0.0, 0.0), schedule, &cfg)?;
                let (rate, rate_se) = mc.entropy_rate();
                DephasingPoint {
                    lambda_ab,
                    lambda_ba,
                    sigma_ab: cfg.sigma_ab,
                    sigma_ba: cfg.sigma_ba,
                    power: mc.mean.p_avg,
                    power_se: mc.se.p_avg,
                    entropy_rate: rate,
                    entropy_rate_se: rate_se,
                    w_friction: mc.mean.w_friction,
                    w_friction_se: mc.se.w_friction,
                }
            }
        };
        out.push(point);
    }
    Ok(out)
}

fn lindblad_point(
    lambda_ab: f64,
    lambda_ba: f64,
    cfg: &NoiseConfig,
    s: &CycleSummary,
) -> DephasingPoint {
    DephasingPoint {
        lambda_ab,
        lambda_ba,
        sigma_ab: cfg.sigma_ab,
        sigma_ba: cfg.sigma_ba,
        power: s.p_avg,
        power_se: 0.0,
        entropy_rate: s.entropy_rate(),
        entropy_rate_se: 0.0,
        w_friction: s.w_friction,
        w_friction_se: 0.0,
    }
}

/// `(Λ_ab, Λ_ba)` with the running works on both adiabats.
pub type FrictionTraces = ((f64, f64), Vec<AdiabatWorkTrace>);

/// Running friction work along both adiabats for each `(Λ_ab, Λ_ba)`.
pub fn friction_traces(
    params: &EngineParams,
    schedule: &Schedule,
    lambdas: &[(f64, f64)],
    integrator: &Integrator,
) -> Result<Vec<FrictionTraces>> {
    lambdas
        .par_iter()
        .map(|&(ab, ba)| {
            let record = run_cycle(&params.with_lambdas(ab, ba), schedule, integrator, 1)?;
            Ok(((ab, ba), record.adiabat_works))
        })
        .collect()
}

/// Quantity a generic sweep reports in its `value` column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    Power,
    EntropyProduction,
    WFriction,
}

/// Swept quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Total cycle time, with the base allocation fractions kept.
    CycleTime,
    /// `Λ_ab`, with `Λ_ba = Λ_ab / ratio`.
    #[default]
    Lambda,
    /// `σ_ab` of duration noise, with `σ_ba` set from the matching `Λ_ba`.
    Sigma,
    #[serde(rename = "J")]
    J,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub grid: Vec<f64>,
    pub params: EngineParams,
    pub schedule: Schedule,
    pub objective: Objective,
    /// `Λ_ab / Λ_ba` for dephasing sweeps.
    pub ratio: f64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        check_grid(&self.grid)?;
        self.params.validate()?;
        self.schedule.validate()?;
        if !(self.ratio > 0.0) || !self.ratio.is_finite() {
            return Err(Error::param("ratio", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub x: f64,
    pub value: f64,
    pub power: f64,
    pub entropy_rate: f64,
    pub w_friction: f64,
}

fn row(x: f64, objective: Objective, s: &CycleSummary) -> SweepRow {
    let value = match objective {
        Objective::Power => s.p_avg,
        Objective::EntropyProduction => s.ds_ext,
        Objective::WFriction => s.w_friction,
    };
    SweepRow {
        x,
        value,
        power: s.p_avg,
        entropy_rate: s.entropy_rate(),
        w_friction: s.w_friction,
    }
}

/// Deterministic sweep of one quantity. Sigma sweeps evaluate the exact
/// ensemble mean of duration noise configured by `noise`.
pub fn run_sweep(
    spec: &SweepSpec,
    integrator: &Integrator,
    noise: &NoiseConfig,
) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    spec.grid
        .par_iter()
        .map(|&x| {
            let (p, s) = (spec.params, spec.schedule);
            let summary = match spec.variable {
                SweepVariable::CycleTime => {
                    if !(x > 0.0) {
                        return Err(Error::InfeasibleSchedule(format!(
                            "cycle time must be > 0, got {x}"
                        )));
                    }
                    let scale = x / s.total();
                    evaluate_cycle(
                        &p,
                        &Schedule::from_array(s.as_array().map(|t| t * scale)),
                        integrator,
                    )?
                }
                SweepVariable::Lambda => {
                    evaluate_cycle(&p.with_lambdas(x, x / spec.ratio), &s, integrator)?
                }
                SweepVariable::J => evaluate_cycle(&EngineParams { j: x, ..p }, &s, integrator)?,
                SweepVariable::Sigma => {
                    let mut cfg = *noise;
                    let lambda_ab = crate::noise::lambda_for_sigma(x, s.tau_ab, cfg.n)?;
                    cfg.set_lambdas(lambda_ab, lambda_ab / spec.ratio, &s)?;
                    crate::noise::ensemble_mean_summary(&p.with_lambdas(0.0, 0.0), &s, &cfg)?
                }
            };
            Ok(row(x, spec.objective, &summary))
        })
        .collect()
}
