//! Run configuration, experiment orchestration and output files.
//!
//! Configs are TOML with the sections `[run]`, `[engine]`, `[schedule]`,
//! `[noise]` and `[sweep]`. All `[engine]` keys except the two `Lambda`s are
//! required; everything else has defaults. The fully resolved [`RunConfig`]
//! is written to `manifest.json` next to the CSV outputs.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algebra::energy_scale;
use crate::cycle::{
    evaluate_cycle, run_cycle, Branch, CycleRecord, EngineParams, Integrator, Schedule,
    DEFAULT_RESOLUTION,
};
use crate::dynamics::{Ladder, DEFAULT_N_SEG};
use crate::error::Error;
use crate::noise::{
    ensemble_mean_summary, frequency_noise_generator, monte_carlo_cycle, sigma_for_lambda,
    EnsembleMode, MonteCarloSummary, NoiseConfig, NoiseDistribution, NoiseTarget,
    DEFAULT_NOISE_SEGMENTS,
};
use crate::optimize::{
    friction_traces, lambda_sigma_sweep, optimize_allocations, power_vs_cycle_time, run_sweep,
    DephasingMode, DephasingPoint, Objective, OptimizeOptions, SweepSpec, SweepVariable,
};
use crate::thermo::CycleSummary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Cycle,
    Sweep,
    Optimize,
    Montecarlo,
    Control,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Cycle => "cycle",
            Mode::Sweep => "sweep",
            Mode::Optimize => "optimize",
            Mode::Montecarlo => "montecarlo",
            Mode::Control => "control",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Mode::Cycle,
            Mode::Sweep,
            Mode::Optimize,
            Mode::Montecarlo,
            Mode::Control,
        ]
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| format!("unknown mode `{s}`"))
    }
}

/// Sweep settings. `grid` is required in sweep mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub variable: SweepVariable,
    pub grid: Vec<f64>,
    pub objective: Objective,
    /// `Λ_ab / Λ_ba` on dephasing sweeps.
    pub ratio: f64,
    /// Also run the noise ensembles on a `lambda` sweep.
    pub noise: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            variable: SweepVariable::Lambda,
            grid: Vec::new(),
            objective: Objective::Power,
            ratio: 0.5,
            noise: false,
        }
    }
}

/// Everything a run needs, with defaults resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    pub out: PathBuf,
    /// Recorded samples per branch in cycle mode.
    pub resolution: usize,
    pub integrator: Integrator,
    pub engine: EngineParams,
    pub schedule: Schedule,
    pub noise: NoiseConfig,
    pub sweep: SweepConfig,
    pub optimizer: OptimizeOptions,
}

/// Config file layout.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    run: RunSection,
    engine: EngineParams,
    #[serde(default = "Schedule::reference")]
    schedule: Schedule,
    #[serde(default)]
    noise: NoiseSection,
    #[serde(default)]
    sweep: SweepConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RunSection {
    mode: Option<Mode>,
    seed: u64,
    out: Option<PathBuf>,
    resolution: usize,
    n_seg: usize,
    ladder: Ladder,
    starts: usize,
    max_iters: u64,
    restarts: usize,
    tolerance: f64,
    floor: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        let o = OptimizeOptions::default();
        RunSection {
            mode: None,
            seed: 0,
            out: None,
            resolution: DEFAULT_RESOLUTION,
            n_seg: DEFAULT_N_SEG,
            ladder: Ladder::Midpoint,
            starts: o.starts,
            max_iters: o.max_iters,
            restarts: o.restarts,
            tolerance: o.tolerance,
            floor: o.floor,
        }
    }
}

/// `[noise]`; amplitudes left out follow from the engine's `Lambda`s.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct NoiseSection {
    #[serde(rename = "N")]
    n: usize,
    sigma_ab: Option<f64>,
    sigma_ba: Option<f64>,
    distribution: NoiseDistribution,
    target: NoiseTarget,
    ladder: Ladder,
    n_cycles: usize,
    n_batches: usize,
    mode: EnsembleMode,
    burn_in: usize,
    positive_durations: bool,
}

impl Default for NoiseSection {
    fn default() -> Self {
        let d = NoiseConfig::default();
        NoiseSection {
            n: DEFAULT_NOISE_SEGMENTS,
            sigma_ab: None,
            sigma_ba: None,
            distribution: d.distribution,
            target: d.target,
            ladder: d.ladder,
            n_cycles: d.n_cycles,
            n_batches: d.n_batches,
            mode: d.mode,
            burn_in: d.burn_in,
            positive_durations: d.positive_durations,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    /// Malformed text, unknown or missing keys, wrong types.
    Parse {
        line: Option<usize>,
        message: String,
    },
    /// Well-formed config that violates a constraint.
    Validation {
        key: String,
        line: Option<usize>,
        message: String,
    },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Parse { line, message } => match line {
                Some(l) => write!(f, "parse error at line {l}: {message}"),
                None => write!(f, "parse error: {message}"),
            },
            ConfigError::Validation { key, line, message } => match line {
                Some(l) => write!(f, "invalid `{key}` at line {l}: {message}"),
                None => write!(f, "invalid `{key}`: {message}"),
            },
        }
    }
}

impl std::error::Error for ConfigError {}

/// 1-based line of `key` inside `[section]`, or of the section header when
/// the key is absent.
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section {
                header = Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim().trim_matches('"') == key {
                    return Some(i + 1);
                }
            }
        }
    }
    header
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Section holding each validated key.
fn section_of(key: &str) -> &'static str {
    match key {
        "tau_h" | "tau_ba" | "tau_c" | "tau_ab" => "schedule",
        "N" | "sigma_ab" | "sigma_ba" | "n_cycles" | "n_batches" | "burn_in" => "noise",
        "grid" | "ratio" | "variable" => "sweep",
        "mode" | "seed" | "resolution" | "n_seg" | "starts" | "floor" | "tolerance"
        | "max_iters" => "run",
        _ => "engine",
    }
}

fn invalid(text: &str, key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        key: key.to_string(),
        line: locate(text, section_of(key), key),
        message: message.into(),
    }
}

/// Maps a model error raised while validating a section to the offending key.
fn model_error(text: &str, e: &Error, cfg: &RunConfig, fallback: &str) -> ConfigError {
    match e {
        Error::InvalidParameter { name, reason } => invalid(text, name, reason.clone()),
        Error::InvalidTemperature(t) => {
            let key = if *t == cfg.engine.t_h { "T_h" } else { "T_c" };
            invalid(text, key, e.to_string())
        }
        Error::InvalidSigma { sigma, .. } => {
            let key = if *sigma == cfg.noise.sigma_ba {
                "sigma_ba"
            } else {
                "sigma_ab"
            };
            invalid(text, key, e.to_string())
        }
        _ => invalid(text, fallback, e.to_string()),
    }
}

/// Parses and validates a config. `mode` overrides `[run] mode`.
pub fn parse_config(text: &str, mode: Option<Mode>) -> Result<RunConfig, ConfigError> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.span().map(|s| line_of_offset(text, s.start)),
        message: e.message().to_string(),
    })?;
    let Some(mode) = mode.or(file.run.mode) else {
        return Err(invalid(
            text,
            "mode",
            "no mode given in [run] or on the command line",
        ));
    };
    let run = file.run;
    let noise_in = file.noise;
    let integrator = Integrator {
        n_seg: run.n_seg,
        ladder: run.ladder,
    };
    let mut cfg = RunConfig {
        mode,
        seed: run.seed,
        out: run.out.unwrap_or_else(|| PathBuf::from("out")),
        resolution: run.resolution,
        integrator,
        engine: file.engine,
        schedule: file.schedule,
        noise: NoiseConfig {
            n: noise_in.n,
            sigma_ab: 0.0,
            sigma_ba: 0.0,
            distribution: noise_in.distribution,
            target: noise_in.target,
            ladder: noise_in.ladder,
            seed: run.seed,
            n_cycles: noise_in.n_cycles,
            n_batches: noise_in.n_batches,
            mode: noise_in.mode,
            burn_in: noise_in.burn_in,
            positive_durations: noise_in.positive_durations,
        },
        sweep: file.sweep,
        optimizer: OptimizeOptions {
            starts: run.starts,
            max_iters: run.max_iters,
            restarts: run.restarts,
            tolerance: run.tolerance,
            floor: run.floor,
            seed: run.seed,
            integrator,
        },
    };

    cfg.engine
        .validate()
        .map_err(|e| model_error(text, &e, &cfg, "engine"))?;
    cfg.schedule
        .validate()
        .map_err(|e| model_error(text, &e, &cfg, "tau_h"))?;
    if cfg.integrator.n_seg == 0 {
        return Err(invalid(text, "n_seg", "must be >= 1"));
    }
    if cfg.resolution == 0 {
        return Err(invalid(text, "resolution", "must be >= 1"));
    }
    if cfg.noise.n == 0 {
        return Err(invalid(text, "N", "must be >= 1"));
    }
    let derive = |given: Option<f64>, lambda: f64, tau: f64| -> Result<f64, Error> {
        match given {
            Some(s) => Ok(s),
            None if cfg.noise.target == NoiseTarget::Duration => {
                sigma_for_lambda(lambda, tau, cfg.noise.n)
            }
            None => Ok(0.0),
        }
    };
    let sigma_ab = derive(noise_in.sigma_ab, cfg.engine.lambda_ab, cfg.schedule.tau_ab);
    let sigma_ba = derive(noise_in.sigma_ba, cfg.engine.lambda_ba, cfg.schedule.tau_ba);
    cfg.noise.sigma_ab = sigma_ab.map_err(|e| model_error(text, &e, &cfg, "sigma_ab"))?;
    cfg.noise.sigma_ba = sigma_ba.map_err(|e| model_error(text, &e, &cfg, "sigma_ba"))?;
    cfg.noise
        .validate_for(&cfg.engine, &cfg.schedule)
        .map_err(|e| model_error(text, &e, &cfg, "noise"))?;
    if mode == Mode::Control && noise_in.target != NoiseTarget::Frequency {
        return Err(invalid(
            text,
            "target",
            "control mode needs target = \"frequency\"",
        ));
    }
    cfg.optimizer
        .validate()
        .map_err(|e| model_error(text, &e, &cfg, "starts"))?;
    if mode == Mode::Sweep {
        let spec = sweep_spec(&cfg);
        spec.validate()
            .map_err(|e| model_error(text, &e, &cfg, "grid"))?;
    }
    Ok(cfg)
}

fn sweep_spec(cfg: &RunConfig) -> SweepSpec {
    SweepSpec {
        variable: cfg.sweep.variable,
        grid: cfg.sweep.grid.clone(),
        params: cfg.engine,
        schedule: cfg.schedule,
        objective: cfg.sweep.objective,
        ratio: cfg.sweep.ratio,
    }
}

/// Contents of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub program: String,
    pub version: String,
    pub config: RunConfig,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn parse(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// Failure of a run, with its process exit code.
#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Model(Error),
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Io(_) => 1,
            RunError::Model(e) if e.is_validation() => 1,
            RunError::Model(_) => 2,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Model(e) => write!(f, "{}: {e}", e.name()),
            RunError::Io(e) => write!(f, "io: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Model(e)
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

/// Round-trip formatting of a double.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// An in-memory CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn push_nums(&mut self, row: &[f64]) {
        self.rows.push(row.iter().map(|&x| num(x)).collect());
    }

    fn write(&self, dir: &Path) -> Result<(), RunError> {
        let mut w = csv::Writer::from_path(dir.join(&self.name))?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn summary_table(name: &str, s: &CycleSummary) -> Table {
    let mut t = Table::new(name, &["quantity", "value"]);
    for (k, v) in [
        ("W_net", s.w_net),
        ("W_field", s.w_field),
        ("W_friction", s.w_friction),
        ("Q_h", s.q_h),
        ("Q_c", s.q_c),
        ("P", s.p_avg),
        ("dS", s.ds_ext),
        ("dS_rate", s.entropy_rate()),
        ("tau", s.tau),
        ("first_law_residual", s.first_law_residual()),
    ] {
        t.push(vec![k.to_string(), num(v)]);
    }
    t
}

fn cycle_tables(record: &CycleRecord, j: f64) -> Vec<Table> {
    let mut cycle = Table::new(
        "cycle.csv",
        &[
            "t",
            "omega",
            "b1",
            "b2",
            "b3",
            "b4",
            "b5",
            "E",
            "S_E",
            "S_vn",
            "P_field",
            "P_friction",
            "Qdot",
            "branch",
        ],
    );
    for s in &record.samples {
        let x = &s.sample;
        let mut row: Vec<String> = [x.t, x.omega]
            .iter()
            .chain(x.b.iter())
            .chain([x.energy, x.s_e, x.s_vn, x.p_field, x.p_friction, x.qdot].iter())
            .map(|&v| num(v))
            .collect();
        row.push(s.branch.label().to_string());
        cycle.push(row);
    }
    let mut works = Table::new(
        "works.csv",
        &["branch", "t", "omega", "Omega", "W_field", "W_friction"],
    );
    for trace in &record.adiabat_works {
        for p in &trace.points {
            let mut row = vec![trace.branch.label().to_string()];
            row.extend(
                [
                    p.t,
                    p.omega,
                    energy_scale(p.omega, j),
                    p.w_field,
                    p.w_friction,
                ]
                .map(num),
            );
            works.push(row);
        }
    }
    vec![cycle, works, summary_table("summary.csv", &record.summary)]
}

fn dephasing_table(name: &str, points: &[DephasingPoint]) -> Table {
    let mut t = Table::new(
        name,
        &[
            "Lambda_ab",
            "Lambda_ba",
            "sqrt_Lambda_ab",
            "sigma_ab",
            "sigma_ba",
            "P",
            "P_se",
            "dS_rate",
            "dS_rate_se",
            "W_friction",
            "W_friction_se",
        ],
    );
    for p in points {
        t.push_nums(&[
            p.lambda_ab,
            p.lambda_ba,
            p.lambda_ab.sqrt(),
            p.sigma_ab,
            p.sigma_ba,
            p.power,
            p.power_se,
            p.entropy_rate,
            p.entropy_rate_se,
            p.w_friction,
            p.w_friction_se,
        ]);
    }
    t
}

fn montecarlo_tables(mc: &MonteCarloSummary, exact: &CycleSummary, prefix: &str) -> Vec<Table> {
    let mut batches = Table::new(
        &format!("{prefix}batches.csv"),
        &[
            "batch",
            "W_net",
            "W_friction",
            "W_field",
            "Q_h",
            "Q_c",
            "dS",
            "cycle_time",
        ],
    );
    for (i, b) in mc.batch_means.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(
            [
                b.w_net,
                b.w_friction,
                b.w_field,
                b.q_h,
                b.q_c,
                b.ds_ext,
                b.duration,
            ]
            .map(num),
        );
        batches.push(row);
    }
    let mut summary = Table::new(
        &format!("{prefix}summary.csv"),
        &["quantity", "mean", "se", "ensemble_exact"],
    );
    let (rate, rate_se) = mc.entropy_rate();
    for (k, m, s, e) in [
        ("W_net", mc.mean.w_net, mc.se.w_net, exact.w_net),
        ("W_field", mc.mean.w_field, mc.se.w_field, exact.w_field),
        (
            "W_friction",
            mc.mean.w_friction,
            mc.se.w_friction,
            exact.w_friction,
        ),
        ("Q_h", mc.mean.q_h, mc.se.q_h, exact.q_h),
        ("Q_c", mc.mean.q_c, mc.se.q_c, exact.q_c),
        ("P", mc.mean.p_avg, mc.se.p_avg, exact.p_avg),
        ("dS", mc.mean.ds_ext, mc.se.ds_ext, exact.ds_ext),
        ("dS_rate", rate, rate_se, exact.entropy_rate()),
        (
            "cycle_time",
            mc.mean_cycle_time,
            mc.se_cycle_time,
            exact.tau,
        ),
    ] {
        summary.push(vec![k.to_string(), num(m), num(s), num(e)]);
    }
    vec![batches, summary]
}

/// Computes every output table of a run without touching the file system.
pub fn compute(cfg: &RunConfig) -> Result<Vec<Table>, RunError> {
    let (p, s) = (cfg.engine, cfg.schedule);
    match cfg.mode {
        Mode::Cycle => {
            let record = run_cycle(&p, &s, &cfg.integrator, cfg.resolution)?;
            Ok(cycle_tables(&record, p.j))
        }
        Mode::Optimize => {
            let best = optimize_allocations(&p, s.total(), &cfg.optimizer)?;
            let mut starts = Table::new(
                "optimum.csv",
                &[
                    "start",
                    "f_h0",
                    "f_ba0",
                    "f_c0",
                    "f_ab0",
                    "tau_h",
                    "tau_ba",
                    "tau_c",
                    "tau_ab",
                    "P",
                    "evaluations",
                    "best",
                ],
            );
            for r in &best.starts {
                let mut row = vec![r.start.to_string()];
                row.extend(
                    r.initial
                        .iter()
                        .chain(r.schedule.as_array().iter())
                        .map(|&v| num(v)),
                );
                row.push(num(r.power));
                row.push(r.evaluations.to_string());
                row.push((r.start == best.best_start).to_string());
                starts.push(row);
            }
            let mut trace = Table::new(
                "trace.csv",
                &["start", "evaluation", "f_h", "f_ba", "f_c", "f_ab", "P"],
            );
            for t in &best.trace {
                let mut row = vec![t.start.to_string(), t.evaluation.to_string()];
                row.extend(t.fractions.map(num));
                row.push(t.power.map_or_else(|| "nan".to_string(), num));
                trace.push(row);
            }
            let summary = evaluate_cycle(&p, &best.schedule, &cfg.integrator)?;
            Ok(vec![starts, trace, summary_table("summary.csv", &summary)])
        }
        Mode::Sweep => sweep_tables(cfg),
        Mode::Montecarlo => {
            let noisy = p.with_lambdas(0.0, 0.0);
            let mc = monte_carlo_cycle(&noisy, &s, &cfg.noise)?;
            let exact = ensemble_mean_summary(&noisy, &s, &cfg.noise)?;
            Ok(montecarlo_tables(&mc, &exact, "montecarlo_"))
        }
        Mode::Control => {
            let noisy = p.with_lambdas(0.0, 0.0);
            let mc = monte_carlo_cycle(&noisy, &s, &cfg.noise)?;
            let exact = ensemble_mean_summary(&noisy, &s, &cfg.noise)?;
            let clean = evaluate_cycle(&noisy, &s, &cfg.noise.integrator())?;
            let mut tables = montecarlo_tables(&mc, &exact, "control_");
            let mut t = Table::new("control.csv", &["quantity", "value"]);
            let dt = s.tau_ba / cfg.noise.n as f64;
            let g = frequency_noise_generator(
                p.omega_b,
                p.j,
                dt,
                cfg.noise.sigma_ba,
                cfg.noise.distribution,
                cfg.noise.n_cycles.max(4),
                cfg.seed,
            )?;
            for (k, v) in [
                ("P_no_noise", clean.p_avg),
                ("P_ensemble_exact", exact.p_avg),
                ("P_mc", mc.mean.p_avg),
                ("P_mc_se", mc.se.p_avg),
                ("gamma", g.gamma),
                ("gamma_fit", g.gamma_fit),
                ("gamma_se", g.gamma_se),
                ("generator_residual", g.residual),
            ] {
                t.push(vec![k.to_string(), num(v)]);
            }
            tables.push(t);
            Ok(tables)
        }
    }
}

fn sweep_tables(cfg: &RunConfig) -> Result<Vec<Table>, RunError> {
    let (p, s, sw) = (cfg.engine, cfg.schedule, &cfg.sweep);
    match sw.variable {
        SweepVariable::CycleTime if sw.objective == Objective::Power => {
            let pts =
                power_vs_cycle_time(&p, (p.lambda_ab, p.lambda_ba), &sw.grid, &cfg.optimizer)?;
            let mut t = Table::new(
                "power_vs_tau.csv",
                &[
                    "tau",
                    "tau_h",
                    "tau_ba",
                    "tau_c",
                    "tau_ab",
                    "P_ref",
                    "P_lubricated",
                ],
            );
            for q in &pts {
                let a = q.schedule.as_array();
                t.push_nums(&[q.tau, a[0], a[1], a[2], a[3], q.p_ref, q.p_lubricated]);
            }
            Ok(vec![t])
        }
        SweepVariable::Lambda => {
            let mut tables = vec![dephasing_table(
                "sweep_lindblad.csv",
                &lambda_sigma_sweep(
                    &p,
                    &s,
                    &sw.grid,
                    sw.ratio,
                    DephasingMode::Lindblad,
                    &cfg.noise,
                )?,
            )];
            if sw.noise {
                tables.push(dephasing_table(
                    "sweep_noise.csv",
                    &lambda_sigma_sweep(
                        &p,
                        &s,
                        &sw.grid,
                        sw.ratio,
                        DephasingMode::Noise,
                        &cfg.noise,
                    )?,
                ));
            }
            let pairs: Vec<(f64, f64)> = sw.grid.iter().map(|&l| (l, l / sw.ratio)).collect();
            let mut t = Table::new(
                "friction.csv",
                &[
                    "Lambda_ab",
                    "Lambda_ba",
                    "branch",
                    "t",
                    "omega",
                    "Omega",
                    "W_field",
                    "W_friction",
                ],
            );
            for ((ab, ba), traces) in friction_traces(&p, &s, &pairs, &cfg.integrator)? {
                for trace in traces {
                    for w in &trace.points {
                        let mut row = vec![num(ab), num(ba), trace.branch.label().to_string()];
                        row.extend([w.t, w.omega, w.scale, w.w_field, w.w_friction].map(num));
                        t.push(row);
                    }
                }
            }
            tables.push(t);
            Ok(tables)
        }
        _ => {
            let rows = run_sweep(&sweep_spec(cfg), &cfg.integrator, &cfg.noise)?;
            let mut t = Table::new("sweep.csv", &["x", "value", "P", "dS_rate", "W_friction"]);
            for r in &rows {
                t.push_nums(&[r.x, r.value, r.power, r.entropy_rate, r.w_friction]);
            }
            Ok(vec![t])
        }
    }
}

/// Runs `cfg` and writes the tables plus `manifest.json` into `cfg.out`.
/// Returns the written file names.
pub fn run(cfg: &RunConfig) -> Result<Vec<String>, RunError> {
    let tables = compute(cfg)?;
    fs::create_dir_all(&cfg.out)?;
    let mut outputs = Vec::with_capacity(tables.len() + 1);
    for t in &tables {
        t.write(&cfg.out)?;
        outputs.push(t.name.clone());
    }
    outputs.push("manifest.json".to_string());
    let manifest = Manifest {
        program: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        outputs: outputs.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| RunError::Io(e.to_string()))?;
    fs::write(cfg.out.join("manifest.json"), json + "\n")?;
    Ok(outputs)
}

/// Labels of the cycle branches in output order.
pub fn branch_labels() -> [&'static str; 4] {
    Branch::ORDER.map(Branch::label)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[run]
mode = "cycle"

[engine]
J = 2.0
omega_a = 5.08364
omega_b = 12.6355
T_h = 7.5
T_c = 1.5
Gamma_h = 1.16748
Gamma_c = 1.16748
gamma_h = -0.05
gamma_c = -0.06
"#;

    #[test]
    fn minimal_config_resolves_defaults() {
        let cfg = parse_config(MINIMAL, None).unwrap();
        assert_eq!(cfg.engine, EngineParams::reference());
        assert_eq!(cfg.schedule, Schedule::reference());
        assert_eq!(cfg.integrator, Integrator::default());
        assert_eq!(cfg.noise.sigma_ab, 0.0);
        assert_eq!(cfg.mode, Mode::Cycle);
    }

    #[test]
    fn command_line_mode_wins() {
        assert_eq!(
            parse_config(MINIMAL, Some(Mode::Optimize)).unwrap().mode,
            Mode::Optimize
        );
    }

    #[test]
    fn missing_key_is_reported() {
        let text = MINIMAL.replace("T_h = 7.5\n", "");
        let err = parse_config(&text, None).unwrap_err();
        assert!(
            matches!(err, ConfigError::Parse { line: Some(_), .. }),
            "{err}"
        );
        assert!(err.to_string().contains("T_h"), "{err}");
    }

    #[test]
    fn unknown_key_is_reported_with_line() {
        let text = MINIMAL.replace("T_c = 1.5", "T_c = 1.5\nT_x = 3.0");
        let err = parse_config(&text, None).unwrap_err();
        let ConfigError::Parse { line, message } = &err else {
            panic!("{err}")
        };
        assert_eq!(*line, Some(11));
        assert!(message.contains("T_x"));
    }

    #[test]
    fn reversed_baths_name_the_key() {
        let text = MINIMAL.replace("T_c = 1.5", "T_c = 9.5");
        let err = parse_config(&text, None).unwrap_err();
        let ConfigError::Validation { key, line, message } = &err else {
            panic!("{err}")
        };
        assert_eq!(key, "T_h");
        assert_eq!(*line, Some(9));
        assert!(message.contains("cold bath hotter than hot bath"));
    }

    #[test]
    fn sigma_follows_lambda() {
        let text = MINIMAL.replace(
            "gamma_c = -0.06",
            "gamma_c = -0.06\nLambda_ab = 0.64\nLambda_ba = 1.28",
        );
        let cfg = parse_config(&text, Some(Mode::Montecarlo)).unwrap();
        assert!((cfg.noise.sigma_ab - 0.006645299).abs() < 1e-8);
        assert!(cfg.noise.sigma_ba > cfg.noise.sigma_ab);
    }

    #[test]
    fn sweep_needs_a_grid() {
        let err = parse_config(MINIMAL, Some(Mode::Sweep)).unwrap_err();
        assert!(
            matches!(&err, ConfigError::Validation { key, .. } if key == "grid"),
            "{err}"
        );
    }

    #[test]
    fn manifest_round_trips() {
        let cfg = parse_config(MINIMAL, None).unwrap();
        let m = Manifest {
            program: "p".into(),
            version: "v".into(),
            config: cfg.clone(),
            outputs: vec![],
        };
        let back = Manifest::parse(&serde_json::to_string_pretty(&m).unwrap()).unwrap();
        assert_eq!(back.config, cfg);
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }
}
