//! The four-stroke cycle and its limit cycle.
//!
//! Branch sequence, anchored at the start of the hot isochore:
//! hot isochore at `ω_b` → expansion adiabat `ω_b → ω_a` → cold isochore at
//! `ω_a` → compression adiabat `ω_a → ω_b`. On expectation values the cycle
//! map is `M = U_ab ∘ U_c ∘ U_ba ∘ U_h`; its transpose, the map acting on
//! operators, is the product `U_ba U_c U_ab U_h` in operator order.

use serde::{Deserialize, Serialize};

use nalgebra::{Matrix5, LU};

use crate::algebra::{energy_scale, BVector, Mat5};
use crate::dynamics::{
    adiabat_map, adiabat_propagate, adiabat_states_at, isochore_generator, AdiabatParams,
    AffineMap, Generator, IsochoreParams, Ladder, DEFAULT_N_SEG,
};
use crate::error::{Error, Result};
use crate::thermo::{
    cumulative_works, entropy_production, AdiabatWorks, CycleSummary, ThermoSample,
};

/// Default number of recorded samples per branch.
pub const DEFAULT_RESOLUTION: usize = 200;

/// Spectral radius at or above which the cycle map has no unique fixed point.
const CONTRACTION_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineParams {
    #[serde(rename = "J")]
    pub j: f64,
    pub omega_a: f64,
    pub omega_b: f64,
    #[serde(rename = "T_h")]
    pub t_h: f64,
    #[serde(rename = "T_c")]
    pub t_c: f64,
    #[serde(rename = "Gamma_h")]
    pub gamma_h: f64,
    #[serde(rename = "Gamma_c")]
    pub gamma_c: f64,
    /// Pure-dephasing coefficients as given; the generator uses |γ|.
    #[serde(rename = "gamma_h")]
    pub gamma_dephasing_h: f64,
    #[serde(rename = "gamma_c")]
    pub gamma_dephasing_c: f64,
    #[serde(rename = "Lambda_ab", default)]
    pub lambda_ab: f64,
    #[serde(rename = "Lambda_ba", default)]
    pub lambda_ba: f64,
}

impl EngineParams {
    /// Reference parameter set of the three-cycle comparison (no dephasing
    /// on the adiabats).
    pub fn reference() -> Self {
        EngineParams {
            j: 2.0,
            omega_a: 5.08364,
            omega_b: 12.6355,
            t_h: 7.5,
            t_c: 1.5,
            gamma_h: 1.16748,
            gamma_c: 1.16748,
            gamma_dephasing_h: -0.05,
            gamma_dephasing_c: -0.06,
            lambda_ab: 0.0,
            lambda_ba: 0.0,
        }
    }

    pub fn with_lambdas(self, lambda_ab: f64, lambda_ba: f64) -> Self {
        EngineParams {
            lambda_ab,
            lambda_ba,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.j,
            self.omega_a,
            self.omega_b,
            self.t_h,
            self.t_c,
            self.gamma_h,
            self.gamma_c,
            self.gamma_dephasing_h,
            self.gamma_dephasing_c,
            self.lambda_ab,
            self.lambda_ba,
        ];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(Error::param("engine", "all parameters must be finite"));
        }
        if !(self.omega_a > 0.0) {
            return Err(Error::param("omega_a", "must be > 0"));
        }
        if !(self.omega_b > self.omega_a) {
            return Err(Error::param("omega_b", "must exceed omega_a"));
        }
        if !(self.t_c > 0.0) {
            return Err(Error::InvalidTemperature(self.t_c));
        }
        if !(self.t_h > self.t_c) {
            return Err(Error::param("T_h", "cold bath hotter than hot bath"));
        }
        for (name, v) in [
            ("Gamma_h", self.gamma_h),
            ("Gamma_c", self.gamma_c),
            ("Lambda_ab", self.lambda_ab),
            ("Lambda_ba", self.lambda_ba),
        ] {
            if v < 0.0 {
                return Err(Error::param(name, "must be >= 0"));
            }
        }
        Ok(())
    }

    pub fn hot_isochore(&self) -> IsochoreParams {
        IsochoreParams {
            omega: self.omega_b,
            temperature: self.t_h,
            gamma_rate: self.gamma_h,
            pure_dephasing: self.gamma_dephasing_h,
        }
    }

    pub fn cold_isochore(&self) -> IsochoreParams {
        IsochoreParams {
            omega: self.omega_a,
            temperature: self.t_c,
            gamma_rate: self.gamma_c,
            pure_dephasing: self.gamma_dephasing_c,
        }
    }

    /// Expansion adiabat `ω_b → ω_a`.
    pub fn expansion(&self, tau: f64, integrator: &Integrator) -> AdiabatParams {
        AdiabatParams {
            omega_start: self.omega_b,
            omega_end: self.omega_a,
            tau,
            lambda: self.lambda_ba,
            n_seg: integrator.n_seg,
            ladder: integrator.ladder,
        }
    }

    /// Compression adiabat `ω_a → ω_b`.
    pub fn compression(&self, tau: f64, integrator: &Integrator) -> AdiabatParams {
        AdiabatParams {
            omega_start: self.omega_a,
            omega_end: self.omega_b,
            tau,
            lambda: self.lambda_ab,
            n_seg: integrator.n_seg,
            ladder: integrator.ladder,
        }
    }
}

/// Time allocations on the four branches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub tau_h: f64,
    pub tau_ba: f64,
    pub tau_c: f64,
    pub tau_ab: f64,
}

impl Schedule {
    /// Optimal-power allocations reported for the reference engine.
    pub fn reference() -> Self {
        Schedule {
            tau_h: 1.0795,
            tau_ba: 0.01478,
            tau_c: 1.0088,
            tau_ab: 0.0069,
        }
    }

    pub fn total(&self) -> f64 {
        self.tau_h + self.tau_ba + self.tau_c + self.tau_ab
    }

    /// Allocations in cycle order `(τ_h, τ_ba, τ_c, τ_ab)`.
    pub fn as_array(&self) -> [f64; 4] {
        [self.tau_h, self.tau_ba, self.tau_c, self.tau_ab]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Schedule {
            tau_h: a[0],
            tau_ba: a[1],
            tau_c: a[2],
            tau_ab: a[3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self
            .as_array()
            .iter()
            .any(|t| !(*t >= 0.0) || !t.is_finite())
        {
            return Err(Error::InfeasibleSchedule(
                "time allocations must be finite and >= 0".into(),
            ));
        }
        if !(self.tau_h > 0.0 && self.tau_c > 0.0) {
            return Err(Error::InfeasibleSchedule(
                "both isochore times must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Adiabat discretization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Integrator {
    pub n_seg: usize,
    pub ladder: Ladder,
}

impl Default for Integrator {
    fn default() -> Self {
        Integrator {
            n_seg: DEFAULT_N_SEG,
            ladder: Ladder::Midpoint,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    Hot,
    Expansion,
    Cold,
    Compression,
}

impl Branch {
    pub const ORDER: [Branch; 4] = [
        Branch::Hot,
        Branch::Expansion,
        Branch::Cold,
        Branch::Compression,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Branch::Hot => "h",
            Branch::Expansion => "ba",
            Branch::Cold => "c",
            Branch::Compression => "ab",
        }
    }

    pub fn is_adiabat(self) -> bool {
        matches!(self, Branch::Expansion | Branch::Compression)
    }
}

/// The four branch maps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchMaps {
    pub hot: AffineMap,
    pub expansion: AffineMap,
    pub cold: AffineMap,
    pub compression: AffineMap,
}

impl BranchMaps {
    pub fn get(&self, branch: Branch) -> &AffineMap {
        match branch {
            Branch::Hot => &self.hot,
            Branch::Expansion => &self.expansion,
            Branch::Cold => &self.cold,
            Branch::Compression => &self.compression,
        }
    }

    /// Full-cycle map anchored at the start of the hot isochore.
    pub fn cycle_map(&self) -> AffineMap {
        AffineMap::chain([&self.hot, &self.expansion, &self.cold, &self.compression])
    }
}

/// Generators of both isochores (hot, cold).
pub fn isochore_generators(params: &EngineParams) -> Result<(Generator, Generator)> {
    Ok((
        isochore_generator(&params.hot_isochore(), params.j)?,
        isochore_generator(&params.cold_isochore(), params.j)?,
    ))
}

pub fn branch_maps(
    params: &EngineParams,
    schedule: &Schedule,
    integrator: &Integrator,
) -> Result<BranchMaps> {
    params.validate()?;
    schedule.validate()?;
    let (hot, cold) = isochore_generators(params)?;
    Ok(BranchMaps {
        hot: hot.exp(schedule.tau_h),
        expansion: adiabat_map(&params.expansion(schedule.tau_ba, integrator), params.j)?,
        cold: cold.exp(schedule.tau_c),
        compression: adiabat_map(&params.compression(schedule.tau_ab, integrator), params.j)?,
    })
}

pub fn spectral_radius(m: &Mat5) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Fixed point `b* = (I − M)^{-1} c` of a contracting affine map.
pub fn limit_cycle(u: &AffineMap) -> Result<BVector> {
    let radius = spectral_radius(&u.m);
    if !(radius < 1.0 - CONTRACTION_MARGIN) {
        return Err(Error::NoContraction {
            spectral_radius: radius,
        });
    }
    let lu = LU::new(Matrix5::identity() - u.m);
    lu.solve(&u.c).map(BVector).ok_or(Error::NoContraction {
        spectral_radius: radius,
    })
}

/// Fixed point by repeated application, returning the state and the number
/// of iterations used.
pub fn limit_cycle_iterated(
    u: &AffineMap,
    start: &BVector,
    tol: f64,
    max_iter: usize,
) -> Result<(BVector, usize)> {
    let mut b = *start;
    for k in 1..=max_iter {
        let next = u.apply(&b);
        let step = next.max_abs_diff(&b);
        b = next;
        if step < tol {
            return Ok((b, k));
        }
    }
    Err(Error::NoContraction {
        spectral_radius: spectral_radius(&u.m),
    })
}

/// States at the start of each branch on the limit cycle, in cycle order,
/// plus the closing state (equal to the first).
pub fn branch_start_states(maps: &BranchMaps) -> Result<[BVector; 5]> {
    let b0 = limit_cycle(&maps.cycle_map())?;
    let b1 = maps.hot.apply(&b0);
    let b2 = maps.expansion.apply(&b1);
    let b3 = maps.cold.apply(&b2);
    let b4 = maps.compression.apply(&b3);
    Ok([b0, b1, b2, b3, b4])
}

/// Heats and net work at the limit cycle from branch endpoint energies.
pub(crate) fn summary_from_states(
    params: &EngineParams,
    schedule: &Schedule,
    s: &[BVector; 5],
    works: AdiabatWorks,
) -> Result<CycleSummary> {
    let (j, wa, wb) = (params.j, params.omega_a, params.omega_b);
    let q_h = s[1].energy(wb, j) - s[0].energy(wb, j);
    let w_ba = s[2].energy(wa, j) - s[1].energy(wb, j);
    let q_c = s[3].energy(wa, j) - s[2].energy(wa, j);
    let w_ab = s[4].energy(wb, j) - s[3].energy(wa, j);
    let w_net = w_ba + w_ab;
    let tau = schedule.total();
    Ok(CycleSummary {
        w_net,
        w_friction: works.friction,
        w_field: works.field,
        q_h,
        q_c,
        p_avg: -w_net / tau,
        ds_ext: entropy_production(q_h, q_c, params.t_h, params.t_c)?,
        tau,
    })
}

/// Limit-cycle summary without per-sample records. Friction and field works
/// are integrated along both adiabats.
pub fn evaluate_cycle(
    params: &EngineParams,
    schedule: &Schedule,
    integrator: &Integrator,
) -> Result<CycleSummary> {
    let maps = branch_maps(params, schedule, integrator)?;
    let s = branch_start_states(&maps)?;
    let works = adiabat_works(params, schedule, integrator, &s)?;
    summary_from_states(params, schedule, &s, works.0)
}

/// Average power `−W_net/τ` at the limit cycle (no work split).
pub fn cycle_power(
    params: &EngineParams,
    schedule: &Schedule,
    integrator: &Integrator,
) -> Result<f64> {
    let maps = branch_maps(params, schedule, integrator)?;
    let s = branch_start_states(&maps)?;
    Ok(summary_from_states(params, schedule, &s, AdiabatWorks::default())?.p_avg)
}

/// Per-adiabat running works.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkPoint {
    pub t: f64,
    pub omega: f64,
    /// `Ω(t) = √(ω(t)² + J²)`.
    pub scale: f64,
    pub w_field: f64,
    pub w_friction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdiabatWorkTrace {
    pub branch: Branch,
    pub points: Vec<WorkPoint>,
}

/// Summed works on both adiabats plus the running-work traces.
fn adiabat_works(
    params: &EngineParams,
    schedule: &Schedule,
    integrator: &Integrator,
    s: &[BVector; 5],
) -> Result<(AdiabatWorks, Vec<AdiabatWorkTrace>)> {
    let mut total = AdiabatWorks::default();
    let mut traces = Vec::with_capacity(2);
    for (branch, adiabat, start) in [
        (
            Branch::Expansion,
            params.expansion(schedule.tau_ba, integrator),
            &s[1],
        ),
        (
            Branch::Compression,
            params.compression(schedule.tau_ab, integrator),
            &s[3],
        ),
    ] {
        let prop = adiabat_propagate(&adiabat, params.j, start)?;
        let running = cumulative_works(&prop.trace, params.j)?;
        if let Some(last) = running.last() {
            total.field += last.field;
            total.friction += last.friction;
        }
        let points = prop
            .trace
            .iter()
            .zip(&running)
            .map(|(p, w)| WorkPoint {
                t: p.t,
                omega: p.omega,
                scale: energy_scale(p.omega, params.j),
                w_field: w.field,
                w_friction: w.friction,
            })
            .collect();
        traces.push(AdiabatWorkTrace { branch, points });
    }
    Ok((total, traces))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSample {
    pub branch: Branch,
    #[serde(flatten)]
    pub sample: ThermoSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSpan {
    pub branch: Branch,
    pub t_start: f64,
    pub t_end: f64,
}

/// One limit-cycle period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub samples: Vec<CycleSample>,
    pub summary: CycleSummary,
    pub branches: Vec<BranchSpan>,
    pub adiabat_works: Vec<AdiabatWorkTrace>,
    /// Limit-cycle state at the start of the hot isochore.
    pub anchor: [f64; 5],
}

impl CycleRecord {
    /// `(ω, S_E)` trajectory.
    pub fn omega_entropy_path(&self) -> Vec<(f64, f64)> {
        self.samples
            .iter()
            .map(|s| (s.sample.omega, s.sample.s_e))
            .collect()
    }
}

/// Runs one period on the limit cycle, sampling `resolution` points per
/// branch (start inclusive, end exclusive) plus the closing point.
pub fn run_cycle(
    params: &EngineParams,
    schedule: &Schedule,
    integrator: &Integrator,
    resolution: usize,
) -> Result<CycleRecord> {
    if resolution == 0 {
        return Err(Error::param("resolution", "must be >= 1"));
    }
    let maps = branch_maps(params, schedule, integrator)?;
    let s = branch_start_states(&maps)?;
    let (hot_gen, cold_gen) = isochore_generators(params)?;
    let (works, work_traces) = adiabat_works(params, schedule, integrator, &s)?;
    let summary = summary_from_states(params, schedule, &s, works)?;
    let j = params.j;

    let mut samples = Vec::with_capacity(4 * resolution + 1);
    let mut branches = Vec::with_capacity(4);
    let mut t0 = 0.0;
    for (idx, branch) in Branch::ORDER.iter().copied().enumerate() {
        let tau = schedule.as_array()[idx];
        branches.push(BranchSpan {
            branch,
            t_start: t0,
            t_end: t0 + tau,
        });
        if tau == 0.0 {
            continue;
        }
        let dt = tau / resolution as f64;
        let times: Vec<f64> = (0..resolution).map(|k| k as f64 * dt).collect();
        let start = &s[idx];
        match branch {
            Branch::Hot | Branch::Cold => {
                let (generator, omega) = if branch == Branch::Hot {
                    (&hot_gen, params.omega_b)
                } else {
                    (&cold_gen, params.omega_a)
                };
                let step = generator.exp(dt);
                let mut b = *start;
                for &t in &times {
                    samples.push(CycleSample {
                        branch,
                        sample: ThermoSample::evaluate(t0 + t, omega, 0.0, j, &b, Some(generator))?,
                    });
                    b = step.apply(&b);
                }
            }
            Branch::Expansion | Branch::Compression => {
                let adiabat = if branch == Branch::Expansion {
                    params.expansion(tau, integrator)
                } else {
                    params.compression(tau, integrator)
                };
                let states = adiabat_states_at(&adiabat, j, start, &times)?;
                let omega_dot = adiabat.omega_dot();
                for (&t, b) in times.iter().zip(&states) {
                    samples.push(CycleSample {
                        branch,
                        sample: ThermoSample::evaluate(
                            t0 + t,
                            adiabat.omega_at(t),
                            omega_dot,
                            j,
                            b,
                            None,
                        )?,
                    });
                }
            }
        }
        t0 += tau;
    }
    // Closing sample: end of the last branch with non-zero duration.
    if let Some(last_idx) = (0..4).rev().find(|&k| schedule.as_array()[k] > 0.0) {
        let branch = Branch::ORDER[last_idx];
        let end = &s[last_idx + 1];
        let (omega, omega_dot, generator) = match branch {
            Branch::Hot => (params.omega_b, 0.0, Some(&hot_gen)),
            Branch::Cold => (params.omega_a, 0.0, Some(&cold_gen)),
            Branch::Expansion => (
                params.omega_a,
                params.expansion(schedule.tau_ba, integrator).omega_dot(),
                None,
            ),
            Branch::Compression => (
                params.omega_b,
                params.compression(schedule.tau_ab, integrator).omega_dot(),
                None,
            ),
        };
        samples.push(CycleSample {
            branch,
            sample: ThermoSample::evaluate(schedule.total(), omega, omega_dot, j, end, generator)?,
        });
    }
    Ok(CycleRecord {
        samples,
        summary,
        branches,
        adiabat_works: work_traces,
        anchor: s[0].as_array(),
    })
}
