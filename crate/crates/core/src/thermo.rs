//! Thermodynamic observables: energy, the field/friction split of the power,
//! heat flow, energy and von Neumann entropies, and entropy production.
//!
//! Sign conventions: heats and works are counted as energy received by the
//! working medium. `Q_h > 0` is heat absorbed from the hot bath, `Q_c < 0` is
//! heat rejected to the cold bath, and `W_net < 0` is net work extracted.

use serde::{Deserialize, Serialize};

use crate::algebra::{
    energy_eigensystem, energy_scale, hamiltonian, hermitian_eigenvalues, raw_state_from_b,
    BVector, DensityState, Vec5, POSITIVITY_TOL,
};
use crate::dynamics::{Generator, PathPoint};
use crate::error::{Error, Result};

fn checked_scale(omega: f64, j: f64) -> Result<f64> {
    let scale = energy_scale(omega, j);
    if scale == 0.0 {
        return Err(Error::DegenerateScale);
    }
    Ok(scale)
}

/// Diagonal (compression) power `Ω̇ ⟨H⟩/Ω`.
pub fn power_field(omega: f64, omega_dot: f64, j: f64, b: &BVector) -> Result<f64> {
    let scale = checked_scale(omega, j)?;
    let scale_dot = omega * omega_dot / scale;
    Ok(scale_dot * b.energy(omega, j) / scale)
}

/// Power invested against friction, `(ω̇ J/Ω²)(J b1 − ω b2)`.
pub fn power_friction(omega: f64, omega_dot: f64, j: f64, b: &BVector) -> Result<f64> {
    let scale = checked_scale(omega, j)?;
    Ok(omega_dot * j / (scale * scale) * (j * b.b1() - omega * b.b2()))
}

/// `Q̇ = ⟨L*(H)⟩`: rate of change of `⟨H⟩` generated at fixed field.
pub fn heat_flow(generator: &Generator, b: &BVector, omega: f64, j: f64) -> f64 {
    Vec5::new(omega, j, 0.0, 0.0, 0.0).dot(&generator.rate(b))
}

fn shannon(populations: impl IntoIterator<Item = f64>) -> Result<f64> {
    let mut s = 0.0;
    for p in populations {
        if p < -POSITIVITY_TOL {
            return Err(Error::NonPhysicalState { min_eigenvalue: p });
        }
        let p = p.clamp(0.0, 1.0);
        if p > 0.0 {
            s -= p * p.ln();
        }
    }
    Ok(s)
}

/// Populations in the energy eigenbasis of `H(ω, J)`. Degenerate levels are
/// resolved through their spectral projector: the populations are the
/// eigenvalues of the block `P ρ P`.
pub fn energy_populations(b: &BVector, omega: f64, j: f64) -> Vec<f64> {
    let rho = raw_state_from_b(b);
    let mut pops = Vec::with_capacity(4);
    for level in energy_eigensystem(&hamiltonian(omega, j)).levels() {
        if level.degeneracy == 1 {
            pops.push((level.projector * rho).trace().re);
        } else {
            let block = level.projector * rho * level.projector;
            let ev = hermitian_eigenvalues(&block);
            pops.extend_from_slice(&ev[..level.degeneracy]);
        }
    }
    pops
}

/// `S_E = −Σ p_n ln p_n` over energy-basis populations.
pub fn energy_entropy(b: &BVector, omega: f64, j: f64) -> Result<f64> {
    shannon(energy_populations(b, omega, j))
}

/// `S = −tr{ρ ln ρ}`.
pub fn von_neumann_entropy(rho: &DensityState) -> f64 {
    // A validated state has no eigenvalue below the positivity tolerance.
    shannon(rho.eigenvalues()).unwrap_or(f64::NAN)
}

/// Von Neumann entropy of the state reconstructed from `b`.
pub fn von_neumann_entropy_of(b: &BVector) -> Result<f64> {
    shannon(hermitian_eigenvalues(&raw_state_from_b(b)))
}

/// Per-cycle entropy production `−(Q_h/T_h + Q_c/T_c)` with medium-side
/// heats; non-negative at a limit cycle.
pub fn entropy_production(q_h: f64, q_c: f64, t_h: f64, t_c: f64) -> Result<f64> {
    for t in [t_h, t_c] {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidTemperature(t));
        }
    }
    Ok(-(q_h / t_h + q_c / t_c))
}

/// Accumulated adiabat works split into field and friction parts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AdiabatWorks {
    pub field: f64,
    pub friction: f64,
}

/// Running integrals of the field and friction powers along a path.
///
/// The integration variable is the field itself (`P dt = (P/ω̇) dω` on a
/// linear ramp), so a sudden quench with zero duration is handled like any
/// other path. Trapezoidal rule on the trace points.
pub fn cumulative_works(trace: &[PathPoint], j: f64) -> Result<Vec<AdiabatWorks>> {
    let density = |p: &PathPoint| -> Result<(f64, f64)> {
        let scale = checked_scale(p.omega, j)?;
        let s2 = scale * scale;
        Ok((
            p.omega / s2 * p.b.energy(p.omega, j),
            j / s2 * (j * p.b.b1() - p.omega * p.b.b2()),
        ))
    };
    let mut out = Vec::with_capacity(trace.len());
    let mut acc = AdiabatWorks::default();
    out.push(acc);
    let mut prev = match trace.first() {
        Some(p) => density(p)?,
        None => return Ok(Vec::new()),
    };
    for w in trace.windows(2) {
        let next = density(&w[1])?;
        let d_omega = w[1].omega - w[0].omega;
        acc.field += 0.5 * d_omega * (prev.0 + next.0);
        acc.friction += 0.5 * d_omega * (prev.1 + next.1);
        out.push(acc);
        prev = next;
    }
    Ok(out)
}

/// `W^field = ∫ P^field dt` and `W^friction = ∫ P^friction dt` over an
/// adiabat trace.
pub fn accumulate_works(trace: &[PathPoint], j: f64) -> Result<AdiabatWorks> {
    Ok(cumulative_works(trace, j)?
        .last()
        .copied()
        .unwrap_or_default())
}

/// Composite Simpson (trapezoid fallback for an odd interval count) of
/// uniformly spaced samples.
pub fn integrate_uniform(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let intervals = n - 1;
    if intervals.is_multiple_of(2) {
        let mut s = values[0] + values[n - 1];
        for (k, v) in values.iter().enumerate().take(n - 1).skip(1) {
            s += if k % 2 == 1 { 4.0 * v } else { 2.0 * v };
        }
        s * h / 3.0
    } else {
        let inner: f64 = values[1..n - 1].iter().sum();
        h * (0.5 * (values[0] + values[n - 1]) + inner)
    }
}

/// Energy-balance residual `ΔE − ∫(P_field + P_friction + Q̇) dt` along a
/// uniformly sampled branch trace. `generator` is the isochore generator
/// (heat flow) or `None` on an adiabat with ramp rate `omega_dot`.
pub fn energy_balance_residual(
    trace: &[PathPoint],
    j: f64,
    omega_dot: f64,
    generator: Option<&Generator>,
) -> Result<f64> {
    let (first, last) = match (trace.first(), trace.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Ok(0.0),
    };
    let delta_e = last.b.energy(last.omega, j) - first.b.energy(first.omega, j);
    let rates: Vec<f64> = trace
        .iter()
        .map(|p| -> Result<f64> {
            let mut r = match generator {
                Some(g) => heat_flow(g, &p.b, p.omega, j),
                None => 0.0,
            };
            if omega_dot != 0.0 {
                r += power_field(p.omega, omega_dot, j, &p.b)?
                    + power_friction(p.omega, omega_dot, j, &p.b)?;
            }
            Ok(r)
        })
        .collect::<Result<_>>()?;
    let h = if trace.len() > 1 {
        (last.t - first.t) / (trace.len() - 1) as f64
    } else {
        0.0
    };
    if h == 0.0 && omega_dot == 0.0 {
        return Ok(delta_e);
    }
    if h == 0.0 {
        // Sudden quench: the work is the energy jump at fixed state.
        let works = accumulate_works(trace, j)?;
        return Ok(delta_e - works.field - works.friction);
    }
    Ok(delta_e - integrate_uniform(&rates, h))
}

/// Everything recorded at one instant of a cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermoSample {
    pub t: f64,
    pub omega: f64,
    pub b: [f64; 5],
    pub energy: f64,
    pub p_field: f64,
    pub p_friction: f64,
    pub qdot: f64,
    pub s_e: f64,
    pub s_vn: f64,
}

impl ThermoSample {
    /// `omega_dot` is the ramp rate (zero on isochores); `generator` is the
    /// isochore generator, `None` on adiabats.
    pub fn evaluate(
        t: f64,
        omega: f64,
        omega_dot: f64,
        j: f64,
        b: &BVector,
        generator: Option<&Generator>,
    ) -> Result<Self> {
        let (p_field, p_friction) = if omega_dot != 0.0 {
            (
                power_field(omega, omega_dot, j, b)?,
                power_friction(omega, omega_dot, j, b)?,
            )
        } else {
            (0.0, 0.0)
        };
        Ok(ThermoSample {
            t,
            omega,
            b: b.as_array(),
            energy: b.energy(omega, j),
            p_field,
            p_friction,
            qdot: generator.map_or(0.0, |g| heat_flow(g, b, omega, j)),
            s_e: energy_entropy(b, omega, j)?,
            s_vn: von_neumann_entropy_of(b)?,
        })
    }
}

/// Per-cycle totals.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CycleSummary {
    /// Net work received by the medium (negative for an engine).
    pub w_net: f64,
    /// Work against friction summed over both adiabats.
    pub w_friction: f64,
    /// Diagonal (field) work summed over both adiabats.
    pub w_field: f64,
    pub q_h: f64,
    pub q_c: f64,
    /// Extracted power `−W_net/τ`.
    pub p_avg: f64,
    pub ds_ext: f64,
    pub tau: f64,
}

impl CycleSummary {
    /// Entropy production rate `ΔS/τ`.
    pub fn entropy_rate(&self) -> f64 {
        self.ds_ext / self.tau
    }

    pub fn first_law_residual(&self) -> f64 {
        self.w_net + self.q_h + self.q_c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{gibbs_b, gibbs_state, hermitian_eigensystem, state_from_b};
    use crate::dynamics::{isochore_generator, IsochoreParams};

    const J: f64 = 2.0;
    const OMEGA_A: f64 = 5.08364;
    const OMEGA_B: f64 = 12.6355;

    /// Closed-form energy populations: the |±⟩ block has
    /// `1/4 + b5/2 ± ⟨H⟩/(√2 Ω)`, the zero block `1/4 − b5/2 ± b4/√2`.
    fn analytic_populations(b: &BVector, omega: f64, j: f64) -> [f64; 4] {
        let s2 = std::f64::consts::SQRT_2;
        let om = energy_scale(omega, j);
        let e = b.energy(omega, j);
        let v = b.0;
        [
            0.25 + 0.5 * v[4] + e / (s2 * om),
            0.25 - 0.5 * v[4] + v[3] / s2,
            0.25 - 0.5 * v[4] - v[3] / s2,
            0.25 + 0.5 * v[4] - e / (s2 * om),
        ]
    }

    #[test]
    fn friction_vanishes_without_coupling_or_drive() {
        let b = BVector::new([0.1, -0.05, 0.02, 0.0, 0.1]);
        assert_eq!(power_friction(OMEGA_A, 300.0, 0.0, &b).unwrap(), 0.0);
        assert_eq!(power_friction(OMEGA_A, 0.0, J, &b).unwrap(), 0.0);
        assert_eq!(power_field(OMEGA_A, 0.0, J, &b).unwrap(), 0.0);
        let total = power_field(OMEGA_A, 300.0, 0.0, &b).unwrap();
        assert!((total - 300.0 * b.b1()).abs() < 1e-12);
    }

    #[test]
    fn field_and_friction_sum_to_total_power() {
        let b = BVector::new([0.1, -0.05, 0.02, 0.0, 0.1]);
        let wdot = -512.0;
        let sum = power_field(OMEGA_B, wdot, J, &b).unwrap()
            + power_friction(OMEGA_B, wdot, J, &b).unwrap();
        assert!((sum - wdot * b.b1()).abs() < 1e-12);
        assert_eq!(power_field(0.0, 1.0, 0.0, &b), Err(Error::DegenerateScale));
    }

    #[test]
    fn friction_vanishes_on_energy_diagonal_states() {
        for t in [0.5, 1.5, 7.5, 100.0] {
            let b = gibbs_b(OMEGA_A, J, t).unwrap();
            assert!(power_friction(OMEGA_A, 1000.0, J, &b).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn entropies_of_reference_states() {
        let mixed = BVector::zeros();
        let ln4 = 4f64.ln();
        assert!((energy_entropy(&mixed, OMEGA_B, J).unwrap() - ln4).abs() < 1e-12);
        assert!((von_neumann_entropy(&DensityState::maximally_mixed()) - ln4).abs() < 1e-12);

        let eig = hermitian_eigensystem(&hamiltonian(OMEGA_B, J).matrix);
        let v = eig.vectors.column(0);
        let pure = DensityState::new(v * v.adjoint()).unwrap();
        let b = crate::algebra::b_from_state(&pure).unwrap();
        assert!(energy_entropy(&b, OMEGA_B, J).unwrap().abs() < 1e-10);
        assert!(von_neumann_entropy(&pure).abs() < 1e-10);
    }

    #[test]
    fn gibbs_entropies_coincide() {
        let rho = gibbs_state(OMEGA_B, J, 7.5).unwrap();
        let b = crate::algebra::b_from_state(&rho).unwrap();
        let se = energy_entropy(&b, OMEGA_B, J).unwrap();
        assert!((se - von_neumann_entropy(&rho)).abs() < 1e-10);
    }

    #[test]
    fn projector_populations_match_closed_form() {
        let b = BVector::new([0.1, -0.05, 0.02, 0.08, 0.1]);
        let mut dense = energy_populations(&b, OMEGA_A, J);
        let mut exact = analytic_populations(&b, OMEGA_A, J).to_vec();
        dense.sort_by(f64::total_cmp);
        exact.sort_by(f64::total_cmp);
        for (d, e) in dense.iter().zip(&exact) {
            assert!((d - e).abs() < 1e-12);
        }
    }

    #[test]
    fn energy_entropy_bounds_von_neumann() {
        let b = BVector::new([0.12, -0.2, 0.15, 0.03, -0.05]);
        assert!(state_from_b(&b).is_ok());
        let se = energy_entropy(&b, OMEGA_B, J).unwrap();
        let svn = von_neumann_entropy_of(&b).unwrap();
        assert!(se > svn + 1e-3);
    }

    #[test]
    fn heat_flow_zero_at_equilibrium_and_for_pure_dephasing() {
        let params = IsochoreParams {
            omega: OMEGA_B,
            temperature: 7.5,
            gamma_rate: 1.16748,
            pure_dephasing: 0.05,
        };
        let g = isochore_generator(&params, J).unwrap();
        let b_eq = gibbs_b(OMEGA_B, J, 7.5).unwrap();
        assert!(heat_flow(&g, &b_eq, OMEGA_B, J).abs() < 1e-12);

        let cold_start = gibbs_b(OMEGA_B, J, 1.5).unwrap();
        assert!(heat_flow(&g, &cold_start, OMEGA_B, J) > 0.0);

        let only_dephasing = isochore_generator(
            &IsochoreParams {
                gamma_rate: 0.0,
                ..params
            },
            J,
        )
        .unwrap();
        let b = BVector::new([0.1, -0.05, 0.02, 0.0, 0.1]);
        assert!(heat_flow(&only_dephasing, &b, OMEGA_B, J).abs() < 1e-12);
    }

    #[test]
    fn entropy_production_conventions() {
        assert_eq!(entropy_production(0.0, 0.0, 7.5, 1.5).unwrap(), 0.0);
        // Carnot-limited engine: absorbs 1 at T_h, rejects less than 1·T_c/T_h.
        assert!(entropy_production(1.0, -0.5, 7.5, 1.5).unwrap() > 0.0);
        assert!(matches!(
            entropy_production(1.0, -1.0, 0.0, 1.5),
            Err(Error::InvalidTemperature(_))
        ));
    }

    #[test]
    fn sudden_quench_works_match_energy_jump() {
        let b = BVector::new([0.1, -0.05, 0.02, 0.0, 0.1]);
        let n = 400;
        let trace: Vec<PathPoint> = (0..=n)
            .map(|k| PathPoint {
                t: 0.0,
                omega: OMEGA_A + (OMEGA_B - OMEGA_A) * k as f64 / n as f64,
                b,
            })
            .collect();
        let w = accumulate_works(&trace, J).unwrap();
        let jump = b.energy(OMEGA_B, J) - b.energy(OMEGA_A, J);
        assert!((w.field + w.friction - jump).abs() < 1e-12);
        assert!(w.friction.abs() > 0.0);
    }

    #[test]
    fn simpson_is_exact_for_cubics() {
        let h = 0.1;
        let values: Vec<f64> = (0..=10).map(|k| (k as f64 * h).powi(3)).collect();
        assert!((integrate_uniform(&values, h) - 0.25).abs() < 1e-14);
    }
}
