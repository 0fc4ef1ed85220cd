//! Generators and exact propagators for the four branches, expressed as
//! affine maps on [`BVector`]s.
//!
//! Every generator is a Schrödinger-picture superoperator projected onto the
//! operator algebra, so that `db/dt = G b + g`. Isochores are propagated with
//! a single exponential of the augmented generator. Adiabats are split into
//! piecewise-constant segments whose exponentials have a closed form: on
//! `(b1, b2, b3)` the unitary generator `A` is a rotation and the dephasing
//! generator is `Λ A²`, which commutes with it.

use nalgebra::{Matrix3, Matrix6};

use crate::algebra::{
    anticommutator, commutator, energy_eigensystem, energy_scale, hamiltonian,
    project_superoperator, unitary_generator, BVector, CMat4, Mat5, Vec5, C64,
};
use crate::error::{Error, Result};

/// Default segment count for deterministic adiabats.
pub const DEFAULT_N_SEG: usize = 512;

/// Largest closure residual accepted when projecting a generator.
const CLOSURE_TOL: f64 = 1e-10;

/// Positivity slack for intermediate adiabat states.
const PATH_POSITIVITY_TOL: f64 = 1e-8;

/// `b ↦ M b + c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub m: Mat5,
    pub c: Vec5,
}

impl AffineMap {
    pub fn identity() -> Self {
        AffineMap {
            m: Mat5::identity(),
            c: Vec5::zeros(),
        }
    }

    pub fn linear(m: Mat5) -> Self {
        AffineMap {
            m,
            c: Vec5::zeros(),
        }
    }

    pub fn apply(&self, b: &BVector) -> BVector {
        BVector(self.m * b.0 + self.c)
    }

    /// The map that applies `self` first and then `next`.
    pub fn then(&self, next: &AffineMap) -> AffineMap {
        AffineMap {
            m: next.m * self.m,
            c: next.m * self.c + next.c,
        }
    }

    /// Composition of maps applied in sequence (first element first).
    pub fn chain<'a, I>(maps: I) -> AffineMap
    where
        I: IntoIterator<Item = &'a AffineMap>,
    {
        maps.into_iter()
            .fold(AffineMap::identity(), |acc, m| acc.then(m))
    }

    pub fn max_abs_diff(&self, other: &AffineMap) -> f64 {
        (self.m - other.m).amax().max((self.c - other.c).amax())
    }
}

/// Affine generator `db/dt = G b + g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Generator {
    pub matrix: Mat5,
    pub offset: Vec5,
}

impl Generator {
    pub fn rate(&self, b: &BVector) -> Vec5 {
        self.matrix * b.0 + self.offset
    }

    /// Exact propagator over `t` via the augmented 6×6 exponential.
    pub fn exp(&self, t: f64) -> AffineMap {
        if t == 0.0 {
            return AffineMap::identity();
        }
        let mut aug = Matrix6::<f64>::zeros();
        aug.fixed_view_mut::<5, 5>(0, 0)
            .copy_from(&(self.matrix * t));
        aug.fixed_view_mut::<5, 1>(0, 5)
            .copy_from(&(self.offset * t));
        let e = aug.exp();
        AffineMap {
            m: e.fixed_view::<5, 5>(0, 0).into_owned(),
            c: e.fixed_view::<5, 1>(0, 5).into_owned(),
        }
    }
}

/// A point on a branch trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub t: f64,
    pub omega: f64,
    pub b: BVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    pub b_final: BVector,
    pub map: AffineMap,
    pub trace: Vec<PathPoint>,
}

// ---------------------------------------------------------------------------
// Isochores
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsochoreParams {
    pub omega: f64,
    pub temperature: f64,
    /// Energy equilibration rate Γ.
    pub gamma_rate: f64,
    /// Pure-dephasing coefficient; only |γ| enters the generator.
    pub pure_dephasing: f64,
}

impl IsochoreParams {
    fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::InvalidTemperature(self.temperature));
        }
        if !(self.gamma_rate >= 0.0) || !self.gamma_rate.is_finite() {
            return Err(Error::param(
                "Gamma",
                format!("must be >= 0, got {}", self.gamma_rate),
            ));
        }
        if !self.omega.is_finite() || !self.pure_dephasing.is_finite() {
            return Err(Error::param("omega", "non-finite isochore parameter"));
        }
        Ok(())
    }
}

/// Thermalizing dissipator in the Schrödinger picture.
///
/// Adjacent energy levels `i > j` are connected by all lowering jumps
/// `|b⟩⟨a|` (`a` in level `i`, `b` in level `j`) at rate `k↓` and by the
/// raising partners at `k↑ = k↓ exp(−(E_i − E_j)/T)`, with `k↓ + k↑ = Γ`.
/// Summed over a degenerate level the jumps only involve spectral
/// projectors: `Σ D[|b⟩⟨a|]ρ = tr{P_i ρ} P_j − (d_j/2){P_i, ρ}`.
fn thermal_dissipator(params: &IsochoreParams, j: f64) -> impl Fn(&CMat4) -> CMat4 {
    let levels = energy_eigensystem(&hamiltonian(params.omega, j)).levels();
    let mut channels: Vec<(f64, CMat4, CMat4, f64)> = Vec::new();
    for pair in levels.windows(2) {
        let (upper, lower) = (&pair[0], &pair[1]);
        let boltzmann = (-(upper.energy - lower.energy) / params.temperature).exp();
        let k_down = params.gamma_rate / (1.0 + boltzmann);
        let k_up = k_down * boltzmann;
        channels.push((
            k_down,
            upper.projector,
            lower.projector,
            lower.degeneracy as f64,
        ));
        channels.push((
            k_up,
            lower.projector,
            upper.projector,
            upper.degeneracy as f64,
        ));
    }
    move |rho: &CMat4| {
        let mut out = CMat4::zeros();
        for (rate, from, to, to_deg) in &channels {
            if *rate == 0.0 {
                continue;
            }
            let pop = (from * rho).trace();
            out += (to * pop - anticommutator(from, rho) * C64::new(0.5 * to_deg, 0.0))
                * C64::new(*rate, 0.0);
        }
        out
    }
}

/// Full isochore generator: unitary part, thermalization and pure dephasing
/// `−|γ|[H, [H, ρ]]`, projected onto the algebra.
pub fn isochore_generator(params: &IsochoreParams, j: f64) -> Result<Generator> {
    params.validate()?;
    let h = hamiltonian(params.omega, j).matrix;
    let dissipator = thermal_dissipator(params, j);
    let gamma = params.pure_dephasing.abs();
    let (matrix, offset, residual) = project_superoperator(|rho| {
        let unitary = commutator(&h, rho) * (-C64::i());
        let dephase = commutator(&h, &commutator(&h, rho)) * C64::new(-gamma, 0.0);
        unitary + dissipator(rho) + dephase
    })?;
    if residual > CLOSURE_TOL {
        return Err(Error::NotClosed { residual });
    }
    Ok(Generator { matrix, offset })
}

/// Propagates an isochore of duration `tau`, recording `samples + 1`
/// equally spaced trace points (including both ends).
pub fn isochore_propagate(
    params: &IsochoreParams,
    j: f64,
    tau: f64,
    b0: &BVector,
    samples: usize,
) -> Result<Propagation> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::param("tau", format!("must be >= 0, got {tau}")));
    }
    let generator = isochore_generator(params, j)?;
    let map = generator.exp(tau);
    let mut trace = Vec::with_capacity(samples + 1);
    trace.push(PathPoint {
        t: 0.0,
        omega: params.omega,
        b: *b0,
    });
    if samples > 0 && tau > 0.0 {
        let dt = tau / samples as f64;
        let step = generator.exp(dt);
        let mut b = *b0;
        for k in 1..=samples {
            b = step.apply(&b);
            trace.push(PathPoint {
                t: k as f64 * dt,
                omega: params.omega,
                b,
            });
        }
    }
    let b_final = map.apply(b0);
    if let Some(last) = trace.last_mut() {
        if samples > 0 && tau > 0.0 {
            last.b = b_final;
        }
    }
    Ok(Propagation {
        b_final,
        map,
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DephasingTimes {
    /// Energy relaxation time `1/Γ`.
    pub t1: f64,
    /// Coherence decay time of the full isochore generator.
    pub t2: f64,
    /// Pure-dephasing time `1/(2|γ|Ω²)`.
    pub t2_star: f64,
}

pub fn dephasing_times(params: &IsochoreParams, j: f64) -> Result<DephasingTimes> {
    if params.gamma_rate == 0.0 && params.pure_dephasing == 0.0 {
        return Err(Error::UndefinedTimescale(
            "both the equilibration rate and the pure-dephasing rate are zero".into(),
        ));
    }
    let generator = isochore_generator(params, j)?;
    let omega_scale = energy_scale(params.omega, j);
    let block: Matrix3<f64> = generator.matrix.fixed_view::<3, 3>(0, 0).into_owned();
    let coherence_rate = block
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() > 1e-12)
        .map(|z| -z.re)
        .fold(f64::NAN, f64::max);
    let t1 = if params.gamma_rate > 0.0 {
        1.0 / params.gamma_rate
    } else {
        f64::INFINITY
    };
    let t2 = if coherence_rate > 0.0 {
        1.0 / coherence_rate
    } else {
        f64::INFINITY
    };
    let gamma = params.pure_dephasing.abs();
    let t2_star = if gamma > 0.0 && omega_scale > 0.0 {
        1.0 / (2.0 * gamma * omega_scale * omega_scale)
    } else {
        f64::INFINITY
    };
    Ok(DephasingTimes { t1, t2, t2_star })
}

// ---------------------------------------------------------------------------
// Adiabats
// ---------------------------------------------------------------------------

/// Where the constant field of each segment is sampled on the linear ramp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ladder {
    /// Segment midpoint, `ω_k = ω_start + (ω_end − ω_start)(k − 1/2)/N`.
    #[default]
    Midpoint,
    /// Right endpoint, `ω_k = ω_start + (ω_end − ω_start) k/N`, `k = 1..N`.
    Endpoint,
}

impl Ladder {
    pub fn omega(self, omega_start: f64, omega_end: f64, k: usize, n: usize) -> f64 {
        let x = match self {
            Ladder::Midpoint => (k as f64 + 0.5) / n as f64,
            Ladder::Endpoint => (k + 1) as f64 / n as f64,
        };
        omega_start + (omega_end - omega_start) * x
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdiabatParams {
    pub omega_start: f64,
    pub omega_end: f64,
    pub tau: f64,
    /// Dephasing coefficient Λ of `−Λ[H, [H, ·]]`.
    pub lambda: f64,
    pub n_seg: usize,
    pub ladder: Ladder,
}

impl AdiabatParams {
    pub fn new(omega_start: f64, omega_end: f64, tau: f64, lambda: f64) -> Self {
        AdiabatParams {
            omega_start,
            omega_end,
            tau,
            lambda,
            n_seg: DEFAULT_N_SEG,
            ladder: Ladder::Midpoint,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            return Err(Error::param(
                "tau",
                format!("must be >= 0, got {}", self.tau),
            ));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::param(
                "Lambda",
                format!("must be >= 0, got {}", self.lambda),
            ));
        }
        if self.n_seg == 0 {
            return Err(Error::param("n_seg", "must be >= 1"));
        }
        if !self.omega_start.is_finite() || !self.omega_end.is_finite() {
            return Err(Error::param("omega", "non-finite adiabat endpoint"));
        }
        Ok(())
    }

    /// `ω̇` of the linear ramp (zero for a sudden branch).
    pub fn omega_dot(&self) -> f64 {
        if self.tau > 0.0 {
            (self.omega_end - self.omega_start) / self.tau
        } else {
            0.0
        }
    }

    pub fn omega_at(&self, t: f64) -> f64 {
        if self.tau > 0.0 {
            self.omega_start + (self.omega_end - self.omega_start) * (t / self.tau)
        } else {
            self.omega_end
        }
    }
}

/// Generator `A + Λ A²` of `db/dt` for `dρ/dt = −i[H, ρ] − Λ[H, [H, ρ]]`.
pub fn adiabat_generator(omega: f64, j: f64, lambda: f64) -> Mat5 {
    let a = unitary_generator(omega, j);
    a + a * a * lambda
}

/// Closed-form `exp(t (A + Λ A²))` for a skew rotation generator `A` on
/// `(b1, b2, b3)`. With `ν` the rotation rate,
/// `exp = I + e^{−Λν²t} sin(νt)/ν A + (1 − e^{−Λν²t} cos νt)/ν² A²`.
/// Valid for any real `t`, including negative durations.
#[derive(Debug, Clone, Copy)]
pub struct SegmentGenerator {
    a: Mat5,
    a2: Mat5,
    nu: f64,
}

impl SegmentGenerator {
    pub fn new(omega: f64, j: f64) -> Self {
        let a = unitary_generator(omega, j);
        let nu = (0.5 * a.norm_squared()).sqrt();
        SegmentGenerator { a, a2: a * a, nu }
    }

    /// Rotation rate `ν = √2 Ω` (the |+⟩ ↔ |−⟩ gap).
    pub fn rate(&self) -> f64 {
        self.nu
    }

    pub fn unitary(&self) -> &Mat5 {
        &self.a
    }

    pub fn map(&self, t: f64, lambda: f64) -> Mat5 {
        let nu = self.nu;
        if nu == 0.0 {
            return Mat5::identity();
        }
        let x = lambda * nu * nu * t;
        let damp = (-x).exp();
        let half = 0.5 * nu * t;
        let s = (nu * t).sin() / nu * damp;
        let q = (-(-x).exp_m1() + damp * 2.0 * half.sin().powi(2)) / (nu * nu);
        Mat5::identity() + self.a * s + self.a2 * q
    }
}

fn check_path_state(b: &BVector) -> Result<()> {
    let min = b.min_eigenvalue();
    if min < -PATH_POSITIVITY_TOL {
        return Err(Error::NonPhysicalState {
            min_eigenvalue: min,
        });
    }
    Ok(())
}

/// Propagates an adiabat with piecewise-constant fields. The trace holds the
/// state at every segment boundary (`n_seg + 1` points). A zero-duration
/// branch is a sudden quench: the map is the identity and the trace sweeps
/// the field at fixed state.
pub fn adiabat_propagate(params: &AdiabatParams, j: f64, b0: &BVector) -> Result<Propagation> {
    params.validate()?;
    check_path_state(b0)?;
    let n = params.n_seg;
    let mut trace = Vec::with_capacity(n + 1);
    trace.push(PathPoint {
        t: 0.0,
        omega: params.omega_start,
        b: *b0,
    });
    if params.tau == 0.0 {
        for k in 1..=n {
            let x = k as f64 / n as f64;
            trace.push(PathPoint {
                t: 0.0,
                omega: params.omega_start + (params.omega_end - params.omega_start) * x,
                b: *b0,
            });
        }
        return Ok(Propagation {
            b_final: *b0,
            map: AffineMap::identity(),
            trace,
        });
    }
    let dt = params.tau / n as f64;
    let mut m = Mat5::identity();
    let mut b = *b0;
    for k in 0..n {
        let omega_k = params
            .ladder
            .omega(params.omega_start, params.omega_end, k, n);
        let seg = SegmentGenerator::new(omega_k, j).map(dt, params.lambda);
        m = seg * m;
        b = BVector(seg * b.0);
        check_path_state(&b)?;
        let t = (k + 1) as f64 * dt;
        trace.push(PathPoint {
            t,
            omega: params.omega_at(t),
            b,
        });
    }
    Ok(Propagation {
        b_final: b,
        map: AffineMap::linear(m),
        trace,
    })
}

/// Map of an adiabat without the trace (used in inner optimization loops).
pub fn adiabat_map(params: &AdiabatParams, j: f64) -> Result<AffineMap> {
    params.validate()?;
    if params.tau == 0.0 {
        return Ok(AffineMap::identity());
    }
    let n = params.n_seg;
    let dt = params.tau / n as f64;
    let mut m = Mat5::identity();
    for k in 0..n {
        let omega_k = params
            .ladder
            .omega(params.omega_start, params.omega_end, k, n);
        m = SegmentGenerator::new(omega_k, j).map(dt, params.lambda) * m;
    }
    Ok(AffineMap::linear(m))
}

/// States at arbitrary times `0 ≤ t ≤ τ` along the piecewise-constant
/// adiabat (partial segments are propagated exactly). `times` must be
/// non-decreasing.
pub fn adiabat_states_at(
    params: &AdiabatParams,
    j: f64,
    b0: &BVector,
    times: &[f64],
) -> Result<Vec<BVector>> {
    params.validate()?;
    if params.tau == 0.0 {
        return Ok(vec![*b0; times.len()]);
    }
    let n = params.n_seg;
    let dt = params.tau / n as f64;
    let mut out = Vec::with_capacity(times.len());
    let mut seg_index = 0usize;
    let mut seg_start_b = *b0;
    let mut current = SegmentGenerator::new(
        params
            .ladder
            .omega(params.omega_start, params.omega_end, 0, n),
        j,
    );
    for &t in times {
        let t = t.clamp(0.0, params.tau);
        while seg_index + 1 < n && t >= (seg_index + 1) as f64 * dt {
            seg_start_b = BVector(current.map(dt, params.lambda) * seg_start_b.0);
            seg_index += 1;
            current = SegmentGenerator::new(
                params
                    .ladder
                    .omega(params.omega_start, params.omega_end, seg_index, n),
                j,
            );
        }
        let local = t - seg_index as f64 * dt;
        out.push(BVector(current.map(local, params.lambda) * seg_start_b.0));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{gibbs_b, operators, state_from_b, trace_inner};

    const J: f64 = 2.0;
    const OMEGA_A: f64 = 5.08364;
    const OMEGA_B: f64 = 12.6355;

    fn hot() -> IsochoreParams {
        IsochoreParams {
            omega: OMEGA_B,
            temperature: 7.5,
            gamma_rate: 1.16748,
            pure_dephasing: 0.0,
        }
    }

    #[test]
    fn closed_form_segment_matches_matrix_exponential() {
        for &(w, lambda, t) in &[
            (OMEGA_A, 0.0, 0.01),
            (OMEGA_B, 1.28, 0.003),
            (7.0, 0.0, -0.02),
            (7.0, 50.0, 0.02),
            (0.0, 0.0, 0.2),
        ] {
            let closed = SegmentGenerator::new(w, J).map(t, lambda);
            let exact = Generator {
                matrix: adiabat_generator(w, J, lambda),
                offset: Vec5::zeros(),
            }
            .exp(t);
            assert!(
                (closed - exact.m).amax() < 1e-13,
                "w={w} lambda={lambda} t={t}"
            );
        }
    }

    #[test]
    fn dephasing_generator_matches_double_commutator() {
        let h = hamiltonian(OMEGA_B, J).matrix;
        let lambda = 0.64;
        let (g, offset, residual) = project_superoperator(|rho| {
            commutator(&h, rho) * (-C64::i())
                - commutator(&h, &commutator(&h, rho)) * C64::new(lambda, 0.0)
        })
        .unwrap();
        assert!(residual < 1e-12);
        assert!(offset.amax() < 1e-14);
        assert!((g - adiabat_generator(OMEGA_B, J, lambda)).amax() < 1e-11);
    }

    #[test]
    fn segment_rate_is_level_gap() {
        let seg = SegmentGenerator::new(OMEGA_A, J);
        let gap = 2f64.sqrt() * energy_scale(OMEGA_A, J);
        assert!((seg.rate() - gap).abs() < 1e-12);
    }

    #[test]
    fn gibbs_state_is_fixed_point() {
        let g = isochore_generator(&hot(), J).unwrap();
        let b = gibbs_b(OMEGA_B, J, 7.5).unwrap();
        assert!(g.rate(&b).amax() < 1e-10);
        assert!(b.b3().abs() < 1e-14 && b.0[3].abs() < 1e-14);
    }

    #[test]
    fn pure_dephasing_conserves_energy() {
        let params = IsochoreParams {
            gamma_rate: 0.0,
            pure_dephasing: 0.3,
            ..hot()
        };
        let g = isochore_generator(&params, J).unwrap();
        let h = Vec5::new(OMEGA_B, J, 0.0, 0.0, 0.0);
        // d⟨H⟩/dt = h·(G b + g) vanishes for every b.
        assert!((h.transpose() * g.matrix).amax() < 1e-12);
        assert!(h.dot(&g.offset).abs() < 1e-12);
    }

    #[test]
    fn zero_time_isochore_is_identity() {
        let b0 = gibbs_b(OMEGA_A, J, 1.5).unwrap();
        let p = isochore_propagate(&hot(), J, 0.0, &b0, 10).unwrap();
        assert_eq!(p.map, AffineMap::identity());
        assert_eq!(p.b_final, b0);
    }

    #[test]
    fn long_isochore_reaches_gibbs() {
        let b0 = gibbs_b(OMEGA_A, J, 1.5).unwrap();
        let params = hot();
        let p = isochore_propagate(&params, J, 50.0 / params.gamma_rate, &b0, 0).unwrap();
        let target = gibbs_b(OMEGA_B, J, 7.5).unwrap();
        assert!(p.b_final.max_abs_diff(&target) < 1e-8);
    }

    #[test]
    fn energy_relaxes_monotonically() {
        let b0 = gibbs_b(OMEGA_A, J, 1.5).unwrap();
        let params = hot();
        let p = isochore_propagate(&params, J, 6.0, &b0, 600).unwrap();
        let e_eq = gibbs_b(OMEGA_B, J, 7.5).unwrap().energy(OMEGA_B, J);
        let gaps: Vec<f64> = p
            .trace
            .iter()
            .map(|pt| (pt.b.energy(OMEGA_B, J) - e_eq).abs())
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] <= w[0] + 1e-14));
        assert!(gaps.last().unwrap() < &(1e-2 * gaps[0]));
    }

    #[test]
    fn coherence_decays_at_t1_rate() {
        let times = dephasing_times(&hot(), J).unwrap();
        assert!((times.t1 - 1.0 / 1.16748).abs() < 1e-12);
        assert!((times.t2 - times.t1).abs() < 1e-9 * times.t1);
        assert!(times.t2_star.is_infinite());

        // The coherence amplitude of an energy-basis superposition decays as e^{-Γt}.
        let om = energy_scale(OMEGA_B, J);
        let l = BVector::new([J / om * 0.2, -OMEGA_B / om * 0.2, 0.0, 0.0, 0.0]);
        let g = isochore_generator(&hot(), J).unwrap();
        let b_eq = gibbs_b(OMEGA_B, J, 7.5).unwrap();
        let t = 0.7;
        let bt = g.exp(t).apply(&BVector(b_eq.0 + l.0));
        let coh = |b: &BVector| {
            let d = b.0 - b_eq.0;
            let along = (J * d[0] - OMEGA_B * d[1]) / om;
            along.hypot(d[2])
        };
        let expected = 0.2 * (-1.16748 * t).exp();
        assert!((coh(&bt) - expected).abs() < 1e-12);
    }

    #[test]
    fn pure_dephasing_time() {
        let params = IsochoreParams {
            gamma_rate: 0.0,
            pure_dephasing: -0.05,
            ..hot()
        };
        let times = dephasing_times(&params, J).unwrap();
        let om = energy_scale(OMEGA_B, J);
        assert!((times.t2_star - 1.0 / (2.0 * 0.05 * om * om)).abs() < 1e-12);
        assert!((times.t2 - times.t2_star).abs() < 1e-9 * times.t2_star);
        assert!(times.t1.is_infinite());
        let none = IsochoreParams {
            gamma_rate: 0.0,
            pure_dephasing: 0.0,
            ..hot()
        };
        assert!(matches!(
            dephasing_times(&none, J),
            Err(Error::UndefinedTimescale(_))
        ));
    }

    #[test]
    fn invalid_temperature_rejected() {
        let params = IsochoreParams {
            temperature: 0.0,
            ..hot()
        };
        assert!(matches!(
            isochore_generator(&params, J),
            Err(Error::InvalidTemperature(_))
        ));
    }

    #[test]
    fn adiabat_without_coupling_keeps_energy_populations() {
        let b0 = gibbs_b(OMEGA_B, 0.0, 3.0).unwrap();
        let p =
            adiabat_propagate(&AdiabatParams::new(OMEGA_B, OMEGA_A, 0.3, 0.0), 0.0, &b0).unwrap();
        for pt in &p.trace {
            assert!(pt.b.max_abs_diff(&b0) < 1e-13);
            let e_over_scale = pt.b.energy(pt.omega, 0.0) / energy_scale(pt.omega, 0.0);
            assert!((e_over_scale - b0.b1()).abs() < 1e-13);
        }
    }

    #[test]
    fn unitary_adiabat_is_orthogonal_on_rotating_block() {
        let m = adiabat_map(&AdiabatParams::new(OMEGA_A, OMEGA_B, 0.2, 0.0), J)
            .unwrap()
            .m;
        let block = m.fixed_view::<3, 3>(0, 0).into_owned();
        assert!((block.transpose() * block - Matrix3::identity()).amax() < 1e-12);
        assert!(
            (m.fixed_view::<2, 2>(3, 3).into_owned() - nalgebra::Matrix2::identity()).amax()
                < 1e-15
        );
    }

    #[test]
    fn b4_b5_untouched_by_dephased_adiabat() {
        let m = adiabat_map(&AdiabatParams::new(OMEGA_B, OMEGA_A, 0.05, 5.0), J)
            .unwrap()
            .m;
        for k in 3..5 {
            for l in 0..5 {
                let expected = if k == l { 1.0 } else { 0.0 };
                assert!((m[(k, l)] - expected).abs() < 1e-14);
                assert!((m[(l, k)] - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn states_at_times_match_trace() {
        let params = AdiabatParams {
            n_seg: 64,
            ..AdiabatParams::new(OMEGA_B, OMEGA_A, 0.05, 1.28)
        };
        let b0 = gibbs_b(OMEGA_B, J, 7.5).unwrap();
        let p = adiabat_propagate(&params, J, &b0).unwrap();
        let times: Vec<f64> = p.trace.iter().map(|pt| pt.t).collect();
        let states = adiabat_states_at(&params, J, &b0, &times).unwrap();
        for (s, pt) in states.iter().zip(&p.trace) {
            assert!(s.max_abs_diff(&pt.b) < 1e-13);
        }
    }

    #[test]
    fn ladder_conventions() {
        assert_eq!(Ladder::Endpoint.omega(1.0, 3.0, 0, 2), 2.0);
        assert_eq!(Ladder::Endpoint.omega(1.0, 3.0, 1, 2), 3.0);
        assert_eq!(Ladder::Midpoint.omega(1.0, 3.0, 0, 2), 1.5);
        assert_eq!(Ladder::Endpoint.omega(3.0, 1.0, 1, 2), 1.0);
    }

    #[test]
    fn affine_composition_is_associative() {
        let g = isochore_generator(&hot(), J).unwrap();
        let a = g.exp(0.3);
        let b = adiabat_map(&AdiabatParams::new(OMEGA_B, OMEGA_A, 0.02, 0.5), J).unwrap();
        let c = g.exp(1.1);
        let left = a.then(&b).then(&c);
        let right = a.then(&b.then(&c));
        assert!(left.max_abs_diff(&right) < 1e-14);
        assert!(AffineMap::chain([&a, &b, &c]).max_abs_diff(&left) < 1e-14);
    }

    #[test]
    fn isochore_trace_preserving_projection() {
        // The generator never produces an identity component: trace is preserved.
        let ops = operators();
        let h = hamiltonian(OMEGA_A, J).matrix;
        let params = IsochoreParams {
            omega: OMEGA_A,
            temperature: 1.5,
            gamma_rate: 1.16748,
            pure_dephasing: 0.06,
        };
        let d = thermal_dissipator(&params, J);
        for k in 0..5 {
            assert!(d(ops.b(k)).trace().norm() < 1e-13);
        }
        let rho = state_from_b(&gibbs_b(OMEGA_A, J, 1.5).unwrap()).unwrap();
        assert!(trace_inner(&h, &d(rho.matrix())).norm() < 1e-12);
    }
}
