//! Dephasing synthesized from noise on the adiabats.
//!
//! Each adiabat is split into `N` constant-field segments whose durations are
//! jittered, `Δt_k = τ/N + σ u_k` with `u_k` zero-mean and unit-variance. For
//! Gaussian `u_k` the ensemble-averaged segment propagator equals the
//! dephasing propagator `exp(Δt (A + Λ A²))` exactly when
//! `σ = √(2 τ Λ / N)`. Here `σ` carries units of time. Single segments may
//! run backwards in time; the unitary segment map is defined for any real
//! duration.
//!
//! The negative control instead jitters the field, `ω_k + σ u_k`, which
//! averages to `−(γ/2)[B1, [B1, ·]]` with `γ = σ² Δt`.

use std::num::NonZeroUsize;

use gauss_quad::hermite::GaussHermite;
use gauss_quad::legendre::GaussLegendre;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{unitary_generator, BVector, Mat5};
use crate::cycle::{
    branch_maps, limit_cycle, summary_from_states, Branch, BranchMaps, EngineParams, Integrator,
    Schedule,
};
use crate::dynamics::{AdiabatParams, AffineMap, Ladder, PathPoint, SegmentGenerator};
use crate::error::{Error, Result};
use crate::thermo::{accumulate_works, entropy_production, AdiabatWorks, CycleSummary};

/// Default segment count of the noise ensembles.
pub const DEFAULT_NOISE_SEGMENTS: usize = 200;

const QUADRATURE_NODES: usize = 40;

/// Zero-mean, unit-variance noise family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseDistribution {
    #[default]
    Gaussian,
    /// Uniform on `[−√3, √3]`.
    Uniform,
}

impl NoiseDistribution {
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            NoiseDistribution::Gaussian => rng.sample(StandardNormal),
            NoiseDistribution::Uniform => {
                let h = 3f64.sqrt();
                rng.random_range(-h..h)
            }
        }
    }

    /// `E[cos(x u)]`.
    pub fn mean_cos(self, x: f64) -> f64 {
        match self {
            NoiseDistribution::Gaussian => (-0.5 * x * x).exp(),
            NoiseDistribution::Uniform => {
                let y = 3f64.sqrt() * x;
                if y.abs() < 1e-4 {
                    1.0 - y * y / 6.0
                } else {
                    y.sin() / y
                }
            }
        }
    }

    /// Half-width of the support, infinite for the Gaussian.
    pub fn bound(self) -> f64 {
        match self {
            NoiseDistribution::Gaussian => f64::INFINITY,
            NoiseDistribution::Uniform => 3f64.sqrt(),
        }
    }

    /// `E[f(u)]` by quadrature.
    fn expectation<F: FnMut(f64) -> Mat5>(self, mut f: F) -> Mat5 {
        let deg = NonZeroUsize::new(QUADRATURE_NODES).unwrap();
        let mut acc = Mat5::zeros();
        match self {
            NoiseDistribution::Gaussian => {
                let rule = GaussHermite::new(deg);
                let norm = std::f64::consts::PI.sqrt();
                for &(x, w) in rule.iter() {
                    acc += f(std::f64::consts::SQRT_2 * x) * (w / norm);
                }
            }
            NoiseDistribution::Uniform => {
                let rule = GaussLegendre::new(deg);
                let h = 3f64.sqrt();
                for &(x, w) in rule.iter() {
                    acc += f(h * x) * (0.5 * w);
                }
            }
        }
        acc
    }
}

/// What the noise perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseTarget {
    /// Segment durations; `σ` is a time.
    #[default]
    Duration,
    /// Segment fields `ω_k`; `σ` is an energy.
    Frequency,
}

/// How successive cycles of an ensemble are chained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleMode {
    /// Every cycle starts from the limit cycle of the ensemble-mean map.
    #[default]
    Restart,
    /// Cycles run back to back; the first `burn_in` are discarded.
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Segments per adiabat.
    #[serde(rename = "N")]
    pub n: usize,
    pub sigma_ab: f64,
    pub sigma_ba: f64,
    pub distribution: NoiseDistribution,
    pub target: NoiseTarget,
    pub ladder: Ladder,
    pub seed: u64,
    pub n_cycles: usize,
    pub n_batches: usize,
    pub mode: EnsembleMode,
    pub burn_in: usize,
    /// Reject amplitudes that could produce a negative segment duration.
    pub positive_durations: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            n: DEFAULT_NOISE_SEGMENTS,
            sigma_ab: 0.0,
            sigma_ba: 0.0,
            distribution: NoiseDistribution::Gaussian,
            target: NoiseTarget::Duration,
            ladder: Ladder::Endpoint,
            seed: 0,
            n_cycles: 2000,
            n_batches: 10,
            mode: EnsembleMode::Restart,
            burn_in: 20,
            positive_durations: false,
        }
    }
}

impl NoiseConfig {
    /// Duration noise matching the dephasing coefficients of `params` on
    /// `schedule`.
    pub fn matching(params: &EngineParams, schedule: &Schedule) -> Result<Self> {
        let mut cfg = NoiseConfig::default();
        cfg.set_lambdas(params.lambda_ab, params.lambda_ba, schedule)?;
        Ok(cfg)
    }

    pub fn set_lambdas(
        &mut self,
        lambda_ab: f64,
        lambda_ba: f64,
        schedule: &Schedule,
    ) -> Result<()> {
        self.sigma_ab = sigma_for_lambda(lambda_ab, schedule.tau_ab, self.n)?;
        self.sigma_ba = sigma_for_lambda(lambda_ba, schedule.tau_ba, self.n)?;
        Ok(())
    }

    pub fn integrator(&self) -> Integrator {
        Integrator {
            n_seg: self.n,
            ladder: self.ladder,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::param("N", "must be >= 1"));
        }
        for sigma in [self.sigma_ab, self.sigma_ba] {
            if !(sigma >= 0.0) || !sigma.is_finite() {
                return Err(Error::InvalidSigma {
                    sigma,
                    reason: "must be finite and >= 0".into(),
                });
            }
        }
        if self.n_batches < 2 {
            return Err(Error::param("n_batches", "must be >= 2"));
        }
        if self.n_cycles < self.n_batches || !self.n_cycles.is_multiple_of(self.n_batches) {
            return Err(Error::param(
                "n_cycles",
                format!(
                    "must be a positive multiple of n_batches ({})",
                    self.n_batches
                ),
            ));
        }
        Ok(())
    }

    /// [`validate`](Self::validate) plus the per-adiabat amplitude checks
    /// for this engine and schedule.
    pub fn validate_for(&self, params: &EngineParams, schedule: &Schedule) -> Result<()> {
        self.validate()?;
        self.adiabats(params, schedule).map(|_| ())
    }

    fn adiabats(
        &self,
        params: &EngineParams,
        schedule: &Schedule,
    ) -> Result<(NoisyAdiabat, NoisyAdiabat)> {
        let integrator = self.integrator();
        let expansion = NoisyAdiabat::new(
            &params.expansion(schedule.tau_ba, &integrator),
            self.sigma_ba,
            self,
        )?;
        let compression = NoisyAdiabat::new(
            &params.compression(schedule.tau_ab, &integrator),
            self.sigma_ab,
            self,
        )?;
        Ok((expansion, compression))
    }
}

/// `σ = √(2 τ Λ / N)`.
pub fn sigma_for_lambda(lambda: f64, tau: f64, n: usize) -> Result<f64> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::param(
            "Lambda",
            format!("must be >= 0, got {lambda}"),
        ));
    }
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::param("tau", format!("must be >= 0, got {tau}")));
    }
    if n == 0 {
        return Err(Error::param("N", "must be >= 1"));
    }
    Ok((2.0 * tau * lambda / n as f64).sqrt())
}

/// `Λ = N σ² / (2 τ)`.
pub fn lambda_for_sigma(sigma: f64, tau: f64, n: usize) -> Result<f64> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidSigma {
            sigma,
            reason: "must be finite and >= 0".into(),
        });
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::param("tau", format!("must be > 0, got {tau}")));
    }
    if n == 0 {
        return Err(Error::param("N", "must be >= 1"));
    }
    Ok(n as f64 * sigma * sigma / (2.0 * tau))
}

/// Stream slot reserved for draws that are not tied to a cycle branch.
pub const AUX_STREAM: u64 = 3;

fn branch_slot(branch: Branch) -> u64 {
    match branch {
        Branch::Expansion => 0,
        Branch::Compression => 1,
        Branch::Hot | Branch::Cold => 2,
    }
}

/// Independent generator for trajectory `index` on `slot`. Segment `k` uses
/// the `k`-th draw of the stream.
pub fn substream(seed: u64, index: u64, slot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((index << 2) | (slot & 3));
    rng
}

pub fn branch_stream(seed: u64, cycle: u64, branch: Branch) -> ChaCha8Rng {
    substream(seed, cycle, branch_slot(branch))
}

/// Jittered durations `τ/N + σ u_k`.
pub fn sample_segment_times<R: Rng + ?Sized>(
    tau: f64,
    n: usize,
    sigma: f64,
    distribution: NoiseDistribution,
    positive: bool,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_duration_sigma(tau, n, sigma, distribution, positive)?;
    let dt = tau / n as f64;
    Ok((0..n)
        .map(|_| dt + sigma * distribution.sample(rng))
        .collect())
}

fn check_duration_sigma(
    tau: f64,
    n: usize,
    sigma: f64,
    distribution: NoiseDistribution,
    positive: bool,
) -> Result<()> {
    if n == 0 {
        return Err(Error::param("N", "must be >= 1"));
    }
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::param("tau", format!("must be >= 0, got {tau}")));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidSigma {
            sigma,
            reason: "must be finite and >= 0".into(),
        });
    }
    if positive && sigma > 0.0 && sigma * distribution.bound() >= tau / n as f64 {
        let reason = match distribution {
            NoiseDistribution::Gaussian => {
                "unbounded noise cannot keep segment durations positive".to_string()
            }
            NoiseDistribution::Uniform => {
                format!("needs sqrt(3) sigma < tau/N = {}", tau / n as f64)
            }
        };
        return Err(Error::InvalidSigma { sigma, reason });
    }
    Ok(())
}

/// One adiabat under noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisyAdiabat {
    pub omega_start: f64,
    pub omega_end: f64,
    pub tau: f64,
    pub n: usize,
    pub sigma: f64,
    pub distribution: NoiseDistribution,
    pub target: NoiseTarget,
    pub ladder: Ladder,
    pub positive_durations: bool,
}

/// A single noisy trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyPath {
    pub b_final: BVector,
    /// Boundary states on the nominal time and field grid.
    pub trace: Vec<PathPoint>,
    /// Sum of the realized segment durations.
    pub duration: f64,
}

impl NoisyAdiabat {
    /// Noise on the segments of a deterministic adiabat. Its `Λ` is ignored.
    pub fn new(adiabat: &AdiabatParams, sigma: f64, cfg: &NoiseConfig) -> Result<Self> {
        let noisy = NoisyAdiabat {
            omega_start: adiabat.omega_start,
            omega_end: adiabat.omega_end,
            tau: adiabat.tau,
            n: cfg.n,
            sigma,
            distribution: cfg.distribution,
            target: cfg.target,
            ladder: cfg.ladder,
            positive_durations: cfg.positive_durations,
        };
        noisy.validate()?;
        Ok(noisy)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.omega_start.is_finite() || !self.omega_end.is_finite() {
            return Err(Error::param("omega", "non-finite adiabat endpoint"));
        }
        match self.target {
            NoiseTarget::Duration => check_duration_sigma(
                self.tau,
                self.n,
                self.sigma,
                self.distribution,
                self.positive_durations,
            ),
            NoiseTarget::Frequency => {
                check_duration_sigma(self.tau, self.n, self.sigma, self.distribution, false)
            }
        }
    }

    fn nominal_dt(&self) -> f64 {
        self.tau / self.n as f64
    }

    fn omega(&self, k: usize) -> f64 {
        self.ladder
            .omega(self.omega_start, self.omega_end, k, self.n)
    }

    fn boundary(&self, k: usize, b: BVector) -> PathPoint {
        let x = k as f64 / self.n as f64;
        PathPoint {
            t: self.tau * x,
            omega: self.omega_start + (self.omega_end - self.omega_start) * x,
            b,
        }
    }

    /// Map of segment `k` for noise value `u`, and the realized duration.
    fn segment(&self, k: usize, j: f64, u: f64) -> (Mat5, f64) {
        let dt = self.nominal_dt();
        match self.target {
            NoiseTarget::Duration => {
                let t = dt + self.sigma * u;
                (SegmentGenerator::new(self.omega(k), j).map(t, 0.0), t)
            }
            NoiseTarget::Frequency => (
                SegmentGenerator::new(self.omega(k) + self.sigma * u, j).map(dt, 0.0),
                dt,
            ),
        }
    }

    /// Exact ensemble average of the segment map.
    fn mean_segment(&self, k: usize, j: f64) -> Mat5 {
        let dt = self.nominal_dt();
        if self.sigma == 0.0 {
            return SegmentGenerator::new(self.omega(k), j).map(dt, 0.0);
        }
        match self.target {
            NoiseTarget::Duration => {
                // E[exp(rA)] = I + (1 − E[cos rν])/ν² A² for symmetric r.
                let seg = SegmentGenerator::new(self.omega(k), j);
                let nu = seg.rate();
                let u = seg.map(dt, 0.0);
                if nu == 0.0 {
                    return u;
                }
                let a = seg.unitary();
                let q = (1.0 - self.distribution.mean_cos(self.sigma * nu)) / (nu * nu);
                u * (Mat5::identity() + a * a * q)
            }
            NoiseTarget::Frequency => self.distribution.expectation(|u| self.segment(k, j, u).0),
        }
    }

    /// Propagates one realization, drawing segment `k` from the `k`-th value
    /// of `rng`.
    pub fn run<R: Rng + ?Sized>(&self, j: f64, b0: &BVector, rng: &mut R) -> Result<NoisyPath> {
        self.validate()?;
        let mut trace = Vec::with_capacity(self.n + 1);
        trace.push(self.boundary(0, *b0));
        let mut b = *b0;
        let mut duration = 0.0;
        for k in 0..self.n {
            let u = if self.sigma > 0.0 {
                self.distribution.sample(rng)
            } else {
                0.0
            };
            let (m, t) = self.segment(k, j, u);
            b = BVector(m * b.0);
            duration += t;
            trace.push(self.boundary(k + 1, b));
        }
        Ok(NoisyPath {
            b_final: b,
            trace,
            duration,
        })
    }

    /// Map of one realization.
    pub fn sample_map<R: Rng + ?Sized>(&self, j: f64, rng: &mut R) -> Result<Mat5> {
        self.validate()?;
        let mut m = Mat5::identity();
        for k in 0..self.n {
            let u = if self.sigma > 0.0 {
                self.distribution.sample(rng)
            } else {
                0.0
            };
            m = self.segment(k, j, u).0 * m;
        }
        Ok(m)
    }

    /// Map of the realization with every noise value negated.
    fn paired_maps<R: Rng + ?Sized>(&self, j: f64, rng: &mut R) -> (Mat5, Mat5) {
        let mut plus = Mat5::identity();
        let mut minus = Mat5::identity();
        for k in 0..self.n {
            let u = if self.sigma > 0.0 {
                self.distribution.sample(rng)
            } else {
                0.0
            };
            plus = self.segment(k, j, u).0 * plus;
            minus = self.segment(k, j, -u).0 * minus;
        }
        (plus, minus)
    }

    /// Exact ensemble-mean map.
    pub fn mean_map(&self, j: f64) -> Result<Mat5> {
        self.validate()?;
        let mut m = Mat5::identity();
        for k in 0..self.n {
            m = self.mean_segment(k, j) * m;
        }
        Ok(m)
    }

    /// Ensemble-mean trajectory; observables linear in `b` average along it.
    pub fn mean_path(&self, j: f64, b0: &BVector) -> Result<NoisyPath> {
        self.validate()?;
        let mut trace = Vec::with_capacity(self.n + 1);
        trace.push(self.boundary(0, *b0));
        let mut b = *b0;
        for k in 0..self.n {
            b = BVector(self.mean_segment(k, j) * b.0);
            trace.push(self.boundary(k + 1, b));
        }
        Ok(NoisyPath {
            b_final: b,
            trace,
            duration: self.tau,
        })
    }
}

/// Duration-noise adiabat with Gaussian noise on the endpoint ladder.
#[allow(clippy::too_many_arguments)]
pub fn noisy_adiabat<R: Rng + ?Sized>(
    b0: &BVector,
    omega_start: f64,
    omega_end: f64,
    tau: f64,
    n: usize,
    sigma: f64,
    j: f64,
    rng: &mut R,
) -> Result<BVector> {
    let adiabat = NoisyAdiabat {
        omega_start,
        omega_end,
        tau,
        n,
        sigma,
        distribution: NoiseDistribution::Gaussian,
        target: NoiseTarget::Duration,
        ladder: Ladder::Endpoint,
        positive_durations: false,
    };
    Ok(adiabat.run(j, b0, rng)?.b_final)
}

/// Frequency-noise adiabat (`σ` in energy units) on the endpoint ladder.
#[allow(clippy::too_many_arguments)]
pub fn frequency_noise_adiabat<R: Rng + ?Sized>(
    b0: &BVector,
    omega_start: f64,
    omega_end: f64,
    tau: f64,
    n: usize,
    sigma: f64,
    j: f64,
    rng: &mut R,
) -> Result<BVector> {
    let adiabat = NoisyAdiabat {
        omega_start,
        omega_end,
        tau,
        n,
        sigma,
        distribution: NoiseDistribution::Gaussian,
        target: NoiseTarget::Frequency,
        ladder: Ladder::Endpoint,
        positive_durations: false,
    };
    Ok(adiabat.run(j, b0, rng)?.b_final)
}

/// Entry-wise sample mean and standard error of a random map.
#[derive(Debug, Clone, PartialEq)]
pub struct MapEstimate {
    pub mean: Mat5,
    pub se: Mat5,
    pub samples: usize,
}

fn estimate_from(draws: &[Mat5]) -> MapEstimate {
    let n = draws.len() as f64;
    let mean = draws.iter().fold(Mat5::zeros(), |acc, m| acc + m) / n;
    let var = draws.iter().fold(Mat5::zeros(), |acc, m| {
        acc + (m - mean).component_mul(&(m - mean))
    }) / (n - 1.0).max(1.0);
    MapEstimate {
        mean,
        se: var.map(|v| (v / n).sqrt()),
        samples: draws.len(),
    }
}

/// Monte Carlo estimate of the ensemble-mean map from `samples`
/// realizations. With `antithetic`, realizations come in `(u, −u)` pairs and
/// each pair average counts as one draw.
pub fn estimate_mean_map(
    adiabat: &NoisyAdiabat,
    j: f64,
    samples: usize,
    seed: u64,
    antithetic: bool,
) -> Result<MapEstimate> {
    adiabat.validate()?;
    if samples < 2 {
        return Err(Error::param("samples", "must be >= 2"));
    }
    let draws: Vec<Mat5> = if antithetic {
        (0..samples / 2)
            .into_par_iter()
            .map(|i| {
                let (p, m) = adiabat.paired_maps(j, &mut substream(seed, i as u64, AUX_STREAM));
                (p + m) * 0.5
            })
            .collect()
    } else {
        (0..samples)
            .into_par_iter()
            .map(|i| adiabat.sample_map(j, &mut substream(seed, i as u64, AUX_STREAM)))
            .collect::<Result<_>>()?
    };
    Ok(estimate_from(&draws))
}

/// Reconstruction of the frequency-noise generator on a single segment.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorEstimate {
    /// `U_{−Δt/2} (E[M] − U_{Δt}) U_{−Δt/2} / Δt`, where `U` is the noiseless
    /// propagator. The half-step frame removes the first-order ordering term.
    pub estimate: Mat5,
    pub se: Mat5,
    /// `−(γ/2)[B1, [B1, ·]]` on the operator basis.
    pub target: Mat5,
    /// `γ = σ² Δt`.
    pub gamma: f64,
    /// Rate fitted along the double-commutator direction, with its standard
    /// error.
    pub gamma_fit: f64,
    pub gamma_se: f64,
    /// `‖estimate − (γ_fit/2) A1²‖ / ‖(γ_fit/2) A1²‖`: the part of the
    /// estimate that is not of double-commutator form.
    pub residual: f64,
}

impl GeneratorEstimate {
    /// `|γ_fit − γ|` in standard errors.
    pub fn z(&self) -> f64 {
        (self.gamma_fit - self.gamma).abs() / self.gamma_se
    }
}

/// Generator of field noise of amplitude `sigma` on one segment of length
/// `dt` at field `omega`, reconstructed from antithetic realizations.
pub fn frequency_noise_generator(
    omega: f64,
    j: f64,
    dt: f64,
    sigma: f64,
    distribution: NoiseDistribution,
    samples: usize,
    seed: u64,
) -> Result<GeneratorEstimate> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::param("dt", format!("must be > 0, got {dt}")));
    }
    if samples < 4 {
        return Err(Error::param("samples", "must be >= 4"));
    }
    let segment = NoisyAdiabat {
        omega_start: omega,
        omega_end: omega,
        tau: dt,
        n: 1,
        sigma,
        distribution,
        target: NoiseTarget::Frequency,
        ladder: Ladder::Endpoint,
        positive_durations: false,
    };
    segment.validate()?;
    let seg = SegmentGenerator::new(omega, j);
    let u = seg.map(dt, 0.0);
    let back = seg.map(-0.5 * dt, 0.0);
    let draws: Vec<Mat5> = (0..samples / 2)
        .into_par_iter()
        .map(|i| {
            let (p, m) = segment.paired_maps(j, &mut substream(seed, i as u64, AUX_STREAM));
            back * ((p + m) * 0.5 - u) * back / dt
        })
        .collect();
    let est = estimate_from(&draws);
    let a1 = unitary_generator(1.0, 0.0);
    let d1 = a1 * a1;
    let fit = |m: &Mat5| 2.0 * m.dot(&d1) / d1.norm_squared();
    let fits: Vec<f64> = draws.iter().map(fit).collect();
    let n = fits.len() as f64;
    let gamma_fit = fits.iter().sum::<f64>() / n;
    let var = fits.iter().map(|g| (g - gamma_fit).powi(2)).sum::<f64>() / (n - 1.0);
    let fitted = d1 * (0.5 * gamma_fit);
    let gamma = sigma * sigma * dt;
    Ok(GeneratorEstimate {
        residual: (est.mean - fitted).norm() / fitted.norm(),
        estimate: est.mean,
        se: est.se,
        target: d1 * (0.5 * gamma),
        gamma,
        gamma_fit,
        gamma_se: (var / n).sqrt(),
    })
}

/// Maps of the cycle with both adiabats replaced by their ensemble means.
pub fn ensemble_mean_maps(
    params: &EngineParams,
    schedule: &Schedule,
    cfg: &NoiseConfig,
) -> Result<BranchMaps> {
    cfg.validate()?;
    let (expansion, compression) = cfg.adiabats(params, schedule)?;
    let mut maps = branch_maps(&params.with_lambdas(0.0, 0.0), schedule, &cfg.integrator())?;
    maps.expansion = AffineMap::linear(expansion.mean_map(params.j)?);
    maps.compression = AffineMap::linear(compression.mean_map(params.j)?);
    Ok(maps)
}

/// Exact stationary ensemble average of the cycle summary. Heats, works and
/// the friction split are linear in the state, so they follow from the
/// ensemble-mean trajectory.
pub fn ensemble_mean_summary(
    params: &EngineParams,
    schedule: &Schedule,
    cfg: &NoiseConfig,
) -> Result<CycleSummary> {
    let maps = ensemble_mean_maps(params, schedule, cfg)?;
    let (expansion, compression) = cfg.adiabats(params, schedule)?;
    let b0 = limit_cycle(&maps.cycle_map())?;
    let b1 = maps.hot.apply(&b0);
    let ba = expansion.mean_path(params.j, &b1)?;
    let b3 = maps.cold.apply(&ba.b_final);
    let ab = compression.mean_path(params.j, &b3)?;
    let fa = accumulate_works(&ba.trace, params.j)?;
    let fb = accumulate_works(&ab.trace, params.j)?;
    let works = AdiabatWorks {
        field: fa.field + fb.field,
        friction: fa.friction + fb.friction,
    };
    summary_from_states(
        params,
        schedule,
        &[b0, b1, ba.b_final, b3, ab.b_final],
        works,
    )
}

/// Per-cycle observables of one noisy cycle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CycleTally {
    pub w_net: f64,
    pub w_friction: f64,
    pub w_field: f64,
    pub q_h: f64,
    pub q_c: f64,
    pub ds_ext: f64,
    /// Realized cycle duration.
    pub duration: f64,
}

impl CycleTally {
    fn fields(&self) -> [f64; 7] {
        [
            self.w_net,
            self.w_friction,
            self.w_field,
            self.q_h,
            self.q_c,
            self.ds_ext,
            self.duration,
        ]
    }

    fn from_fields(f: [f64; 7]) -> Self {
        CycleTally {
            w_net: f[0],
            w_friction: f[1],
            w_field: f[2],
            q_h: f[3],
            q_c: f[4],
            ds_ext: f[5],
            duration: f[6],
        }
    }
}

struct NoisyCycle<'a> {
    params: &'a EngineParams,
    maps: BranchMaps,
    expansion: NoisyAdiabat,
    compression: NoisyAdiabat,
    seed: u64,
    isochore_time: f64,
}

impl NoisyCycle<'_> {
    fn run(&self, index: u64, b0: &BVector) -> Result<(CycleTally, BVector)> {
        let p = self.params;
        let (j, wa, wb) = (p.j, p.omega_a, p.omega_b);
        let b1 = self.maps.hot.apply(b0);
        let ba = self.expansion.run(
            j,
            &b1,
            &mut branch_stream(self.seed, index, Branch::Expansion),
        )?;
        let b3 = self.maps.cold.apply(&ba.b_final);
        let ab = self.compression.run(
            j,
            &b3,
            &mut branch_stream(self.seed, index, Branch::Compression),
        )?;
        let b4 = ab.b_final;
        let q_h = b1.energy(wb, j) - b0.energy(wb, j);
        let q_c = b3.energy(wa, j) - ba.b_final.energy(wa, j);
        let w_net =
            (ba.b_final.energy(wa, j) - b1.energy(wb, j)) + (b4.energy(wb, j) - b3.energy(wa, j));
        let fa = accumulate_works(&ba.trace, j)?;
        let fb = accumulate_works(&ab.trace, j)?;
        Ok((
            CycleTally {
                w_net,
                w_friction: fa.friction + fb.friction,
                w_field: fa.field + fb.field,
                q_h,
                q_c,
                ds_ext: entropy_production(q_h, q_c, p.t_h, p.t_c)?,
                duration: self.isochore_time + ba.duration + ab.duration,
            },
            b4,
        ))
    }
}

/// Ensemble averages with batch-mean standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    /// Means. `p_avg` and the entropy rate use the nominal cycle time.
    pub mean: CycleSummary,
    /// Standard errors of the fields of `mean`; `tau` is left at zero.
    pub se: CycleSummary,
    pub mean_cycle_time: f64,
    pub se_cycle_time: f64,
    pub batch_means: Vec<CycleTally>,
    pub n_cycles: usize,
    /// Limit-cycle state every restart cycle begins from, or the start of the
    /// burn-in in continuous mode.
    pub anchor: [f64; 5],
}

impl MonteCarloSummary {
    pub fn entropy_rate(&self) -> (f64, f64) {
        (
            self.mean.ds_ext / self.mean.tau,
            self.se.ds_ext / self.mean.tau,
        )
    }
}

fn mean_of(tallies: &[CycleTally]) -> [f64; 7] {
    let mut acc = [0.0; 7];
    for t in tallies {
        for (a, v) in acc.iter_mut().zip(t.fields()) {
            *a += v;
        }
    }
    acc.map(|a| a / tallies.len() as f64)
}

/// Runs `cfg.n_cycles` noisy cycles. Cycle `i` draws from the substreams of
/// index `i` (offset by the burn-in in continuous mode), so results are
/// independent of thread count.
pub fn monte_carlo_cycle(
    params: &EngineParams,
    schedule: &Schedule,
    cfg: &NoiseConfig,
) -> Result<MonteCarloSummary> {
    params.validate()?;
    schedule.validate()?;
    cfg.validate()?;
    let (expansion, compression) = cfg.adiabats(params, schedule)?;
    let maps = branch_maps(&params.with_lambdas(0.0, 0.0), schedule, &cfg.integrator())?;
    let cycle = NoisyCycle {
        params,
        maps,
        expansion,
        compression,
        seed: cfg.seed,
        isochore_time: schedule.tau_h + schedule.tau_c,
    };

    let (anchor, tallies) = match cfg.mode {
        EnsembleMode::Restart => {
            let anchor = limit_cycle(&ensemble_mean_maps(params, schedule, cfg)?.cycle_map())?;
            let tallies = (0..cfg.n_cycles as u64)
                .into_par_iter()
                .map(|i| cycle.run(i, &anchor).map(|r| r.0))
                .collect::<Result<Vec<_>>>()?;
            (anchor, tallies)
        }
        EnsembleMode::Continuous => {
            let anchor = limit_cycle(&cycle.maps.cycle_map())?;
            let mut b = anchor;
            let mut tallies = Vec::with_capacity(cfg.n_cycles);
            for i in 0..(cfg.burn_in + cfg.n_cycles) as u64 {
                let (tally, next) = cycle.run(i, &b)?;
                if i >= cfg.burn_in as u64 {
                    tallies.push(tally);
                }
                b = next;
            }
            (anchor, tallies)
        }
    };

    let size = cfg.n_cycles / cfg.n_batches;
    let batch_means: Vec<CycleTally> = tallies
        .chunks(size)
        .map(|c| CycleTally::from_fields(mean_of(c)))
        .collect();
    let overall = mean_of(&tallies);
    let nb = batch_means.len() as f64;
    let mut se = [0.0; 7];
    for (f, s) in se.iter_mut().enumerate() {
        let var = batch_means
            .iter()
            .map(|b| (b.fields()[f] - overall[f]).powi(2))
            .sum::<f64>()
            / (nb - 1.0);
        *s = (var / nb).sqrt();
    }
    let tau = schedule.total();
    let m = CycleTally::from_fields(overall);
    let e = CycleTally::from_fields(se);
    Ok(MonteCarloSummary {
        mean: CycleSummary {
            w_net: m.w_net,
            w_friction: m.w_friction,
            w_field: m.w_field,
            q_h: m.q_h,
            q_c: m.q_c,
            p_avg: -m.w_net / tau,
            ds_ext: m.ds_ext,
            tau,
        },
        se: CycleSummary {
            w_net: e.w_net,
            w_friction: e.w_friction,
            w_field: e.w_field,
            q_h: e.q_h,
            q_c: e.q_c,
            p_avg: e.w_net / tau,
            ds_ext: e.ds_ext,
            tau: 0.0,
        },
        mean_cycle_time: m.duration,
        se_cycle_time: e.duration,
        batch_means,
        n_cycles: cfg.n_cycles,
        anchor: anchor.as_array(),
    })
}
