//! Two-spin operator algebra.
//!
//! The working medium is a pair of coupled spin-1/2 particles. Its
//! thermodynamic state lives in the span of the identity and five Hermitian,
//! traceless, trace-orthonormal operators `B1..B5`:
//!
//! * `B1 = 2^{-3/2}(σz⊗I + I⊗σz)`: the external-field operator,
//! * `B2 = 2^{-3/2}(σx⊗σx − σy⊗σy)`: the spin-spin interaction,
//! * `B3 = 2^{-3/2}(σx⊗σy + σy⊗σx)`: closes the algebra, `[B1, B2] = √2 i B3`,
//! * `B4 = 2^{-3/2}(σz⊗I − I⊗σz)` and `B5 = σz⊗σz / 2`: conserved by every
//!   Hamiltonian `H = ω B1 + J B2`.
//!
//! The basis ordering of the 4-dimensional Hilbert space is
//! `|↑↑⟩, |↑↓⟩, |↓↑⟩, |↓↓⟩` with `σz|↑⟩ = |↑⟩`.

use std::sync::OnceLock;

use nalgebra::{Matrix2, Matrix4, Matrix5, Vector5};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat4 = Matrix4<C64>;
pub type Mat5 = Matrix5<f64>;
pub type Vec5 = Vector5<f64>;

/// Hilbert-space dimension of the two-spin medium.
pub const HILBERT_DIM: usize = 4;

/// Tolerance below which eigenvalues are treated as degenerate, relative to
/// `max(1, |E|)`.
const DEGENERACY_TOL: f64 = 1e-9;

/// Minimum eigenvalue accepted before a state is declared non-physical.
pub const POSITIVITY_TOL: f64 = 1e-9;

/// Largest imaginary residue tolerated in `tr{ρ B_k}`.
pub const IMAG_TOL: f64 = 1e-10;

const HALF: C64 = C64::new(0.5, 0.0);

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn pauli() -> [Matrix2<C64>; 4] {
    let zero = c(0.0);
    let one = c(1.0);
    let i = C64::i();
    [
        Matrix2::new(one, zero, zero, one),
        Matrix2::new(zero, one, one, zero),
        Matrix2::new(zero, -i, i, zero),
        Matrix2::new(one, zero, zero, -one),
    ]
}

/// Kronecker product of two single-spin operators.
pub fn kron(a: &Matrix2<C64>, b: &Matrix2<C64>) -> CMat4 {
    CMat4::from_fn(|r, col| a[(r / 2, col / 2)] * b[(r % 2, col % 2)])
}

pub fn commutator(a: &CMat4, b: &CMat4) -> CMat4 {
    a * b - b * a
}

pub fn anticommutator(a: &CMat4, b: &CMat4) -> CMat4 {
    a * b + b * a
}

/// Hilbert-Schmidt inner product `tr{A† B}`.
pub fn trace_inner(a: &CMat4, b: &CMat4) -> C64 {
    (a.adjoint() * b).trace()
}

/// Largest entry modulus.
pub fn max_abs(m: &CMat4) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// The fixed operator basis `B1..B5` plus the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSet {
    ops: [CMat4; 5],
    identity: CMat4,
}

impl OperatorSet {
    pub fn b(&self, k: usize) -> &CMat4 {
        &self.ops[k]
    }

    pub fn all(&self) -> &[CMat4; 5] {
        &self.ops
    }

    pub fn identity(&self) -> &CMat4 {
        &self.identity
    }

    /// Expand coefficients as `Σ v_k B_k`.
    pub fn combine(&self, v: &Vec5) -> CMat4 {
        self.ops
            .iter()
            .zip(v.iter())
            .fold(CMat4::zeros(), |acc, (op, &x)| acc + op * c(x))
    }

    /// Project a traceless matrix on the basis, `v_k = tr{B_k X}`, failing if
    /// any coefficient carries an imaginary residue above [`IMAG_TOL`].
    pub fn coefficients(&self, x: &CMat4) -> Result<Vec5> {
        let mut v = Vec5::zeros();
        for (k, op) in self.ops.iter().enumerate() {
            let z = trace_inner(op, x);
            if z.im.abs() > IMAG_TOL * (1.0 + z.re.abs()) {
                return Err(Error::ImaginaryResidue {
                    residue: z.im.abs(),
                });
            }
            v[k] = z.re;
        }
        Ok(v)
    }
}

pub fn build_operator_set() -> OperatorSet {
    let [id, sx, sy, sz] = pauli();
    let norm = c(2f64.powf(-1.5));
    let ops = [
        (kron(&sz, &id) + kron(&id, &sz)) * norm,
        (kron(&sx, &sx) - kron(&sy, &sy)) * norm,
        (kron(&sx, &sy) + kron(&sy, &sx)) * norm,
        (kron(&sz, &id) - kron(&id, &sz)) * norm,
        kron(&sz, &sz) * HALF,
    ];
    OperatorSet {
        ops,
        identity: CMat4::identity(),
    }
}

/// Shared, lazily built operator set.
pub fn operators() -> &'static OperatorSet {
    static OPS: OnceLock<OperatorSet> = OnceLock::new();
    OPS.get_or_init(build_operator_set)
}

/// `H = ω B1 + J B2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian {
    pub omega: f64,
    pub j: f64,
    pub matrix: CMat4,
}

impl Hamiltonian {
    /// `Ω = √(ω² + J²)`, the instantaneous energy scale.
    pub fn scale(&self) -> f64 {
        energy_scale(self.omega, self.j)
    }

    /// Coefficients of `H` on the operator basis.
    pub fn coefficients(&self) -> Vec5 {
        Vec5::new(self.omega, self.j, 0.0, 0.0, 0.0)
    }
}

pub fn energy_scale(omega: f64, j: f64) -> f64 {
    omega.hypot(j)
}

pub fn hamiltonian(omega: f64, j: f64) -> Hamiltonian {
    let ops = operators();
    Hamiltonian {
        omega,
        j,
        matrix: ops.b(0) * c(omega) + ops.b(1) * c(j),
    }
}

/// Eigenvalues sorted in descending order with matching orthonormal
/// eigenvectors stored as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyEigensystem {
    pub values: [f64; 4],
    pub vectors: CMat4,
}

/// One energy level: its eigenvalue and the spectral projector onto it.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub energy: f64,
    pub degeneracy: usize,
    pub projector: CMat4,
}

impl EnergyEigensystem {
    /// Spectral projectors grouped by (numerically) degenerate eigenvalue,
    /// in descending energy order.
    pub fn levels(&self) -> Vec<Level> {
        let mut levels: Vec<Level> = Vec::new();
        for n in 0..HILBERT_DIM {
            let e = self.values[n];
            let v = self.vectors.column(n);
            let proj = v * v.adjoint();
            match levels.last_mut() {
                Some(last)
                    if (last.energy - e).abs() <= DEGENERACY_TOL * last.energy.abs().max(1.0) =>
                {
                    last.projector += proj;
                    last.degeneracy += 1;
                }
                _ => levels.push(Level {
                    energy: e,
                    degeneracy: 1,
                    projector: proj,
                }),
            }
        }
        levels
    }
}

/// Eigen-decomposition of a Hermitian 4×4 matrix (eigenvalues descending,
/// first significant component of each eigenvector real and positive).
pub fn hermitian_eigensystem(m: &CMat4) -> EnergyEigensystem {
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..HILBERT_DIM).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut values = [0.0; 4];
    let mut vectors = CMat4::zeros();
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        let mut col = eig.eigenvectors.column(src).into_owned();
        col /= c(col.norm());
        if let Some(lead) = col.iter().find(|z| z.norm() > 1e-12).copied() {
            col *= lead.conj() / c(lead.norm());
        }
        vectors.set_column(dst, &col);
    }
    EnergyEigensystem { values, vectors }
}

pub fn energy_eigensystem(h: &Hamiltonian) -> EnergyEigensystem {
    hermitian_eigensystem(&h.matrix)
}

/// Eigenvalues of a Hermitian matrix, descending.
pub fn hermitian_eigenvalues(m: &CMat4) -> [f64; 4] {
    let mut ev: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    [ev[0], ev[1], ev[2], ev[3]]
}

/// The five expectation values `b_k = ⟨B_k⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BVector(pub Vec5);

impl BVector {
    pub fn new(b: [f64; 5]) -> Self {
        BVector(Vec5::from(b))
    }

    pub fn zeros() -> Self {
        BVector(Vec5::zeros())
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.0[0], self.0[1], self.0[2], self.0[3], self.0[4]]
    }

    pub fn b1(&self) -> f64 {
        self.0[0]
    }

    pub fn b2(&self) -> f64 {
        self.0[1]
    }

    pub fn b3(&self) -> f64 {
        self.0[2]
    }

    /// `⟨H⟩ = ω b1 + J b2`.
    pub fn energy(&self, omega: f64, j: f64) -> f64 {
        omega * self.0[0] + j * self.0[1]
    }

    /// Validity predicate: the reconstructed state is positive semidefinite.
    pub fn is_physical(&self) -> bool {
        state_from_b(self).is_ok()
    }

    /// Smallest eigenvalue of the reconstructed density matrix.
    ///
    /// `ρ` is block diagonal: on `{|↑↑⟩, |↓↓⟩}` it reads
    /// `(1/4 + b5/2) I + (b1 σz + b2 σx + b3 σy)/√2`, on `{|↑↓⟩, |↓↑⟩}` it is
    /// `diag(1/4 − b5/2 + b4/√2, 1/4 − b5/2 − b4/√2)`.
    pub fn min_eigenvalue(&self) -> f64 {
        let s2 = std::f64::consts::SQRT_2;
        let b = &self.0;
        let bloch = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
        let outer = 0.25 + 0.5 * b[4] - bloch / s2;
        let inner = 0.25 - 0.5 * b[4] - b[3].abs() / s2;
        outer.min(inner)
    }

    pub fn max_abs_diff(&self, other: &BVector) -> f64 {
        (self.0 - other.0).amax()
    }
}

/// A validated density matrix (Hermitian, unit trace, positive semidefinite).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    rho: CMat4,
}

impl DensityState {
    pub fn new(rho: CMat4) -> Result<Self> {
        let herm = max_abs(&(rho - rho.adjoint()));
        if herm > 1e-10 {
            return Err(Error::param(
                "rho",
                format!("not Hermitian (residual {herm:e})"),
            ));
        }
        let tr = rho.trace();
        if (tr - c(1.0)).norm() > 1e-10 {
            return Err(Error::param("rho", format!("trace {tr} != 1")));
        }
        let rho = (rho + rho.adjoint()) * HALF;
        let min = hermitian_eigenvalues(&rho)[3];
        if min < -POSITIVITY_TOL {
            return Err(Error::NonPhysicalState {
                min_eigenvalue: min,
            });
        }
        Ok(DensityState { rho })
    }

    pub fn matrix(&self) -> &CMat4 {
        &self.rho
    }

    pub fn eigenvalues(&self) -> [f64; 4] {
        hermitian_eigenvalues(&self.rho)
    }

    /// Maximally mixed state `I/4`.
    pub fn maximally_mixed() -> Self {
        DensityState {
            rho: CMat4::identity() * c(0.25),
        }
    }
}

/// `ρ = I/4 + Σ b_k B_k`, rejected when not positive semidefinite.
pub fn state_from_b(b: &BVector) -> Result<DensityState> {
    DensityState::new(raw_state_from_b(b))
}

/// Reconstruction without the positivity check.
pub fn raw_state_from_b(b: &BVector) -> CMat4 {
    CMat4::identity() * c(0.25) + operators().combine(&b.0)
}

/// `b_k = tr{ρ B_k}`.
pub fn b_from_state(rho: &DensityState) -> Result<BVector> {
    operators().coefficients(rho.matrix()).map(BVector)
}

/// `ρ ∝ exp(−H/T)`.
pub fn gibbs_state(omega: f64, j: f64, temperature: f64) -> Result<DensityState> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::InvalidTemperature(temperature));
    }
    let eig = energy_eigensystem(&hamiltonian(omega, j));
    let e_min = eig.values[3];
    let mut rho = CMat4::zeros();
    let mut z = 0.0;
    for level in eig.levels() {
        let w = (-(level.energy - e_min) / temperature).exp();
        z += w * level.degeneracy as f64;
        rho += level.projector * c(w);
    }
    DensityState::new(rho / c(z))
}

/// Gibbs state expressed as a [`BVector`].
pub fn gibbs_b(omega: f64, j: f64, temperature: f64) -> Result<BVector> {
    b_from_state(&gibbs_state(omega, j, temperature)?)
}

/// Generator `A` of the unitary dynamics `dρ/dt = −i[H, ρ]` on expectation
/// values, `db/dt = A b`. Skew-symmetric on `(b1, b2, b3)`, zero on `b4, b5`.
pub fn unitary_generator(omega: f64, j: f64) -> Mat5 {
    static BASIS: OnceLock<(Mat5, Mat5)> = OnceLock::new();
    let (a1, a2) = BASIS.get_or_init(|| {
        (
            project_unitary(&hamiltonian(1.0, 0.0).matrix),
            project_unitary(&hamiltonian(0.0, 1.0).matrix),
        )
    });
    a1 * omega + a2 * j
}

fn project_unitary(h: &CMat4) -> Mat5 {
    let ops = operators();
    Mat5::from_fn(|row, col| {
        let image = commutator(h, ops.b(col)) * (-C64::i());
        trace_inner(ops.b(row), &image).re
    })
}

/// Projection of a Schrödinger-picture superoperator `S` onto the algebra:
/// returns `(G, g, residual)` with `tr{B_k S(ρ)} = (G b + g)_k` and the largest
/// entry of the component of `S(B_j)` that leaves the span of `{I, B_k}`.
pub fn project_superoperator<F>(s: F) -> Result<(Mat5, Vec5, f64)>
where
    F: Fn(&CMat4) -> CMat4,
{
    let ops = operators();
    let mut g = Mat5::zeros();
    let mut residual: f64 = 0.0;
    for col in 0..5 {
        let image = s(ops.b(col));
        let coeffs = ops.coefficients(&image)?;
        g.set_column(col, &coeffs);
        let rest = image - ops.combine(&coeffs) - CMat4::identity() * (image.trace() * c(0.25));
        residual = residual.max(max_abs(&rest));
    }
    let image = s(&(CMat4::identity() * c(0.25)));
    let offset = ops.coefficients(&image)?;
    let rest = image - ops.combine(&offset) - CMat4::identity() * (image.trace() * c(0.25));
    residual = residual.max(max_abs(&rest));
    Ok((g, offset, residual))
}
