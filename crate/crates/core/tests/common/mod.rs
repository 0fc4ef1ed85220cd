//! Independent reference implementations for the integration tests: dense
//! 16-dimensional Liouville-space propagation, Gibbs states by matrix
//! exponential and random physical states.
#![allow(dead_code)]

use nalgebra::{Matrix2, Matrix4, SMatrix, SVector};
use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Op = Matrix4<C>;
pub type Super = SMatrix<C, 16, 16>;
pub type Vec16 = SVector<C, 16>;

fn re(x: f64) -> C {
    C::new(x, 0.0)
}

fn kron(a: &Matrix2<C>, b: &Matrix2<C>) -> Op {
    Op::from_fn(|r, c| a[(r / 2, c / 2)] * b[(r % 2, c % 2)])
}

fn paulis() -> [Matrix2<C>; 4] {
    let (o, l, i) = (re(0.0), re(1.0), C::i());
    [
        Matrix2::new(l, o, o, l),
        Matrix2::new(o, l, l, o),
        Matrix2::new(o, -i, i, o),
        Matrix2::new(l, o, o, -l),
    ]
}

/// The five basis operators, written out from Pauli products.
pub fn basis() -> [Op; 5] {
    let [id, x, y, z] = paulis();
    let n = re(2f64.powf(-1.5));
    [
        (kron(&z, &id) + kron(&id, &z)) * n,
        (kron(&x, &x) - kron(&y, &y)) * n,
        (kron(&x, &y) + kron(&y, &x)) * n,
        (kron(&z, &id) - kron(&id, &z)) * n,
        kron(&z, &z) * re(0.5),
    ]
}

pub fn hamiltonian(omega: f64, j: f64) -> Op {
    let b = basis();
    b[0] * re(omega) + b[1] * re(j)
}

pub fn rho_from_b(b: &[f64; 5]) -> Op {
    let ops = basis();
    let mut rho = Op::identity() * re(0.25);
    for k in 0..5 {
        rho += ops[k] * re(b[k]);
    }
    rho
}

pub fn b_from_rho(rho: &Op) -> [f64; 5] {
    let ops = basis();
    std::array::from_fn(|k| (ops[k] * rho).trace().re)
}

pub fn max_abs(m: &Op) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn vec(rho: &Op) -> Vec16 {
    Vec16::from_iterator(rho.iter().copied())
}

fn unvec(v: &Vec16) -> Op {
    Op::from_iterator(v.iter().copied())
}

/// Superoperator matrix of a linear map on 4×4 matrices.
pub fn superop<F: Fn(&Op) -> Op>(f: F) -> Super {
    let mut s = Super::zeros();
    for col in 0..16 {
        let mut e = Op::zeros();
        e[col] = re(1.0);
        s.set_column(col, &vec(&f(&e)));
    }
    s
}

pub fn apply(s: &Super, rho: &Op) -> Op {
    unvec(&(s * vec(rho)))
}

fn comm(a: &Op, b: &Op) -> Op {
    a * b - b * a
}

/// `−i[H, ·] − λ[H, [H, ·]]`.
pub fn dephased_unitary(h: Op, lambda: f64) -> Super {
    superop(move |r| comm(&h, r) * (-C::i()) - comm(&h, &comm(&h, r)) * re(lambda))
}

/// Energy levels of a real symmetric `H`, highest first, as
/// `(energy, eigenvectors)` with degenerate vectors grouped.
fn levels(h: &Op) -> Vec<(f64, Vec<SVector<C, 4>>)> {
    let real = h.map(|z| z.re);
    let eig = real.symmetric_eigen();
    let mut idx: Vec<usize> = (0..4).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut out: Vec<(f64, Vec<SVector<C, 4>>)> = Vec::new();
    for i in idx {
        let e = eig.eigenvalues[i];
        let v = eig.eigenvectors.column(i).map(re);
        match out.last_mut() {
            Some((e0, vs)) if (*e0 - e).abs() < 1e-9 => vs.push(v),
            _ => out.push((e, vec![v])),
        }
    }
    out
}

fn dissipator(l: Op) -> impl Fn(&Op) -> Op {
    let ld = l.adjoint();
    let ldl = ld * l;
    move |r| l * r * ld - (ldl * r + r * ldl) * re(0.5)
}

/// Full isochore Liouvillian with every elementary jump `|b⟩⟨a|` between
/// adjacent levels listed separately.
pub fn isochore_liouvillian(omega: f64, j: f64, temperature: f64, gamma: f64, pure: f64) -> Super {
    let h = hamiltonian(omega, j);
    let lv = levels(&h);
    let mut jumps: Vec<(f64, Op)> = Vec::new();
    for pair in lv.windows(2) {
        let (upper, lower) = (&pair[0], &pair[1]);
        let boltz = (-(upper.0 - lower.0) / temperature).exp();
        let down = gamma / (1.0 + boltz);
        let up = down * boltz;
        for a in &upper.1 {
            for b in &lower.1 {
                jumps.push((down, b * a.adjoint()));
                jumps.push((up, a * b.adjoint()));
            }
        }
    }
    let mut l = dephased_unitary(h, pure.abs());
    for (rate, op) in jumps {
        l += superop(dissipator(op)) * re(rate);
    }
    l
}

/// Propagator `exp(L t)` by classical RK4 on the 16×16 matrix.
pub fn rk4(l: &Super, t: f64, steps: usize) -> Super {
    let h = re(t / steps as f64);
    let half = re(0.5);
    let mut p = Super::identity();
    for _ in 0..steps {
        let k1 = l * p;
        let k2 = l * (p + k1 * h * half);
        let k3 = l * (p + k2 * h * half);
        let k4 = l * (p + k3 * h);
        p += (k1 + k2 * re(2.0) + k3 * re(2.0) + k4) * (h / re(6.0));
    }
    p
}

/// Piecewise-constant ramp `ω_start → ω_end` in `n` segments, each segment
/// integrated by RK4. `endpoint` selects right-endpoint fields, otherwise
/// midpoints.
#[allow(clippy::too_many_arguments)]
pub fn adiabat_propagator(
    omega_start: f64,
    omega_end: f64,
    j: f64,
    tau: f64,
    lambda: f64,
    n: usize,
    endpoint: bool,
    rk_steps: usize,
) -> Super {
    let dt = tau / n as f64;
    let mut p = Super::identity();
    for k in 0..n {
        let x = if endpoint {
            (k + 1) as f64
        } else {
            k as f64 + 0.5
        } / n as f64;
        let omega = omega_start + (omega_end - omega_start) * x;
        p = rk4(
            &dephased_unitary(hamiltonian(omega, j), lambda),
            dt,
            rk_steps,
        ) * p;
    }
    p
}

/// Gibbs state `e^{−H/T}/Z` by direct matrix exponential.
pub fn gibbs(omega: f64, j: f64, temperature: f64) -> Op {
    let h = hamiltonian(omega, j).map(|z| z.re);
    let e = (h * (-1.0 / temperature)).exp();
    let z = e.trace();
    (e / z).map(re)
}

/// Smallest eigenvalue of a Hermitian 4×4 matrix, via its real 8×8 embedding.
pub fn min_eigenvalue(rho: &Op) -> f64 {
    let m = SMatrix::<f64, 8, 8>::from_fn(|r, c| {
        let z = rho[(r % 4, c % 4)];
        match (r < 4, c < 4) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    m.symmetric_eigen().eigenvalues.min()
}

/// Random physical states inside the five-operator algebra.
pub fn random_states(n: usize, seed: u64) -> Vec<[f64; 5]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let raw: [f64; 5] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let x = rho_from_b(&raw) - Op::identity() * re(0.25);
            let mu = min_eigenvalue(&x);
            let s = rng.random_range(0.05..0.999) / (4.0 * mu.abs());
            raw.map(|v| v * s)
        })
        .collect()
}
