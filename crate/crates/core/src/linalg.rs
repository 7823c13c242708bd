//! Dense complex linear algebra shared by every module.
//!
//! Basis convention: for `n` spins the Zeeman basis state `|b_0 b_1 … b_{n-1}⟩`
//! has index `Σ b_s · 2^(n-1-s)`, so spin 0 is the leftmost (most significant)
//! bit. Bit value 0 is spin up (`|0⟩`, +z), 1 is spin down.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// Dense representations are capped at this many spins.
pub const MAX_SPINS: usize = 12;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn dim(n: usize) -> usize {
    1usize << n
}

/// Bit position inside a basis index that holds `spin`.
#[inline]
pub fn bit_position(n: usize, spin: usize) -> usize {
    n - 1 - spin
}

/// Value (0 or 1) of `spin` in basis state `index`.
#[inline]
pub fn bit_of(index: usize, spin: usize, n: usize) -> usize {
    (index >> bit_position(n, spin)) & 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Single spin-1/2 operator `I_axis = σ_axis / 2`.
pub fn spin_half(axis: Axis) -> CMatrix {
    match axis {
        Axis::X => CMatrix::from_row_slice(2, 2, &[ZERO, c(0.5), c(0.5), ZERO]),
        Axis::Y => CMatrix::from_row_slice(2, 2, &[ZERO, C64::new(0.0, -0.5), C64::new(0.0, 0.5), ZERO]),
        Axis::Z => CMatrix::from_row_slice(2, 2, &[c(0.5), ZERO, ZERO, c(-0.5)]),
    }
}

/// Raising operator `I₊ = |0⟩⟨1|` and lowering operator `I₋ = |1⟩⟨0|`.
pub fn raising() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO])
}

pub fn lowering() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, ZERO, ONE, ZERO])
}

#[inline]
pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// `op` acting on `spin` of an `n`-spin register, identity elsewhere.
pub fn spin_operator(n: usize, spin: usize, op: &CMatrix) -> CMatrix {
    embed(op, &[spin], n)
}

/// `I_axis` of one spin embedded in the full space.
pub fn spin_axis(n: usize, spin: usize, axis: Axis) -> CMatrix {
    spin_operator(n, spin, &spin_half(axis))
}

/// Rotation by `angle` (rad) about the transverse axis at azimuth `phase` (rad):
/// `exp(-i·angle·(Ix cos φ + Iy sin φ))`.
pub fn rotation(angle: f64, phase: f64) -> CMatrix {
    let (s, co) = (angle / 2.0).sin_cos();
    let (sp, cp) = phase.sin_cos();
    // -i sin(θ/2) (cos φ σx + sin φ σy)
    let off_upper = C64::new(-s * sp, -s * cp); // -i s (cp - i sp)
    let off_lower = C64::new(s * sp, -s * cp); // -i s (cp + i sp)
    CMatrix::from_row_slice(2, 2, &[c(co), off_upper, off_lower, c(co)])
}

/// `exp(-i·angle·Iz)`.
pub fn rotation_z(angle: f64) -> CMatrix {
    let h = angle / 2.0;
    CMatrix::from_row_slice(2, 2, &[C64::from_polar(1.0, -h), ZERO, ZERO, C64::from_polar(1.0, h)])
}

fn local_offsets(n: usize, spins: &[usize]) -> (usize, Vec<usize>) {
    let k = spins.len();
    let mut mask = 0usize;
    for &s in spins {
        mask |= 1 << bit_position(n, s);
    }
    let offsets = (0..dim(k))
        .map(|l| {
            let mut idx = 0usize;
            for (q, &s) in spins.iter().enumerate() {
                if (l >> (k - 1 - q)) & 1 == 1 {
                    idx |= 1 << bit_position(n, s);
                }
            }
            idx
        })
        .collect();
    (mask, offsets)
}

/// Applies a `2^k × 2^k` gate acting on `spins` (first listed spin is the
/// most significant local bit) to a state vector in place.
pub fn apply_local_vec(amps: &mut [C64], n: usize, spins: &[usize], u: &CMatrix) {
    let (mask, offsets) = local_offsets(n, spins);
    let m = offsets.len();
    let mut buf = vec![ZERO; m];
    for base in 0..dim(n) {
        if base & mask != 0 {
            continue;
        }
        for (l, off) in offsets.iter().enumerate() {
            buf[l] = amps[base | off];
        }
        for (r, off) in offsets.iter().enumerate() {
            let mut acc = ZERO;
            for (l, b) in buf.iter().enumerate() {
                acc += u[(r, l)] * b;
            }
            amps[base | off] = acc;
        }
    }
}

/// `m ← U_embedded · m`.
pub fn apply_local_left(m: &mut CMatrix, n: usize, spins: &[usize], u: &CMatrix) {
    let cols = m.ncols();
    for j in 0..cols {
        let mut col = m.column_mut(j);
        apply_local_vec(col.as_mut_slice(), n, spins, u);
    }
}

/// `m ← m · U_embedded†`.
pub fn apply_local_right_adjoint(m: &mut CMatrix, n: usize, spins: &[usize], u: &CMatrix) {
    let uc = u.map(|z| z.conj());
    let rows = m.nrows();
    let mut row = vec![ZERO; m.ncols()];
    for r in 0..rows {
        for (j, v) in row.iter_mut().enumerate() {
            *v = m[(r, j)];
        }
        apply_local_vec(&mut row, n, spins, &uc);
        for (j, v) in row.iter().enumerate() {
            m[(r, j)] = *v;
        }
    }
}

/// `m ← U m U†` for a gate acting on a subset of spins.
pub fn conjugate_local(m: &mut CMatrix, n: usize, spins: &[usize], u: &CMatrix) {
    apply_local_left(m, n, spins, u);
    apply_local_right_adjoint(m, n, spins, u);
}

/// Full `2^n × 2^n` matrix of a local gate.
pub fn embed(u: &CMatrix, spins: &[usize], n: usize) -> CMatrix {
    let mut m = CMatrix::identity(dim(n), dim(n));
    apply_local_left(&mut m, n, spins, u);
    m
}

/// `m ← D m D†` for a diagonal unitary `D = diag(phases)`.
pub fn conjugate_diagonal(m: &mut CMatrix, phases: &[C64]) {
    let d = phases.len();
    for j in 0..d {
        let pj = phases[j].conj();
        for i in 0..d {
            m[(i, j)] *= phases[i] * pj;
        }
    }
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn adjoint(m: &CMatrix) -> CMatrix {
    m.adjoint()
}

/// `‖U†U − 1‖_F`.
pub fn unitarity_error(u: &CMatrix) -> f64 {
    let d = u.nrows();
    frobenius(&(u.adjoint() * u - CMatrix::identity(d, d)))
}

/// `‖H − H†‖_F`.
pub fn hermiticity_error(h: &CMatrix) -> f64 {
    frobenius(&(h - h.adjoint()))
}

/// Frobenius distance after removing the best global phase between `a` and `b`.
pub fn phase_aligned_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    let overlap: C64 = b.iter().zip(a.iter()).map(|(x, y)| x.conj() * y).sum();
    let phase = if overlap.norm() > 0.0 { overlap / overlap.norm() } else { ONE };
    frobenius(&(a - b * phase))
}

/// Matrix exponential by scaling and squaring.
pub fn expm(a: &CMatrix) -> CMatrix {
    a.clone().exp()
}

/// `exp(-i H t)` for Hermitian `H`. Uses the diagonal fast path when possible.
pub fn propagator(h: &CMatrix, t: f64) -> CMatrix {
    if is_diagonal(h) {
        let d = h.nrows();
        let mut u = CMatrix::zeros(d, d);
        for i in 0..d {
            u[(i, i)] = C64::from_polar(1.0, -h[(i, i)].re * t);
        }
        u
    } else {
        expm(&(h * C64::new(0.0, -t)))
    }
}

pub fn is_diagonal(m: &CMatrix) -> bool {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if i != j && m[(i, j)] != ZERO {
                return false;
            }
        }
    }
    true
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let sym = (m + m.adjoint()) * c(0.5);
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Principal square root of a positive semidefinite Hermitian matrix.
pub fn psd_sqrt(m: &CMatrix) -> CMatrix {
    let sym = (m + m.adjoint()) * c(0.5);
    let eig = sym.symmetric_eigen();
    let d = m.nrows();
    let mut diag = CMatrix::zeros(d, d);
    for i in 0..d {
        diag[(i, i)] = c(eig.eigenvalues[i].max(0.0).sqrt());
    }
    &eig.eigenvectors * diag * eig.eigenvectors.adjoint()
}
