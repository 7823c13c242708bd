//! Density matrices, deviation states and the product-operator basis.
//!
//! Product-operator words are strings over `E X Y Z`, one letter per spin
//! (spin 0 first). The basis element for a word with `k` non-`E` letters is
//! `2^(k-1) · ⊗ I_axis`, e.g. `ZZ` ↦ `2·Iz·Sz`; the all-`E` word is the
//! identity.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::linalg::{self, c, dim, frobenius, hermitian_eigenvalues, psd_sqrt, CMatrix, C64, MAX_SPINS, ZERO};
use crate::spin_system::SpinSystem;

/// Whether a state carries its identity component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    /// Unit-trace density matrix.
    Full,
    /// Traceless part only.
    Deviation,
}

impl Representation {
    pub fn tag(self) -> &'static str {
        match self {
            Representation::Full => "full",
            Representation::Deviation => "deviation",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "full" => Some(Representation::Full),
            "deviation" => Some(Representation::Deviation),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n: usize,
    matrix: CMatrix,
    repr: Representation,
}

/// Result of [`DensityMatrix::distance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distance {
    pub trace_distance: f64,
    /// Uhlmann fidelity `(Tr √(√ρ σ √ρ))²`.
    pub fidelity: f64,
}

const TOL: f64 = 1e-10;

fn spins_for_dim(d: usize) -> Result<usize> {
    if d == 0 || !d.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(d));
    }
    let n = d.trailing_zeros() as usize;
    if n > MAX_SPINS {
        return Err(Error::InvalidArgument(format!("{n} spins exceeds the cap of {MAX_SPINS}")));
    }
    Ok(n)
}

impl DensityMatrix {
    /// Validated constructor: Hermitian, unit trace and positive (full) or
    /// traceless (deviation).
    pub fn new(matrix: CMatrix, repr: Representation) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), found: matrix.ncols() });
        }
        let n = spins_for_dim(matrix.nrows())?;
        let scale = frobenius(&matrix).max(1.0);
        if linalg::hermiticity_error(&matrix) > TOL * scale {
            return Err(Error::InvalidArgument("density matrix is not Hermitian".into()));
        }
        let tr = linalg::trace(&matrix);
        match repr {
            Representation::Full => {
                if (tr - c(1.0)).norm() > TOL * scale {
                    return Err(Error::InvalidArgument(format!("full state has trace {tr}")));
                }
                if let Some(&min) = hermitian_eigenvalues(&matrix).first() {
                    if min < -TOL {
                        return Err(Error::InvalidArgument(format!("negative eigenvalue {min:e}")));
                    }
                }
            }
            Representation::Deviation => {
                if tr.norm() > TOL * scale {
                    return Err(Error::InvalidArgument(format!("deviation state has trace {tr}")));
                }
            }
        }
        Ok(Self { n, matrix, repr })
    }

    /// `|ψ⟩⟨ψ|` for a normalized amplitude vector.
    pub fn pure(amplitudes: &[C64]) -> Result<Self> {
        let n = spins_for_dim(amplitudes.len())?;
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("state vector has norm² {norm}")));
        }
        let d = amplitudes.len();
        let matrix = CMatrix::from_fn(d, d, |i, j| amplitudes[i] * amplitudes[j].conj());
        Ok(Self { n, matrix, repr: Representation::Full })
    }

    /// Full state `|s⟩⟨s|`.
    pub fn basis_state(n: usize, s: usize) -> Result<Self> {
        check_basis(n, s)?;
        let mut matrix = CMatrix::zeros(dim(n), dim(n));
        matrix[(s, s)] = c(1.0);
        Ok(Self { n, matrix, repr: Representation::Full })
    }

    pub fn zero_deviation(n: usize) -> Self {
        Self { n, matrix: CMatrix::zeros(dim(n), dim(n)), repr: Representation::Deviation }
    }

    pub fn maximally_mixed(n: usize) -> Self {
        let d = dim(n);
        Self { n, matrix: CMatrix::identity(d, d) * c(1.0 / d as f64), repr: Representation::Full }
    }

    /// Diagonal thermal deviation `Σ_i w_i·2Iz_i`.
    pub fn thermal_deviation(n: usize, weights: &[f64]) -> Result<Self> {
        if weights.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: weights.len() });
        }
        if n == 0 || n > MAX_SPINS {
            return Err(Error::InvalidArgument(format!("spin count {n} out of range")));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("weights must be finite".into()));
        }
        let d = dim(n);
        let mut matrix = CMatrix::zeros(d, d);
        for idx in 0..d {
            let v: f64 = (0..n).map(|s| if linalg::bit_of(idx, s, n) == 0 { weights[s] } else { -weights[s] }).sum();
            matrix[(idx, idx)] = c(v);
        }
        Ok(Self { n, matrix, repr: Representation::Deviation })
    }

    /// Thermal deviation using the system's own equilibrium weights.
    pub fn thermal(sys: &SpinSystem) -> Self {
        Self::thermal_deviation(sys.n(), sys.weights()).expect("system weights are validated")
    }

    /// `|s⟩⟨s| − I/2ⁿ`: the outlier population is `(2ⁿ−1)/2ⁿ`, all others `−1/2ⁿ`.
    pub fn effective_pure_target(n: usize, s: usize) -> Result<Self> {
        check_basis(n, s)?;
        let d = dim(n);
        let mut matrix = CMatrix::identity(d, d) * c(-1.0 / d as f64);
        matrix[(s, s)] += c(1.0);
        Ok(Self { n, matrix, repr: Representation::Deviation })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        dim(self.n)
    }

    pub fn representation(&self) -> Representation {
        self.repr
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub(crate) fn matrix_mut(&mut self) -> &mut CMatrix {
        &mut self.matrix
    }

    /// Real diagonal (populations or population deviations).
    pub fn populations(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|z| z.re).collect()
    }

    pub fn trace(&self) -> C64 {
        linalg::trace(&self.matrix)
    }

    /// Frobenius norm of the off-diagonal part.
    pub fn off_diagonal_norm(&self) -> f64 {
        let d = self.dim();
        let mut acc = 0.0;
        for j in 0..d {
            for i in 0..d {
                if i != j {
                    acc += self.matrix[(i, j)].norm_sqr();
                }
            }
        }
        acc.sqrt()
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.repr != other.repr {
            return Err(Error::RepresentationMismatch(self.repr.tag(), other.repr.tag()));
        }
        if self.n != other.n {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(())
    }

    /// Sum of two deviation states (full states cannot be added and stay normalized).
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        if self.repr == Representation::Full {
            return Err(Error::InvalidArgument("sum of full states is not a density matrix; use mix".into()));
        }
        Ok(Self { n: self.n, matrix: &self.matrix + &other.matrix, repr: self.repr })
    }

    /// Convex combination `(1−p)·self + p·other`.
    pub fn mix(&self, other: &Self, p: f64) -> Result<Self> {
        self.check_compatible(other)?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("mixing weight {p} outside [0, 1]")));
        }
        Ok(Self { n: self.n, matrix: &self.matrix * c(1.0 - p) + &other.matrix * c(p), repr: self.repr })
    }

    /// Scales a deviation state.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if self.repr == Representation::Full {
            return Err(Error::InvalidArgument("cannot rescale a full state".into()));
        }
        Ok(Self { n: self.n, matrix: &self.matrix * c(factor), repr: self.repr })
    }

    /// Traceless part of this state.
    pub fn deviation(&self) -> Self {
        let d = self.dim();
        let tr = self.trace();
        let matrix = &self.matrix - CMatrix::identity(d, d) * (tr / d as f64);
        Self { n: self.n, matrix, repr: Representation::Deviation }
    }

    /// Full state `dev + I/2ⁿ`. For an effective pure target this is the
    /// corresponding pure state.
    pub fn with_identity(&self) -> Self {
        match self.repr {
            Representation::Full => self.clone(),
            Representation::Deviation => {
                let d = self.dim();
                let matrix = &self.matrix + CMatrix::identity(d, d) * c(1.0 / d as f64);
                Self { n: self.n, matrix, repr: Representation::Full }
            }
        }
    }

    /// `U ρ U†` with a full-space unitary.
    pub fn conjugate(&self, u: &CMatrix) -> Result<Self> {
        if u.nrows() != self.dim() || u.ncols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: u.nrows() });
        }
        Ok(Self { n: self.n, matrix: u * &self.matrix * u.adjoint(), repr: self.repr })
    }

    /// `U ρ U†` with a gate acting on `spins` only.
    pub fn conjugate_local(&self, spins: &[usize], u: &CMatrix) -> Self {
        let mut out = self.clone();
        linalg::conjugate_local(&mut out.matrix, self.n, spins, u);
        out
    }

    /// `Tr(ρ·O)`.
    pub fn expectation(&self, op: &CMatrix) -> Result<C64> {
        if op.nrows() != self.dim() || op.ncols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: op.nrows() });
        }
        let d = self.dim();
        let mut acc = ZERO;
        for i in 0..d {
            for k in 0..d {
                acc += self.matrix[(i, k)] * op[(k, i)];
            }
        }
        Ok(acc)
    }

    /// Keeps only elements whose coherence order `popcount(col) − popcount(row)`
    /// is in `keep`. `keep` must be closed under negation.
    pub fn coherence_order_filter(&self, keep: &[i32]) -> Result<Self> {
        if keep.iter().any(|p| !keep.contains(&-p)) {
            return Err(Error::AsymmetricOrders(keep.to_vec()));
        }
        let d = self.dim();
        let mut matrix = self.matrix.clone();
        for j in 0..d {
            for i in 0..d {
                let p = j.count_ones() as i32 - i.count_ones() as i32;
                if !keep.contains(&p) {
                    matrix[(i, j)] = ZERO;
                }
            }
        }
        Ok(Self { n: self.n, matrix, repr: self.repr })
    }

    /// Ideal gradient crusher: only zero-quantum elements survive.
    pub fn crush(&self) -> Self {
        self.coherence_order_filter(&[0]).expect("{0} is symmetric")
    }

    /// Trace distance and fidelity. Deviation states are compared as
    /// `dev + I/2ⁿ`.
    pub fn distance(&self, other: &Self) -> Result<Distance> {
        self.check_compatible(other)?;
        let diff = &self.matrix - &other.matrix;
        let trace_distance = 0.5 * hermitian_eigenvalues(&diff).iter().map(|e| e.abs()).sum::<f64>();
        let a = self.with_identity();
        let b = other.with_identity();
        let sa = psd_sqrt(&a.matrix);
        let inner = &sa * &b.matrix * &sa;
        let root: f64 = hermitian_eigenvalues(&inner).iter().map(|e| e.max(0.0).sqrt()).sum();
        Ok(Distance { trace_distance, fidelity: (root * root).min(1.0) })
    }

    pub fn to_product_operators(&self) -> ProductOperatorExpansion {
        ProductOperatorExpansion::from_matrix(&self.matrix)
    }

    /// Text dump: `DIM d`, `REPR full|deviation`, then `d` rows of `re im` pairs.
    pub fn to_text(&self) -> String {
        let d = self.dim();
        let mut out = format!("DIM {d}\nREPR {}\n", self.repr.tag());
        for i in 0..d {
            let row: Vec<String> =
                (0..d).map(|j| format!("{:?} {:?}", self.matrix[(i, j)].re, self.matrix[(i, j)].im)).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let parse_err = |line: usize, message: &str| Error::Parse { line, message: message.to_string() };
        let (ln, first) = lines.next().ok_or_else(|| parse_err(0, "empty input"))?;
        let d: usize = first
            .strip_prefix("DIM")
            .and_then(|r| r.trim().parse().ok())
            .ok_or_else(|| parse_err(ln, "expected `DIM <d>`"))?;
        let (ln, second) = lines.next().ok_or_else(|| parse_err(ln, "missing REPR line"))?;
        let repr = second
            .strip_prefix("REPR")
            .and_then(|r| Representation::parse(r.trim()))
            .ok_or_else(|| parse_err(ln, "expected `REPR full|deviation`"))?;
        spins_for_dim(d)?;
        let mut matrix = CMatrix::zeros(d, d);
        for i in 0..d {
            let (ln, row) = lines.next().ok_or_else(|| parse_err(0, "missing matrix rows"))?;
            let nums: Vec<f64> = row
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| parse_err(ln, &format!("bad number `{t}`"))))
                .collect::<Result<_>>()?;
            if nums.len() != 2 * d {
                return Err(parse_err(ln, &format!("expected {} numbers, found {}", 2 * d, nums.len())));
            }
            for j in 0..d {
                matrix[(i, j)] = C64::new(nums[2 * j], nums[2 * j + 1]);
            }
        }
        if let Some((ln, _)) = lines.next() {
            return Err(parse_err(ln, "trailing content"));
        }
        Self::new(matrix, repr)
    }
}

fn check_basis(n: usize, s: usize) -> Result<()> {
    if n == 0 || n > MAX_SPINS {
        return Err(Error::InvalidArgument(format!("spin count {n} out of range")));
    }
    if s >= dim(n) {
        return Err(Error::IndexOutOfRange { index: s, len: dim(n) });
    }
    Ok(())
}

/// Single-spin factor of a product-operator word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Factor {
    E,
    X,
    Y,
    Z,
}

impl Factor {
    const ALL: [Factor; 4] = [Factor::E, Factor::X, Factor::Y, Factor::Z];

    fn letter(self) -> char {
        match self {
            Factor::E => 'E',
            Factor::X => 'X',
            Factor::Y => 'Y',
            Factor::Z => 'Z',
        }
    }

    fn from_letter(ch: char) -> Option<Self> {
        match ch.to_ascii_uppercase() {
            'E' => Some(Factor::E),
            'X' => Some(Factor::X),
            'Y' => Some(Factor::Y),
            'Z' => Some(Factor::Z),
            _ => None,
        }
    }
}

/// Real coefficients over all `4ⁿ` product-operator words.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductOperatorExpansion {
    n: usize,
    coefficients: Vec<f64>,
}

impl ProductOperatorExpansion {
    /// Forward basis change. Imaginary parts (nonzero only for non-Hermitian
    /// input) are discarded.
    pub fn from_matrix(m: &CMatrix) -> Self {
        let d = m.nrows();
        let n = d.trailing_zeros() as usize;
        // Interleave row/column bits so each spin owns one base-4 digit,
        // then transform digit by digit into Pauli traces Tr(σ_w ρ).
        let mut a = vec![ZERO; d * d];
        for r in 0..d {
            for col in 0..d {
                a[interleave(r, col, n)] = m[(r, col)];
            }
        }
        for p in 0..n {
            let stride = 1usize << (2 * p);
            for base in 0..d * d {
                if !(base / stride).is_multiple_of(4) {
                    continue;
                }
                let (r00, r01, r10, r11) = (a[base], a[base + stride], a[base + 2 * stride], a[base + 3 * stride]);
                a[base] = r00 + r11;
                a[base + stride] = r01 + r10;
                a[base + 2 * stride] = (r01 - r10) * linalg::I;
                a[base + 3 * stride] = r00 - r11;
            }
        }
        let coefficients =
            a.iter().enumerate().map(|(w, t)| if w == 0 { t.re / d as f64 } else { 2.0 * t.re / d as f64 }).collect();
        Self { n, coefficients }
    }

    pub fn to_matrix(&self) -> CMatrix {
        let n = self.n;
        let d = dim(n);
        let mut a: Vec<C64> =
            self.coefficients.iter().enumerate().map(|(w, &cw)| if w == 0 { c(cw) } else { c(cw / 2.0) }).collect();
        for p in 0..n {
            let stride = 1usize << (2 * p);
            for base in 0..d * d {
                if !(base / stride).is_multiple_of(4) {
                    continue;
                }
                let (e, x, y, z) = (a[base], a[base + stride], a[base + 2 * stride], a[base + 3 * stride]);
                a[base] = e + z;
                a[base + stride] = x - y * linalg::I;
                a[base + 2 * stride] = x + y * linalg::I;
                a[base + 3 * stride] = e - z;
            }
        }
        CMatrix::from_fn(d, d, |r, col| a[interleave(r, col, n)])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Coefficient of a word such as `"ZEZ"`.
    pub fn get(&self, word: &str) -> Result<f64> {
        Ok(self.coefficients[self.word_index(word)?])
    }

    pub fn set(&mut self, word: &str, value: f64) -> Result<()> {
        let idx = self.word_index(word)?;
        self.coefficients[idx] = value;
        Ok(())
    }

    pub fn zero(n: usize) -> Self {
        Self { n, coefficients: vec![0.0; dim(2 * n)] }
    }

    /// Coefficients in word-index order (see [`ProductOperatorExpansion::word`]).
    pub fn from_coefficients(n: usize, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != dim(2 * n) {
            return Err(Error::DimensionMismatch { expected: dim(2 * n), found: coefficients.len() });
        }
        Ok(Self { n, coefficients })
    }

    fn word_index(&self, word: &str) -> Result<usize> {
        let factors: Vec<Factor> = word
            .chars()
            .map(|ch| Factor::from_letter(ch).ok_or_else(|| Error::InvalidArgument(format!("bad word `{word}`"))))
            .collect::<Result<_>>()?;
        if factors.len() != self.n {
            return Err(Error::WrongSpinCount { expected: self.n, found: factors.len() });
        }
        Ok(factors.iter().enumerate().map(|(s, f)| (*f as usize) << (2 * (self.n - 1 - s))).sum())
    }

    pub fn word(&self, index: usize) -> String {
        (0..self.n).map(|s| Factor::ALL[(index >> (2 * (self.n - 1 - s))) & 3].letter()).collect()
    }

    /// Words with `|coefficient| > tol`, in index order.
    pub fn nonzero(&self, tol: f64) -> Vec<(String, f64)> {
        self.coefficients.iter().enumerate().filter(|(_, v)| v.abs() > tol).map(|(i, &v)| (self.word(i), v)).collect()
    }
}

fn interleave(r: usize, col: usize, n: usize) -> usize {
    let mut idx = 0;
    for p in 0..n {
        let digit = 2 * ((r >> p) & 1) + ((col >> p) & 1);
        idx |= digit << (2 * p);
    }
    idx
}

/// Explicit matrix of a product-operator basis element, built by Kronecker
/// products. Used as an independent oracle.
pub fn product_operator_matrix(word: &str) -> Result<CMatrix> {
    let factors: Vec<Factor> = word
        .chars()
        .map(|ch| Factor::from_letter(ch).ok_or_else(|| Error::InvalidArgument(format!("bad word `{word}`"))))
        .collect::<Result<_>>()?;
    let k = factors.iter().filter(|&&f| f != Factor::E).count();
    let mut m = CMatrix::identity(1, 1);
    for f in factors {
        let factor = match f {
            Factor::E => CMatrix::identity(2, 2),
            Factor::X => linalg::spin_half(linalg::Axis::X),
            Factor::Y => linalg::spin_half(linalg::Axis::Y),
            Factor::Z => linalg::spin_half(linalg::Axis::Z),
        };
        m = linalg::kron(&m, &factor);
    }
    if k >= 1 {
        m *= c((1u64 << (k - 1)) as f64);
    }
    Ok(m)
}
