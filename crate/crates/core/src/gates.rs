//! Abstract gate layer: canonical unitaries, circuits, state vectors and the
//! quantum Fourier transform.
//!
//! Angles are in degrees. Multi-spin gates list their spins most significant
//! first, so `Cnot { control: 0, target: 1 }` on two spins is the usual
//! `[[1,0,0,0],[0,1,0,0],[0,0,0,1],[0,0,1,0]]`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{self, bit_position, c, dim, CMatrix, C64, MAX_SPINS, ONE, ZERO};
use crate::state::DensityMatrix;

/// Sign of the Fourier exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Convention {
    /// `e^{−2πi jk/N}`; reproduces the shift-phase worked examples.
    #[default]
    Negative,
    /// `e^{+2πi jk/N}`.
    Positive,
}

impl Convention {
    pub fn sign(self) -> f64 {
        match self {
            Convention::Negative => -1.0,
            Convention::Positive => 1.0,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Convention::Negative => '-',
            Convention::Positive => '+',
        }
    }
}

impl FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "-" | "negative" => Ok(Convention::Negative),
            "+" | "positive" => Ok(Convention::Positive),
            other => Err(Error::InvalidArgument(format!("unknown convention `{other}`"))),
        }
    }
}

/// Rotation axis; `Phase(φ)` is the transverse axis at azimuth φ degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RotationAxis {
    X,
    Y,
    Z,
    Phase(f64),
}

impl RotationAxis {
    /// Transverse azimuth in degrees, `None` for z.
    pub fn azimuth_deg(self) -> Option<f64> {
        match self {
            RotationAxis::X => Some(0.0),
            RotationAxis::Y => Some(90.0),
            RotationAxis::Z => None,
            RotationAxis::Phase(p) => Some(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    Rotation {
        spin: usize,
        axis: RotationAxis,
        angle_deg: f64,
    },
    Hadamard(usize),
    Cnot {
        control: usize,
        target: usize,
    },
    Inept {
        control: usize,
        target: usize,
    },
    /// `diag(1, 1, 1, e^{iθ})` on `(a, b)`.
    ControlledPhase {
        a: usize,
        b: usize,
        angle_deg: f64,
    },
    /// Basis permutation: local state `x` goes to `map[x]`.
    Permutation {
        spins: Vec<usize>,
        map: Vec<usize>,
    },
    Qft {
        spins: Vec<usize>,
        convention: Convention,
    },
}

impl Gate {
    pub fn rx(spin: usize, angle_deg: f64) -> Self {
        Gate::Rotation { spin, axis: RotationAxis::X, angle_deg }
    }

    pub fn ry(spin: usize, angle_deg: f64) -> Self {
        Gate::Rotation { spin, axis: RotationAxis::Y, angle_deg }
    }

    pub fn rz(spin: usize, angle_deg: f64) -> Self {
        Gate::Rotation { spin, axis: RotationAxis::Z, angle_deg }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Gate::Cnot { control, target }
    }

    pub fn not(spin: usize) -> Self {
        Gate::Permutation { spins: vec![spin], map: vec![1, 0] }
    }

    pub fn spins(&self) -> Vec<usize> {
        match self {
            Gate::Rotation { spin, .. } | Gate::Hadamard(spin) => vec![*spin],
            Gate::Cnot { control, target } | Gate::Inept { control, target } => vec![*control, *target],
            Gate::ControlledPhase { a, b, .. } => vec![*a, *b],
            Gate::Permutation { spins, .. } | Gate::Qft { spins, .. } => spins.clone(),
        }
    }

    /// Checks indices, distinctness and permutation bijectivity.
    pub fn validate(&self, n: usize) -> Result<()> {
        let spins = self.spins();
        if spins.is_empty() {
            return Err(Error::InvalidGate("gate acts on no spins".into()));
        }
        for (i, &s) in spins.iter().enumerate() {
            if s >= n {
                return Err(Error::IndexOutOfRange { index: s, len: n });
            }
            if spins[..i].contains(&s) {
                return Err(Error::InvalidGate(format!("spin {s} repeated")));
            }
        }
        let finite = |x: f64| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidGate("angle must be finite".into()))
            }
        };
        match self {
            Gate::Rotation { axis, angle_deg, .. } => {
                finite(*angle_deg)?;
                if let RotationAxis::Phase(p) = axis {
                    finite(*p)?;
                }
            }
            Gate::ControlledPhase { angle_deg, .. } => finite(*angle_deg)?,
            Gate::Permutation { spins, map } => {
                if map.len() != dim(spins.len()) {
                    return Err(Error::InvalidGate(format!(
                        "permutation on {} spins needs {} entries, got {}",
                        spins.len(),
                        dim(spins.len()),
                        map.len()
                    )));
                }
                let mut seen = vec![false; map.len()];
                for &m in map {
                    if m >= map.len() || seen[m] {
                        return Err(Error::InvalidGate(format!("{map:?} is not a bijection")));
                    }
                    seen[m] = true;
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Unitary on the gate's own spins (`2^k × 2^k`).
    pub fn local_matrix(&self) -> CMatrix {
        match self {
            Gate::Rotation { axis, angle_deg, .. } => {
                let theta = angle_deg.to_radians();
                match axis.azimuth_deg() {
                    Some(phi) => linalg::rotation(theta, phi.to_radians()),
                    None => linalg::rotation_z(theta),
                }
            }
            Gate::Hadamard(_) => hadamard_matrix(),
            Gate::Cnot { .. } => cnot_matrix(),
            Gate::Inept { .. } => inept_matrix(),
            Gate::ControlledPhase { angle_deg, .. } => {
                let mut m = CMatrix::identity(4, 4);
                m[(3, 3)] = C64::from_polar(1.0, angle_deg.to_radians());
                m
            }
            Gate::Permutation { map, .. } => {
                let d = map.len();
                let mut m = CMatrix::zeros(d, d);
                for (x, &y) in map.iter().enumerate() {
                    m[(y, x)] = ONE;
                }
                m
            }
            Gate::Qft { spins, convention } => qft_matrix(dim(spins.len()), *convention).expect("power of two"),
        }
    }

    /// Embedded `2ⁿ × 2ⁿ` unitary.
    pub fn matrix(&self, n: usize) -> Result<CMatrix> {
        self.validate(n)?;
        let mut u = CMatrix::identity(dim(n), dim(n));
        self.apply_left(&mut u, n);
        Ok(u)
    }

    /// `m ← U·m` (gate assumed valid).
    fn apply_left(&self, m: &mut CMatrix, n: usize) {
        if let Gate::Permutation { spins, map } = self {
            let full = permutation_full_map(n, spins, map);
            let src = m.clone();
            for (x, &y) in full.iter().enumerate() {
                m.row_mut(y).copy_from(&src.row(x));
            }
        } else {
            linalg::apply_local_left(m, n, &self.spins(), &self.local_matrix());
        }
    }

    fn apply_vec(&self, amps: &mut [C64], n: usize) {
        if let Gate::Permutation { spins, map } = self {
            let full = permutation_full_map(n, spins, map);
            let src = amps.to_vec();
            for (x, &y) in full.iter().enumerate() {
                amps[y] = src[x];
            }
        } else {
            linalg::apply_local_vec(amps, n, &self.spins(), &self.local_matrix());
        }
    }

    fn conjugate(&self, m: &mut CMatrix, n: usize) {
        if let Gate::Permutation { spins, map } = self {
            let full = permutation_full_map(n, spins, map);
            let src = m.clone();
            for (x, &y) in full.iter().enumerate() {
                for (x2, &y2) in full.iter().enumerate() {
                    m[(y, y2)] = src[(x, x2)];
                }
            }
        } else {
            linalg::conjugate_local(m, n, &self.spins(), &self.local_matrix());
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        match self {
            Gate::Rotation { spin, axis, angle_deg } => match axis {
                RotationAxis::X => write!(f, "ROT {spin} x {angle_deg:?}"),
                RotationAxis::Y => write!(f, "ROT {spin} y {angle_deg:?}"),
                RotationAxis::Z => write!(f, "ROT {spin} z {angle_deg:?}"),
                RotationAxis::Phase(p) => write!(f, "ROT {spin} phi={p:?} {angle_deg:?}"),
            },
            Gate::Hadamard(s) => write!(f, "H {s}"),
            Gate::Cnot { control, target } => write!(f, "CNOT {control} {target}"),
            Gate::Inept { control, target } => write!(f, "INEPT {control} {target}"),
            Gate::ControlledPhase { a, b, angle_deg } => write!(f, "CPHASE {a} {b} {angle_deg:?}"),
            Gate::Permutation { spins, map } => write!(f, "PERM spins={} map={}", join(spins), join(map)),
            Gate::Qft { spins, convention } => {
                let list: Vec<String> = spins.iter().map(|s| s.to_string()).collect();
                write!(f, "QFT {} {}", list.join(" "), convention.symbol())
            }
        }
    }
}

/// Full-register image of every basis index under a local permutation.
pub fn permutation_full_map(n: usize, spins: &[usize], map: &[usize]) -> Vec<usize> {
    let k = spins.len();
    (0..dim(n))
        .map(|idx| {
            let mut local = 0usize;
            for (q, &s) in spins.iter().enumerate() {
                local |= ((idx >> bit_position(n, s)) & 1) << (k - 1 - q);
            }
            let image = map[local];
            let mut out = idx;
            for (q, &s) in spins.iter().enumerate() {
                let bit = (image >> (k - 1 - q)) & 1;
                out = (out & !(1 << bit_position(n, s))) | (bit << bit_position(n, s));
            }
            out
        })
        .collect()
}

pub fn hadamard_matrix() -> CMatrix {
    let h = c(FRAC_1_SQRT_2);
    CMatrix::from_row_slice(2, 2, &[h, h, h, -h])
}

pub fn cnot_matrix() -> CMatrix {
    CMatrix::from_row_slice(
        4,
        4,
        &[ONE, ZERO, ZERO, ZERO, ZERO, ONE, ZERO, ZERO, ZERO, ZERO, ZERO, ONE, ZERO, ZERO, ONE, ZERO],
    )
}

pub fn inept_matrix() -> CMatrix {
    let i = linalg::I;
    CMatrix::from_row_slice(
        4,
        4,
        &[ONE, ZERO, ZERO, ZERO, ZERO, i, ZERO, ZERO, ZERO, ZERO, ZERO, ONE, ZERO, ZERO, -i, ZERO],
    )
}

/// `N × N` Fourier matrix with entries `e^{±2πi jk/N}/√N`.
pub fn qft_matrix(big_n: usize, convention: Convention) -> Result<CMatrix> {
    if big_n == 0 || !big_n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(big_n));
    }
    let norm = 1.0 / (big_n as f64).sqrt();
    let s = convention.sign();
    Ok(CMatrix::from_fn(big_n, big_n, |k, j| {
        let phase = s * 2.0 * PI * ((j * k) % big_n) as f64 / big_n as f64;
        C64::from_polar(norm, phase)
    }))
}

/// Direct `O(N²)` evaluation of `y_k = Σ_j x_j e^{±2πi jk/N} / √N`.
pub fn fft_reference(x: &[C64], convention: Convention) -> Vec<C64> {
    let big_n = x.len();
    if big_n == 0 {
        return Vec::new();
    }
    let norm = 1.0 / (big_n as f64).sqrt();
    let s = convention.sign();
    (0..big_n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(j, &xj)| {
                    let phase = s * 2.0 * PI * ((j * k) % big_n) as f64 / big_n as f64;
                    xj * C64::from_polar(1.0, phase)
                })
                .sum::<C64>()
                * norm
        })
        .collect()
}

/// Divides by the first element with modulus above `tol` so outputs read as
/// small integers and phases.
pub fn rescale_by_first_nonzero(v: &[C64], tol: f64) -> Vec<C64> {
    match v.iter().find(|z| z.norm() > tol) {
        Some(&first) => v.iter().map(|z| z / first).collect(),
        None => v.to_vec(),
    }
}

/// Hadamard + controlled-phase ladder followed by an explicit bit reversal.
/// `spins[0]` is the most significant bit of the register.
pub fn qft_circuit(n: usize, spins: &[usize], convention: Convention) -> Result<Circuit> {
    let k = spins.len();
    let mut circuit = Circuit::new(n)?;
    let s = convention.sign();
    for i in 0..k {
        circuit.push(Gate::Hadamard(spins[i]))?;
        for j in i + 1..k {
            let angle = s * 180.0 / f64::from(1u32 << (j - i));
            circuit.push(Gate::ControlledPhase { a: spins[j], b: spins[i], angle_deg: angle })?;
        }
    }
    if k > 1 {
        let map = (0..dim(k)).map(|x| reverse_bits(x, k)).collect();
        circuit.push(Gate::Permutation { spins: spins.to_vec(), map })?;
    }
    Ok(circuit)
}

pub fn reverse_bits(x: usize, k: usize) -> usize {
    (0..k).fold(0, |acc, b| acc | (((x >> b) & 1) << (k - 1 - b)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    n: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_SPINS {
            return Err(Error::InvalidArgument(format!("qubit count {n} out of range 1..={MAX_SPINS}")));
        }
        Ok(Self { n, gates: Vec::new() })
    }

    pub fn from_gates(n: usize, gates: Vec<Gate>) -> Result<Self> {
        let mut c = Self::new(n)?;
        for g in gates {
            c.push(g)?;
        }
        Ok(c)
    }

    pub fn push(&mut self, gate: Gate) -> Result<()> {
        gate.validate(self.n)?;
        self.gates.push(gate);
        Ok(())
    }

    pub fn extend(&mut self, other: &Circuit) -> Result<()> {
        if other.n != self.n {
            return Err(Error::WrongSpinCount { expected: self.n, found: other.n });
        }
        self.gates.extend(other.gates.iter().cloned());
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// Product of gate matrices, first gate applied first.
    pub fn unitary(&self) -> CMatrix {
        let mut u = CMatrix::identity(dim(self.n), dim(self.n));
        for g in &self.gates {
            g.apply_left(&mut u, self.n);
        }
        u
    }

    /// `U ρ U†`, gate by gate.
    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.n() != self.n {
            return Err(Error::WrongSpinCount { expected: self.n, found: rho.n() });
        }
        let mut out = rho.clone();
        for g in &self.gates {
            g.conjugate(out.matrix_mut(), self.n);
        }
        Ok(out)
    }

    pub fn apply_vec(&self, psi: &mut StateVector) -> Result<()> {
        if psi.n != self.n {
            return Err(Error::WrongSpinCount { expected: self.n, found: psi.n });
        }
        for g in &self.gates {
            g.apply_vec(&mut psi.amps, self.n);
        }
        Ok(())
    }

    /// Line-oriented text form; see [`Circuit::parse`].
    pub fn to_text(&self) -> String {
        let mut out = format!("QUBITS {}\n", self.n);
        for g in &self.gates {
            out.push_str(&g.to_string());
            out.push('\n');
        }
        out
    }

    /// Parses the circuit grammar:
    ///
    /// ```text
    /// QUBITS 3
    /// H 0
    /// ROT 2 y 90            # axis x|y|z or phi=<deg>, then angle in degrees
    /// ROT 0 phi=45 90
    /// CNOT 0 1
    /// INEPT 0 1
    /// CPHASE 0 1 90
    /// PERM spins=0,1 map=1,2,3,0
    /// QFT 0 1 2 +           # trailing + or − selects the convention
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut circuit: Option<Circuit> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: line_no, message };
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let keyword = tokens[0].to_ascii_uppercase();
            if keyword == "QUBITS" {
                if circuit.is_some() {
                    return Err(err("duplicate QUBITS line".into()));
                }
                let n =
                    tokens.get(1).and_then(|t| t.parse().ok()).ok_or_else(|| err("expected `QUBITS <n>`".into()))?;
                circuit = Some(Circuit::new(n).map_err(|e| err(e.to_string()))?);
                continue;
            }
            let c = circuit.as_mut().ok_or_else(|| err("QUBITS must come first".into()))?;
            let gate = parse_gate(&keyword, &tokens[1..]).map_err(err)?;
            c.push(gate).map_err(|e| err(e.to_string()))?;
        }
        circuit.ok_or(Error::Parse { line: 0, message: "missing QUBITS line".into() })
    }
}

fn parse_gate(keyword: &str, args: &[&str]) -> std::result::Result<Gate, String> {
    let idx = |t: &str| t.parse::<usize>().map_err(|_| format!("bad spin index `{t}`"));
    let num = |t: &str| t.parse::<f64>().map_err(|_| format!("bad number `{t}`"));
    let list = |t: &str| t.split(',').map(idx).collect::<std::result::Result<Vec<_>, _>>();
    let arity = |k: usize| {
        if args.len() == k {
            Ok(())
        } else {
            Err(format!("{keyword} takes {k} arguments, got {}", args.len()))
        }
    };
    match keyword {
        "H" => {
            arity(1)?;
            Ok(Gate::Hadamard(idx(args[0])?))
        }
        "CNOT" | "INEPT" => {
            arity(2)?;
            let (control, target) = (idx(args[0])?, idx(args[1])?);
            Ok(if keyword == "CNOT" { Gate::Cnot { control, target } } else { Gate::Inept { control, target } })
        }
        "CPHASE" => {
            arity(3)?;
            Ok(Gate::ControlledPhase { a: idx(args[0])?, b: idx(args[1])?, angle_deg: num(args[2])? })
        }
        "ROT" => {
            arity(3)?;
            let axis = match args[1].to_ascii_lowercase().as_str() {
                "x" => RotationAxis::X,
                "y" => RotationAxis::Y,
                "z" => RotationAxis::Z,
                other => match other.strip_prefix("phi=") {
                    Some(p) => RotationAxis::Phase(num(p)?),
                    None => return Err(format!("bad rotation axis `{}`", args[1])),
                },
            };
            Ok(Gate::Rotation { spin: idx(args[0])?, axis, angle_deg: num(args[2])? })
        }
        "PERM" => {
            arity(2)?;
            let spins = args[0].strip_prefix("spins=").ok_or("expected spins=<list>")?;
            let map = args[1].strip_prefix("map=").ok_or("expected map=<list>")?;
            Ok(Gate::Permutation { spins: list(spins)?, map: list(map)? })
        }
        "QFT" => {
            let (last, spins) = args.split_last().ok_or("QFT needs spins and a convention")?;
            let convention = last.parse::<Convention>().map_err(|e| e.to_string())?;
            let spins = spins.iter().map(|t| idx(t)).collect::<std::result::Result<Vec<_>, _>>()?;
            Ok(Gate::Qft { spins, convention })
        }
        other => Err(format!("unknown gate `{other}`")),
    }
}

/// Pure state of `n` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<C64>,
}

impl StateVector {
    pub fn basis(n: usize, index: usize) -> Result<Self> {
        if n == 0 || n > MAX_SPINS {
            return Err(Error::InvalidArgument(format!("qubit count {n} out of range")));
        }
        if index >= dim(n) {
            return Err(Error::IndexOutOfRange { index, len: dim(n) });
        }
        let mut amps = vec![ZERO; dim(n)];
        amps[index] = ONE;
        Ok(Self { n, amps })
    }

    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        let d = amps.len();
        if d < 2 || !d.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(d));
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("state vector has norm² {norm}")));
        }
        Ok(Self { n: d.trailing_zeros() as usize, amps })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn apply(&mut self, gate: &Gate) -> Result<()> {
        gate.validate(self.n)?;
        gate.apply_vec(&mut self.amps, self.n);
        Ok(())
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Probabilities of the sub-register `spins` (first listed = MSB).
    pub fn marginal(&self, spins: &[usize]) -> Vec<f64> {
        let k = spins.len();
        let mut out = vec![0.0; dim(k)];
        for (idx, a) in self.amps.iter().enumerate() {
            out[local_index(idx, self.n, spins)] += a.norm_sqr();
        }
        out
    }

    /// Projects `spins` onto `outcome` and renormalizes; returns the
    /// probability of that outcome.
    pub fn collapse(&mut self, spins: &[usize], outcome: usize) -> f64 {
        let mut p = 0.0;
        for (idx, a) in self.amps.iter_mut().enumerate() {
            if local_index(idx, self.n, spins) == outcome {
                p += a.norm_sqr();
            } else {
                *a = ZERO;
            }
        }
        if p > 0.0 {
            let s = 1.0 / p.sqrt();
            for a in &mut self.amps {
                *a *= s;
            }
        }
        p
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix::pure(&self.amps).expect("state vectors stay normalized")
    }
}

/// Value of the sub-register `spins` (first listed = MSB) inside `index`.
pub fn local_index(index: usize, n: usize, spins: &[usize]) -> usize {
    let k = spins.len();
    spins.iter().enumerate().fold(0, |acc, (q, &s)| acc | (((index >> bit_position(n, s)) & 1) << (k - 1 - q)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frobenius, phase_aligned_distance, unitarity_error};
    use crate::state::Representation;
    use proptest::prelude::*;

    fn approx(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
        frobenius(&(a - b)) < tol
    }

    fn all_kinds() -> Vec<Gate> {
        vec![
            Gate::rx(0, 37.0),
            Gate::ry(1, 90.0),
            Gate::rz(2, -45.0),
            Gate::Rotation { spin: 0, axis: RotationAxis::Phase(33.0), angle_deg: 120.0 },
            Gate::Hadamard(1),
            Gate::cnot(2, 0),
            Gate::Inept { control: 0, target: 2 },
            Gate::ControlledPhase { a: 1, b: 2, angle_deg: 60.0 },
            Gate::Permutation { spins: vec![2, 0], map: vec![1, 2, 3, 0] },
            Gate::Qft { spins: vec![0, 1, 2], convention: Convention::Negative },
        ]
    }

    #[test]
    fn canonical_matrices() {
        let cnot = Gate::cnot(0, 1).matrix(2).unwrap();
        assert!(approx(&cnot, &cnot_matrix(), 1e-15));
        assert_eq!(cnot[(3, 2)], ONE);
        let inept = Gate::Inept { control: 0, target: 1 }.matrix(2).unwrap();
        assert_eq!(inept[(1, 1)], linalg::I);
        assert_eq!(inept[(3, 2)], -linalg::I);
        assert_eq!(inept[(2, 3)], ONE);
        let h = Gate::Hadamard(0).matrix(1).unwrap();
        let s = FRAC_1_SQRT_2;
        assert!(approx(&h, &CMatrix::from_row_slice(2, 2, &[c(s), c(s), c(s), c(-s)]), 1e-15));
        let r = Gate::ry(0, 90.0).matrix(1).unwrap();
        assert!(approx(&r, &CMatrix::from_row_slice(2, 2, &[c(s), c(-s), c(s), c(s)]), 1e-15));
    }

    #[test]
    fn every_gate_is_unitary() {
        for g in all_kinds() {
            let u = g.matrix(3).unwrap();
            assert!(unitarity_error(&u) < 1e-12, "{g}");
        }
    }

    #[test]
    fn powers_and_identities() {
        let cnot = cnot_matrix();
        assert!(approx(&(&cnot * &cnot), &CMatrix::identity(4, 4), 1e-15));
        let inept = inept_matrix();
        let i4 = &inept * &inept * &inept * &inept;
        // fourth power is a control-spin Z, the eighth power is the identity
        let z_control = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![ONE, ONE, -ONE, -ONE]));
        assert!(approx(&i4, &z_control, 1e-15));
        assert!(approx(&(&i4 * &i4), &CMatrix::identity(4, 4), 1e-15));
        let had = Circuit::from_gates(1, vec![Gate::Hadamard(0), Gate::Hadamard(0)]).unwrap();
        assert!(approx(&had.unitary(), &CMatrix::identity(2, 2), 1e-12));
        let y90 = Circuit::from_gates(1, vec![Gate::ry(0, 90.0), Gate::ry(0, 90.0)]).unwrap();
        assert!(approx(&y90.unitary(), &Gate::ry(0, 180.0).matrix(1).unwrap(), 1e-12));
    }

    #[test]
    fn inept_is_cnot_after_z_rotations() {
        let c = Circuit::from_gates(2, vec![Gate::rz(0, -90.0), Gate::rz(1, 90.0), Gate::cnot(0, 1)]).unwrap();
        assert!(approx(&c.unitary(), &inept_matrix(), 1e-12));
    }

    #[test]
    fn cnot_truth_table() {
        let c = Circuit::from_gates(2, vec![Gate::cnot(0, 1)]).unwrap();
        for (input, output) in [(0, 0), (1, 1), (2, 3), (3, 2)] {
            let mut psi = StateVector::basis(2, input).unwrap();
            c.apply_vec(&mut psi).unwrap();
            assert_eq!(psi.amplitudes()[output], ONE);
        }
    }

    #[test]
    fn circuit_apply_matches_unitary_conjugation() {
        let c = Circuit::from_gates(3, all_kinds()).unwrap();
        let u = c.unitary();
        let rho = DensityMatrix::thermal_deviation(3, &[1.0, 0.4, -0.2]).unwrap();
        let rho = Circuit::from_gates(3, vec![Gate::rx(0, 30.0), Gate::ry(2, 70.0)]).unwrap().apply(&rho).unwrap();
        let direct = &u * rho.matrix() * u.adjoint();
        let applied = c.apply(&rho).unwrap();
        assert!(approx(applied.matrix(), &direct, 1e-12));
        assert_eq!(applied.representation(), Representation::Deviation);
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(Gate::cnot(0, 3).validate(3), Err(Error::IndexOutOfRange { .. })));
        assert!(Gate::cnot(1, 1).validate(3).is_err());
        let bad = Gate::Permutation { spins: vec![0], map: vec![0, 0] };
        assert!(matches!(bad.validate(1), Err(Error::InvalidGate(_))));
        assert!(matches!(qft_matrix(6, Convention::Negative), Err(Error::NotPowerOfTwo(6))));
    }

    #[test]
    fn fft_reference_examples() {
        let s8 = 1.0 / 8f64.sqrt();
        let mut x = vec![ZERO; 8];
        x[0] = ONE;
        let y = fft_reference(&x, Convention::Negative);
        assert!(y.iter().all(|z| (z - c(s8)).norm() < 1e-15));
        let y = fft_reference(&vec![ONE; 8], Convention::Negative);
        assert!((y[0] - c(8f64.sqrt())).norm() < 1e-12);
        assert!(y[1..].iter().all(|z| z.norm() < 1e-12));
        let mut x = vec![ZERO; 8];
        x[3] = ONE;
        x[7] = ONE;
        let y = rescale_by_first_nonzero(&fft_reference(&x, Convention::Negative), 1e-9);
        let i = linalg::I;
        let expected = [ONE, ZERO, i, ZERO, -ONE, ZERO, -i, ZERO];
        for (a, b) in y.iter().zip(expected) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn qft_matrix_matches_reference_columns() {
        for conv in [Convention::Negative, Convention::Positive] {
            let q = qft_matrix(8, conv).unwrap();
            for j in 0..8 {
                let mut e = vec![ZERO; 8];
                e[j] = ONE;
                let y = fft_reference(&e, conv);
                for k in 0..8 {
                    assert!((q[(k, j)] - y[k]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn qft_circuit_matches_matrix() {
        for k in 1..=4 {
            for conv in [Convention::Negative, Convention::Positive] {
                let spins: Vec<usize> = (0..k).collect();
                let u = qft_circuit(k, &spins, conv).unwrap().unitary();
                let q = qft_matrix(dim(k), conv).unwrap();
                assert!(phase_aligned_distance(&u, &q) < 1e-10, "k={k} {conv:?}");
            }
        }
        // register embedded in a larger system with non-contiguous spins
        let u = qft_circuit(4, &[3, 1, 0], Convention::Negative).unwrap().unitary();
        let block = Gate::Qft { spins: vec![3, 1, 0], convention: Convention::Negative }.matrix(4).unwrap();
        assert!(phase_aligned_distance(&u, &block) < 1e-10);
    }

    #[test]
    fn period_inversion_is_exhaustive_for_n8() {
        for r in [1usize, 2, 4, 8] {
            for shift in 0..r {
                let support: Vec<usize> = (0..8).filter(|j| j % r == shift).collect();
                let amp = c(1.0 / (support.len() as f64).sqrt());
                let mut x = vec![ZERO; 8];
                for &j in &support {
                    x[j] = amp;
                }
                for conv in [Convention::Negative, Convention::Positive] {
                    let y = fft_reference(&x, conv);
                    for (k, z) in y.iter().enumerate() {
                        let allowed = k % (8 / r) == 0;
                        if allowed {
                            assert!((z.norm() - 1.0 / (r as f64).sqrt()).abs() < 1e-12);
                        } else {
                            assert!(z.norm() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn circuit_text_round_trip() {
        let c = Circuit::from_gates(3, all_kinds()).unwrap();
        let back = Circuit::parse(&c.to_text()).unwrap();
        assert_eq!(c, back);
        let err = Circuit::parse("QUBITS 2\nCNOT 0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(Circuit::parse("H 0\n").is_err());
        assert!(Circuit::parse("QUBITS 2\nFOO 1\n").is_err());
    }

    #[test]
    fn permutation_fast_path_matches_dense() {
        let g = Gate::Permutation { spins: vec![2, 0], map: vec![1, 2, 3, 0] };
        let dense = linalg::embed(&g.local_matrix(), &[2, 0], 3);
        assert!(approx(&g.matrix(3).unwrap(), &dense, 1e-15));
    }

    proptest! {
        #[test]
        fn random_circuits_are_unitary(choices in prop::collection::vec((0usize..10, -180.0f64..180.0), 1..12)) {
            let kinds = all_kinds();
            let gates: Vec<Gate> = choices.iter().map(|(i, a)| match &kinds[*i] {
                Gate::Rotation { spin, axis, .. } => Gate::Rotation { spin: *spin, axis: *axis, angle_deg: *a },
                other => other.clone(),
            }).collect();
            let c = Circuit::from_gates(3, gates).unwrap();
            let u = c.unitary();
            prop_assert!(unitarity_error(&u) < 1e-10);
            let rho = DensityMatrix::thermal_deviation(3, &[1.0, 0.5, 0.25]).unwrap();
            let out = c.apply(&rho).unwrap();
            prop_assert!(out.trace().norm() < 1e-10);
            prop_assert!(linalg::hermiticity_error(out.matrix()) < 1e-10);
            let before = linalg::hermitian_eigenvalues(rho.matrix());
            let after = linalg::hermitian_eigenvalues(out.matrix());
            for (a, b) in before.iter().zip(&after) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
