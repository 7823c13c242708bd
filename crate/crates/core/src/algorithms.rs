//! Circuit-level algorithms: period finding and factoring, two-qubit Grover
//! search, Deutsch–Jozsa, and the classical post-processing.

use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gates::{Circuit, Convention, Gate, StateVector};
use crate::linalg::{dim, CMatrix, MAX_SPINS};

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn pow_mod(base: u64, mut exp: u64, modulus: u64) -> u64 {
    let mut result = 1 % modulus;
    let mut b = base % modulus;
    while exp > 0 {
        if exp & 1 == 1 {
            result = result * b % modulus;
        }
        b = b * b % modulus;
        exp >>= 1;
    }
    result
}

fn bits_for(m: u64) -> usize {
    (64 - (m - 1).leading_zeros()) as usize
}

/// A period-finding instance: register 1 holds `x` (`n1` qubits), register 2
/// receives `f(x)` (`n2` qubits).
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodFinding {
    pub n1: usize,
    pub n2: usize,
    /// `f(x)` for every `x < 2^n1`.
    pub table: Vec<usize>,
    /// `(M, a)` when `f(x) = aˣ mod M`.
    pub modexp: Option<(u64, u64)>,
}

impl PeriodFinding {
    pub fn from_table(table: Vec<usize>, n1: usize, n2: usize) -> Result<Self> {
        if n1 == 0 || n2 == 0 || n1 + n2 > MAX_SPINS {
            return Err(Error::InvalidArgument(format!("registers of {n1} and {n2} qubits exceed the simulator")));
        }
        if table.len() != dim(n1) {
            return Err(Error::DimensionMismatch { expected: dim(n1), found: table.len() });
        }
        if let Some(&v) = table.iter().find(|&&v| v >= dim(n2)) {
            return Err(Error::InvalidArgument(format!("f value {v} does not fit in {n2} qubits")));
        }
        Ok(Self { n1, n2, table, modexp: None })
    }

    /// `f(x) = aˣ mod M` with `n1 ≥ 2⌈log₂M⌉` and `n2 ≥ ⌈log₂M⌉`.
    pub fn modular_exponent(modulus: u64, base: u64, n1: usize, n2: usize) -> Result<Self> {
        if modulus < 3 {
            return Err(Error::InvalidArgument(format!("modulus {modulus} too small")));
        }
        if gcd(base, modulus) != 1 {
            return Err(Error::InvalidArgument(format!("base {base} shares a factor with {modulus}")));
        }
        let bits = bits_for(modulus);
        if n1 < 2 * bits || n2 < bits {
            return Err(Error::InvalidArgument(format!(
                "registers need at least {} and {bits} qubits for M = {modulus}",
                2 * bits
            )));
        }
        let table = (0..dim(n1) as u64).map(|x| pow_mod(base, x, modulus) as usize).collect();
        let mut p = Self::from_table(table, n1, n2)?;
        p.modexp = Some((modulus, base));
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.n1 + self.n2
    }

    pub fn register1(&self) -> Vec<usize> {
        (0..self.n1).collect()
    }

    pub fn register2(&self) -> Vec<usize> {
        (self.n1..self.n()).collect()
    }

    /// Whether `r` is a period of the table.
    pub fn is_period(&self, r: usize) -> bool {
        r > 0 && (0..self.table.len() - r.min(self.table.len())).all(|x| self.table[x] == self.table[x + r])
    }
}

/// `|x⟩|y⟩ ↦ |x⟩|y ⊕ f(x)⟩` as one permutation gate on both registers.
pub fn oracle_circuit(table: &[usize], n1: usize, n2: usize) -> Result<Circuit> {
    let p = PeriodFinding::from_table(table.to_vec(), n1, n2)?;
    let map = (0..dim(n1 + n2))
        .map(|idx| {
            let x = idx >> n2;
            let y = idx & (dim(n2) - 1);
            (x << n2) | (y ^ p.table[x])
        })
        .collect();
    Circuit::from_gates(p.n(), vec![Gate::Permutation { spins: (0..p.n()).collect(), map }])
}

/// Hadamards on register 1, oracle, QFT on register 1.
pub fn period_circuit(p: &PeriodFinding) -> Result<Circuit> {
    let mut c = Circuit::new(p.n())?;
    for s in p.register1() {
        c.push(Gate::Hadamard(s))?;
    }
    c.extend(&oracle_circuit(&p.table, p.n1, p.n2)?)?;
    c.push(Gate::Qft { spins: p.register1(), convention: Convention::Negative })?;
    Ok(c)
}

/// State after superposition and oracle (before the transform).
pub fn entangled_state(p: &PeriodFinding) -> Result<StateVector> {
    let mut psi = StateVector::basis(p.n(), 0)?;
    for s in p.register1() {
        psi.apply(&Gate::Hadamard(s))?;
    }
    for g in oracle_circuit(&p.table, p.n1, p.n2)?.gates() {
        psi.apply(g)?;
    }
    Ok(psi)
}

/// Register-1 outcome distribution. With `measure_register2` the second
/// register is measured before the transform and the branches are mixed.
pub fn period_distribution(p: &PeriodFinding, measure_register2: bool) -> Result<Vec<f64>> {
    let psi = entangled_state(p)?;
    let qft = Gate::Qft { spins: p.register1(), convention: Convention::Negative };
    if !measure_register2 {
        let mut out = psi;
        out.apply(&qft)?;
        return Ok(out.marginal(&p.register1()));
    }
    let reg2 = p.register2();
    let weights = psi.marginal(&reg2);
    let mut dist = vec![0.0; dim(p.n1)];
    for (y, &w) in weights.iter().enumerate().filter(|(_, &w)| w > 0.0) {
        let mut branch = psi.clone();
        branch.collapse(&reg2, y);
        branch.apply(&qft)?;
        for (acc, q) in dist.iter_mut().zip(branch.marginal(&p.register1())) {
            *acc += w * q;
        }
    }
    Ok(dist)
}

/// Denominator of the last continued-fraction convergent of `k/N` not
/// exceeding `max_denominator`; `None` for `k = 0`.
pub fn recover_period(k: u64, big_n: u64, max_denominator: u64) -> Option<u64> {
    if k == 0 || k >= big_n {
        return None;
    }
    let (mut num, mut den) = (k, big_n);
    let (mut q_prev, mut q) = (1u64, 0u64);
    let mut best = None;
    while den != 0 {
        let a = num / den;
        let q_next = a * q + q_prev;
        if q_next > max_denominator {
            break;
        }
        if q_next > 0 {
            best = Some(q_next);
        }
        (q_prev, q) = (q, q_next);
        (num, den) = (den, num - a * den);
    }
    best
}

/// `gcd(a^{r/2} ± 1, M)` when `r` is even and `a^{r/2} ≢ −1`.
pub fn extract_factors(modulus: u64, base: u64, r: u64) -> Option<(u64, u64)> {
    if r == 0 || r % 2 == 1 {
        return None;
    }
    let h = pow_mod(base, r / 2, modulus);
    if h == modulus - 1 {
        return None;
    }
    let f1 = gcd(h + modulus - 1, modulus);
    let f2 = gcd(h + 1, modulus);
    let nontrivial = |f: u64| f > 1 && f < modulus;
    match (nontrivial(f1), nontrivial(f2)) {
        (true, true) => Some((f1.min(f2), f1.max(f2))),
        (true, false) => Some((f1, modulus / f1)),
        (false, true) => Some((f2, modulus / f2)),
        (false, false) => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Ensemble,
    Sampled { shots: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodResult {
    pub distribution: Vec<f64>,
    /// Probability that one run's outcome yields a verified period.
    pub success_probability: f64,
    /// Drawn outcomes (sampled mode).
    pub samples: Vec<usize>,
    pub period: Option<u64>,
    pub factors: Option<(u64, u64)>,
}

impl PeriodResult {
    /// Histogram, period and factors as `key value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "success_probability {:.12}", self.success_probability);
        match self.period {
            Some(r) => {
                let _ = writeln!(out, "period {r}");
            }
            None => out.push_str("period none\n"),
        }
        match self.factors {
            Some((a, b)) => {
                let _ = writeln!(out, "factors {a} {b}");
            }
            None => out.push_str("factors none\n"),
        }
        if self.samples.is_empty() {
            for (k, p) in self.distribution.iter().enumerate().filter(|(_, &p)| p > 1e-12) {
                let _ = writeln!(out, "outcome {k} {p:.12}");
            }
        } else {
            let mut counts = std::collections::BTreeMap::new();
            for &k in &self.samples {
                *counts.entry(k).or_insert(0usize) += 1;
            }
            for (k, c) in counts {
                let _ = writeln!(out, "outcome {k} {c}");
            }
        }
        out
    }
}

fn period_from_outcome(p: &PeriodFinding, k: usize) -> Option<u64> {
    let max = p.modexp.map(|(m, _)| m).unwrap_or(dim(p.n1) as u64);
    recover_period(k as u64, dim(p.n1) as u64, max).filter(|&r| p.is_period(r as usize))
}

/// Runs the circuit. Ensemble mode reports the exact distribution and the
/// period found with the largest probability; sampled mode draws `shots`
/// outcomes from a seeded stream and keeps the first verified period.
pub fn period_find(p: &PeriodFinding, mode: RunMode) -> Result<PeriodResult> {
    let distribution = period_distribution(p, false)?;
    let mut mass: std::collections::BTreeMap<u64, f64> = std::collections::BTreeMap::new();
    for (k, &prob) in distribution.iter().enumerate() {
        if prob > 1e-15 {
            if let Some(r) = period_from_outcome(p, k) {
                *mass.entry(r).or_insert(0.0) += prob;
            }
        }
    }
    let success_probability = mass.values().sum();
    let (samples, period) = match mode {
        RunMode::Ensemble => {
            let best = mass.iter().fold(None, |best: Option<(u64, f64)>, (&r, &m)| match best {
                Some((_, bm)) if bm >= m => best,
                _ => Some((r, m)),
            });
            (Vec::new(), best.map(|(r, _)| r))
        }
        RunMode::Sampled { shots, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dist = WeightedIndex::new(&distribution).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let samples: Vec<usize> = (0..shots).map(|_| dist.sample(&mut rng)).collect();
            let period = samples.iter().find_map(|&k| period_from_outcome(p, k));
            (samples, period)
        }
    };
    let factors = match (p.modexp, period) {
        (Some((m, a)), Some(r)) => extract_factors(m, a, r),
        _ => None,
    };
    Ok(PeriodResult { distribution, success_probability, samples, period, factors })
}

/// Number of Schmidt coefficients above `tol` across the cut after the first
/// `cut` qubits.
pub fn schmidt_rank(psi: &StateVector, cut: usize, tol: f64) -> Result<usize> {
    let n = psi.n();
    if cut == 0 || cut >= n {
        return Err(Error::InvalidArgument(format!("cut {cut} must split {n} qubits")));
    }
    let rows = dim(cut);
    let cols = dim(n - cut);
    let m = CMatrix::from_fn(rows, cols, |r, c| psi.amplitudes()[r * cols + c]);
    Ok(m.singular_values().iter().filter(|&&s| s > tol).count())
}

fn flip_zeros(c: &mut Circuit, pattern: usize) -> Result<()> {
    for s in 0..2 {
        if pattern >> (1 - s) & 1 == 0 {
            c.push(Gate::not(s))?;
        }
    }
    Ok(())
}

/// One Grover iteration on two qubits; ends in `|marked⟩` exactly.
pub fn grover_2q(marked: usize) -> Result<Circuit> {
    if marked > 3 {
        return Err(Error::IndexOutOfRange { index: marked, len: 4 });
    }
    let cz = Gate::ControlledPhase { a: 0, b: 1, angle_deg: 180.0 };
    let mut c = Circuit::new(2)?;
    c.push(Gate::Hadamard(0))?;
    c.push(Gate::Hadamard(1))?;
    flip_zeros(&mut c, marked)?;
    c.push(cz.clone())?;
    flip_zeros(&mut c, marked)?;
    c.push(Gate::Hadamard(0))?;
    c.push(Gate::Hadamard(1))?;
    flip_zeros(&mut c, 0)?;
    c.push(cz)?;
    flip_zeros(&mut c, 0)?;
    c.push(Gate::Hadamard(0))?;
    c.push(Gate::Hadamard(1))?;
    Ok(c)
}

/// Deutsch–Jozsa circuit for a constant or balanced `f` on one or two bits,
/// acting on `|0…0⟩` with the ancilla last.
pub fn deutsch_jozsa(table: &[u8]) -> Result<Circuit> {
    let k = match table.len() {
        2 => 1,
        4 => 2,
        other => return Err(Error::InvalidArgument(format!("truth table of length {other}; expected 2 or 4"))),
    };
    if table.iter().any(|&v| v > 1) {
        return Err(Error::InvalidArgument("truth table values must be 0 or 1".into()));
    }
    let ones = table.iter().filter(|&&v| v == 1).count();
    if ones != 0 && ones != table.len() && 2 * ones != table.len() {
        return Err(Error::InvalidArgument("function is neither constant nor balanced".into()));
    }
    let f: Vec<usize> = table.iter().map(|&v| v as usize).collect();
    let mut c = Circuit::new(k + 1)?;
    c.push(Gate::not(k))?;
    for s in 0..=k {
        c.push(Gate::Hadamard(s))?;
    }
    c.extend(&oracle_circuit(&f, k, 1)?)?;
    for s in 0..k {
        c.push(Gate::Hadamard(s))?;
    }
    Ok(c)
}

/// True when the query register of the Deutsch–Jozsa circuit ends in zeros.
pub fn deutsch_jozsa_constant(table: &[u8]) -> Result<bool> {
    let c = deutsch_jozsa(table)?;
    let mut psi = StateVector::basis(c.n(), 0)?;
    c.apply_vec(&mut psi)?;
    let query: Vec<usize> = (0..c.n() - 1).collect();
    Ok(psi.marginal(&query)[0] > 0.5)
}
