//! Effective pure states from thermal deviations: temporal averaging,
//! spatial averaging and logical labeling, plus their costs.

use crate::error::{Error, Result};
use crate::evolution::{simulate, SimOptions};
use crate::gates::{Circuit, Gate};
use crate::linalg::{c, dim, frobenius, CMatrix};
use crate::pulse::{affine_permutation_circuit, PulseEvent, PulseSequence};
use crate::spin_system::SpinSystem;
use crate::state::{DensityMatrix, Representation};

/// Primitive polynomials over GF(2), indexed by degree, as bit masks.
const PRIMITIVE: [u32; 13] = [
    0,
    0b11,
    0b111,
    0b1011,
    0b10011,
    0b100101,
    0b1000011,
    0b10000011,
    0b100011101,
    0b1000010001,
    0b10000001001,
    0b100000000101,
    0b1000001010011,
];

fn mul_alpha(x: usize, n: usize) -> usize {
    let y = x << 1;
    if y >> n & 1 == 1 {
        y ^ PRIMITIVE[n] as usize
    } else {
        y
    }
}

fn weights_equal(w: &[f64]) -> bool {
    let scale = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    w.iter().all(|x| (x - w[0]).abs() <= 1e-12 * scale)
}

fn permuted_diagonal(diag: &[f64], map: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; diag.len()];
    for (x, &y) in map.iter().enumerate() {
        out[y] = diag[x];
    }
    out
}

fn diagonal_state(diag: &[f64]) -> DensityMatrix {
    let m = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(diag.len(), diag.iter().map(|&v| c(v))));
    DensityMatrix::new(m, Representation::Deviation).expect("real diagonal is Hermitian")
}

/// Position of the single outlier if every other entry agrees to `tol` and the
/// outlier lies above them.
fn one_outlier(diag: &[f64], tol: f64) -> Option<usize> {
    let (top, _) = diag.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    let rest: Vec<f64> = diag.iter().enumerate().filter(|&(i, _)| i != top).map(|(_, &v)| v).collect();
    let base = *rest.first()?;
    let spread = diag[top] - base;
    (spread > tol && rest.iter().all(|v| (v - base).abs() <= tol)).then_some(top)
}

/// All affine bijections of `n` bits (small `n` only).
fn affine_maps(n: usize) -> Vec<Vec<usize>> {
    let d = dim(n);
    let mut linear: Vec<Vec<usize>> = Vec::new();
    let mut cols = Vec::with_capacity(n);
    fn extend(n: usize, d: usize, cols: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cols.len() == n {
            let map: Vec<usize> =
                (0..d).map(|x| (0..n).filter(|&r| x >> (n - 1 - r) & 1 == 1).fold(0, |acc, r| acc ^ cols[r])).collect();
            let mut seen = vec![false; d];
            if map.iter().all(|&y| !std::mem::replace(&mut seen[y], true)) {
                out.push(map);
            }
            return;
        }
        for v in 1..d {
            cols.push(v);
            extend(n, d, cols, out);
            cols.pop();
        }
    }
    extend(n, d, &mut cols, &mut linear);
    linear.iter().flat_map(|m| (0..d).map(move |b| m.iter().map(|y| y ^ b).collect())).collect()
}

/// Smallest set (first member the identity) of affine relabelings whose summed
/// diagonals have the one-outlier signature, trying counts from `min` to `max`.
fn search_affine(n: usize, diag: &[f64], min: usize, max: usize) -> Option<(Vec<Vec<usize>>, usize)> {
    let tol = 1e-9 * diag.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut shapes: Vec<(Vec<f64>, Vec<usize>)> = Vec::new();
    for map in affine_maps(n) {
        let out = permuted_diagonal(diag, &map);
        if !shapes.iter().any(|(s, _)| s.iter().zip(&out).all(|(a, b)| (a - b).abs() <= tol)) {
            shapes.push((out, map));
        }
    }
    fn go(
        shapes: &[(Vec<f64>, Vec<usize>)],
        start: usize,
        left: usize,
        sum: &mut Vec<f64>,
        chosen: &mut Vec<usize>,
        tol: f64,
    ) -> Option<usize> {
        if left == 0 {
            return one_outlier(sum, tol);
        }
        for i in start..shapes.len() {
            for (s, v) in sum.iter_mut().zip(&shapes[i].0) {
                *s += v;
            }
            chosen.push(i);
            if let Some(top) = go(shapes, i, left - 1, sum, chosen, tol) {
                return Some(top);
            }
            chosen.pop();
            for (s, v) in sum.iter_mut().zip(&shapes[i].0) {
                *s -= v;
            }
        }
        None
    }
    for k in min.max(1)..=max {
        let mut sum = diag.to_vec();
        let mut chosen = Vec::new();
        if let Some(top) = go(&shapes, 0, k - 1, &mut sum, &mut chosen, tol) {
            let identity: Vec<usize> = (0..dim(n)).collect();
            let mut maps = vec![identity];
            maps.extend(chosen.iter().map(|&i| shapes[i].1.clone()));
            return Some((maps, top));
        }
    }
    None
}

/// Result of a temporal-averaging plan.
#[derive(Debug, Clone)]
pub struct TemporalAverage {
    /// One relabeling circuit per experiment (CNOT and NOT gates only).
    pub circuits: Vec<Circuit>,
    /// The basis permutation each circuit performs.
    pub maps: Vec<Vec<usize>>,
    /// Sum of the experiments' output deviations.
    pub combined: DensityMatrix,
    /// `combined ≈ scale · effective_pure_target(n, s)`.
    pub scale: f64,
    /// Frobenius distance between `combined / scale` and the target.
    pub residual: f64,
}

impl TemporalAverage {
    pub fn experiments(&self) -> usize {
        self.circuits.len()
    }
}

/// Permutation experiments whose summed outputs form an effective pure state
/// on basis state `s`.
///
/// With equal weights and up to three spins the smallest affine set is found
/// by search; otherwise the `2ⁿ−1` powers of a Singer cycle are used, which
/// rotate every non-target population through every non-target position and
/// so give an exact result for any weights.
pub fn temporal_average(sys: &SpinSystem, s: usize) -> Result<TemporalAverage> {
    let n = sys.n();
    let d = dim(n);
    if s >= d {
        return Err(Error::IndexOutOfRange { index: s, len: d });
    }
    let diag = DensityMatrix::thermal_deviation(n, sys.weights())?.populations();
    let (top, _) = diag.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty");
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if diag[top] - min <= 0.0 {
        return Err(Error::InvalidArgument("thermal deviation is zero".into()));
    }
    let lower = (d - 1).div_ceil(n);
    let found = if n <= 3 && weights_equal(sys.weights()) { search_affine(n, &diag, lower, 3) } else { None };
    let maps: Vec<Vec<usize>> = match found {
        Some((maps, outlier)) => {
            let shift = outlier ^ s;
            maps.into_iter().map(|m| m.into_iter().map(|y| y ^ shift).collect()).collect()
        }
        None => {
            let mut power: Vec<usize> = (0..d).collect();
            let mut maps = Vec::with_capacity(d - 1);
            for _ in 0..d - 1 {
                maps.push((0..d).map(|x| power[x ^ top] ^ s).collect());
                power = power.iter().map(|&y| mul_alpha(y, n)).collect();
            }
            maps
        }
    };
    let spins: Vec<usize> = (0..n).collect();
    let circuits = maps.iter().map(|m| affine_permutation_circuit(n, &spins, m)).collect::<Result<Vec<_>>>()?;
    let mut sum = vec![0.0; d];
    for m in &maps {
        for (acc, v) in sum.iter_mut().zip(permuted_diagonal(&diag, m)) {
            *acc += v;
        }
    }
    let other = if s == 0 { sum[1] } else { sum[0] };
    let scale = sum[s] - other;
    let combined = diagonal_state(&sum);
    let target = DensityMatrix::effective_pure_target(n, s)?;
    let residual = frobenius(&(combined.matrix() / c(scale) - target.matrix()));
    Ok(TemporalAverage { circuits, maps, combined, scale, residual })
}

#[derive(Debug, Clone)]
pub struct SpatialAverage {
    pub sequence: PulseSequence,
    /// Simulated output from the thermal deviation (ideal pulses).
    pub state: DensityMatrix,
    pub scale: f64,
    pub residual: f64,
}

/// Least-squares `a` in `state ≈ a·target` and the remaining distance.
fn fit_scale(state: &CMatrix, target: &CMatrix) -> (f64, f64) {
    let a = target.iter().zip(state.iter()).map(|(t, s)| (t.conj() * s).re).sum::<f64>() / frobenius(target).powi(2);
    (a, frobenius(&(state / c(a) - target)))
}

/// Gradient-based preparation of `|00⟩` on two coupled spins (spin 0 is I,
/// spin 1 is S): a pulse of `arccos(w_I/2w_S)` on S and a crusher leave
/// `Iz + ½Sz`; a 45° pulse, a `1/2J` delay and a second 45° pulse on I turn
/// `Iz` into `½Iz + IzSz` after a final crusher.
pub fn spatial_average_sequence(sys: &SpinSystem) -> Result<PulseSequence> {
    if sys.n() != 2 {
        return Err(Error::WrongSpinCount { expected: 2, found: sys.n() });
    }
    let j = sys.coupling_hz(0, 1);
    if j == 0.0 {
        return Err(Error::ZeroCoupling(0, 1));
    }
    let (wi, ws) = (sys.weights()[0], sys.weights()[1]);
    let ratio = wi / (2.0 * ws);
    if !(ratio.abs() <= 1.0) || wi == 0.0 {
        return Err(Error::InvalidArgument(format!("weights {wi} and {ws} cannot be balanced by a single pulse on S")));
    }
    let back = if j > 0.0 { 270.0 } else { 90.0 };
    let mut seq = PulseSequence::new(sys);
    for e in [
        PulseEvent::hard(vec![1], ratio.acos().to_degrees(), 0.0),
        PulseEvent::Crusher,
        PulseEvent::hard(vec![0], 45.0, 0.0),
        PulseEvent::delay(1.0 / (2.0 * j.abs())),
        PulseEvent::hard(vec![0], 45.0, back),
        PulseEvent::Crusher,
    ] {
        seq.push(e)?;
    }
    Ok(seq)
}

pub fn spatial_average(sys: &SpinSystem) -> Result<SpatialAverage> {
    let sequence = spatial_average_sequence(sys)?;
    let out = simulate(&sequence, &DensityMatrix::thermal(sys), sys, &SimOptions::ideal())?;
    let state = out.logical_state();
    let target = DensityMatrix::effective_pure_target(2, 0)?;
    let (scale, residual) = fit_scale(state.matrix(), target.matrix());
    Ok(SpatialAverage { sequence, state, scale, residual })
}

/// The sub-register that is effectively pure once `condition_spin` is found
/// in `|condition_value⟩`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSubsystem {
    pub condition_spin: usize,
    pub condition_value: usize,
    pub pure_spins: Vec<usize>,
}

impl LabeledSubsystem {
    /// Traceless block of `rho` on `pure_spins` with the condition satisfied.
    pub fn conditional_block(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        let n = rho.n();
        let k = self.pure_spins.len();
        let idx = |local: usize| {
            let mut full = self.condition_value << crate::linalg::bit_position(n, self.condition_spin);
            for (q, &s) in self.pure_spins.iter().enumerate() {
                full |= (local >> (k - 1 - q) & 1) << crate::linalg::bit_position(n, s);
            }
            full
        };
        let d = dim(k);
        let block = CMatrix::from_fn(d, d, |r, col| rho.matrix()[(idx(r), idx(col))]);
        let mean = crate::linalg::trace(&block) / c(d as f64);
        DensityMatrix::new(block - CMatrix::identity(d, d) * mean, Representation::Deviation)
    }
}

/// Population rearrangement for three equally weighted spins: spin 0 takes
/// the parity of spins 1 and 2, after which spins 1, 2 are effectively pure
/// whenever spin 0 is `|0⟩`.
pub fn logical_label(sys: &SpinSystem) -> Result<(Circuit, LabeledSubsystem)> {
    if sys.n() != 3 {
        return Err(Error::WrongSpinCount { expected: 3, found: sys.n() });
    }
    if !weights_equal(sys.weights()) {
        return Err(Error::UnequalWeights(sys.weights().to_vec()));
    }
    let circuit = Circuit::from_gates(3, vec![Gate::cnot(2, 0), Gate::cnot(1, 0)])?;
    Ok((circuit, LabeledSubsystem { condition_spin: 0, condition_value: 0, pure_spins: vec![1, 2] }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Temporal,
    Spatial,
    LogicalLabeling,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "temporal" => Ok(Scheme::Temporal),
            "spatial" => Ok(Scheme::Spatial),
            "logical" | "labeling" | "logical-labeling" => Ok(Scheme::LogicalLabeling),
            other => Err(Error::InvalidArgument(format!("unknown preparation scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrepCost {
    /// Effective-pure signal relative to the thermal signal.
    pub signal_scale: f64,
    /// Experiments used by this crate's construction.
    pub experiments: usize,
    /// `⌈(2ⁿ−1)/n⌉`, the fewest experiments any relabeling scheme can use.
    pub lower_bound: usize,
}

pub fn prep_cost(scheme: Scheme, n: usize) -> Result<PrepCost> {
    if n == 0 || n > 63 {
        return Err(Error::InvalidArgument(format!("spin count {n} out of range")));
    }
    let signal_scale = n as f64 / 2f64.powi(n as i32);
    let lower_bound = ((1u64 << n) - 1).div_ceil(n as u64) as usize;
    let experiments = match (scheme, n) {
        (Scheme::Temporal, 1) => 1,
        // the affine search finds three experiments for two and three spins
        (Scheme::Temporal, 2 | 3) => 3,
        (Scheme::Temporal, _) => (1usize << n) - 1,
        (Scheme::Spatial | Scheme::LogicalLabeling, _) => 1,
    };
    Ok(PrepCost { signal_scale, experiments, lower_bound })
}

/// Spins needed to distil `k` nearly pure bits from polarization `alpha`:
/// `⌈k/α²⌉`.
pub fn sv_spins_needed(k: u64, alpha: f64) -> Result<u64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("polarization {alpha} must lie in (0, 1]")));
    }
    let x = k as f64 / (alpha * alpha);
    let nearest = x.round();
    Ok(if (x - nearest).abs() <= 1e-9 * x.max(1.0) { nearest as u64 } else { x.ceil() as u64 })
}
