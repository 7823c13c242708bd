use crate::error::{Error, Result};
use crate::evolution::{logical_propagator, SimOptions};
use crate::gates::{qft_circuit, Circuit, Gate};
use crate::linalg::phase_aligned_distance;
use crate::spin_system::SpinSystem;

use super::{refocus, route_circuit, PulseEvent, PulseSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompileOptions {
    /// Insert Walsh echo patterns on spectators during J delays.
    pub refocus: bool,
    /// Route two-spin gates on uncoupled pairs through SWAP chains.
    pub route: bool,
}

impl Default for CompileOptions {
    fn default() -> Self {
        Self { refocus: true, route: true }
    }
}

struct Builder<'a> {
    sys: &'a SpinSystem,
    seq: PulseSequence,
    options: CompileOptions,
}

impl<'a> Builder<'a> {
    fn new(sys: &'a SpinSystem, options: CompileOptions) -> Self {
        Self { sys, seq: PulseSequence::new(sys), options }
    }

    fn frame(&mut self, spin: usize, phase_deg: f64) -> Result<()> {
        if phase_deg.rem_euclid(360.0) == 0.0 {
            return Ok(());
        }
        self.seq.push(PulseEvent::frame_shift(spin, phase_deg))
    }

    /// Rotation about a transverse axis; negative angles flip the phase.
    fn pulse(&mut self, spin: usize, angle_deg: f64, phase_deg: f64) -> Result<()> {
        if angle_deg == 0.0 {
            return Ok(());
        }
        let (angle, phase) = if angle_deg < 0.0 { (-angle_deg, phase_deg + 180.0) } else { (angle_deg, phase_deg) };
        self.seq.push(PulseEvent::hard(vec![spin], angle, phase.rem_euclid(360.0)))
    }

    fn j_delay(&mut self, duration_s: f64, pair: (usize, usize)) -> Result<()> {
        if duration_s == 0.0 {
            return Ok(());
        }
        let events = if self.options.refocus {
            refocus(duration_s, pair, self.sys)?
        } else {
            vec![PulseEvent::delay(duration_s)]
        };
        for e in events {
            self.seq.push(e)?;
        }
        Ok(())
    }

    fn coupling(&self, a: usize, b: usize) -> Result<f64> {
        let j = self.sys.coupling_hz(a, b);
        if j == 0.0 {
            return Err(Error::MissingCoupling(a, b));
        }
        Ok(j)
    }

    fn cnot(&mut self, control: usize, target: usize, with_frames: bool) -> Result<()> {
        let j = self.coupling(control, target)?;
        // J > 0: 90z(c) 90−z(t) 90x(t) 1/2J 90−y(t); J < 0 is the complex
        // conjugate sequence.
        let (fc, ft, first) = if j > 0.0 { (90.0, -90.0, 0.0) } else { (270.0, 90.0, 180.0) };
        if with_frames {
            self.frame(control, fc)?;
            self.frame(target, ft)?;
        }
        self.pulse(target, 90.0, first)?;
        self.j_delay(1.0 / (2.0 * j.abs()), (control, target))?;
        self.pulse(target, 90.0, 270.0)
    }

    fn gate(&mut self, g: &Gate) -> Result<()> {
        match g {
            Gate::Rotation { spin, axis, angle_deg } => match axis.azimuth_deg() {
                Some(phase) => self.pulse(*spin, *angle_deg, phase),
                None => self.frame(*spin, *angle_deg),
            },
            Gate::Hadamard(s) => {
                self.pulse(*s, 90.0, 90.0)?;
                self.pulse(*s, 180.0, 0.0)
            }
            Gate::Cnot { control, target } => self.cnot(*control, *target, true),
            Gate::Inept { control, target } => {
                // U_INEPT = U_CNOT · Rz_c(−90) · Rz_t(+90)
                self.coupling(*control, *target)?;
                if self.sys.coupling_hz(*control, *target) > 0.0 {
                    self.cnot(*control, *target, false)
                } else {
                    self.frame(*control, 180.0)?;
                    self.frame(*target, 180.0)?;
                    self.cnot(*control, *target, false)
                }
            }
            Gate::ControlledPhase { a, b, angle_deg } => {
                // diag(1,1,1,e^{iθ}) ∝ Rz_a(θ/2)·Rz_b(θ/2)·exp(iθ·Iz_a·Iz_b)
                let j = self.coupling(*a, *b)?;
                let theta = angle_deg.to_radians();
                let period = 2.0 / j.abs();
                let t = (-theta / (2.0 * std::f64::consts::PI * j)).rem_euclid(period);
                self.frame(*a, angle_deg / 2.0)?;
                self.frame(*b, angle_deg / 2.0)?;
                self.j_delay(t, (*a, *b))
            }
            Gate::Permutation { spins, map } if spins.len() == 1 && map[0] == 1 => self.pulse(spins[0], 180.0, 0.0),
            Gate::Permutation { spins, map } => {
                let sub = affine_permutation_circuit(self.sys.n(), spins, map)?;
                self.circuit(&sub)
            }
            Gate::Qft { spins, convention } => {
                let sub = qft_circuit(self.sys.n(), spins, *convention)?;
                self.circuit(&sub)
            }
        }
    }

    fn circuit(&mut self, c: &Circuit) -> Result<()> {
        let routed;
        let c = if self.options.route && c.gates().iter().any(|g| needs_routing(g, self.sys)) {
            routed = route_circuit(c, self.sys)?;
            &routed
        } else {
            c
        };
        for g in c.gates() {
            self.gate(g)?;
        }
        Ok(())
    }
}

fn needs_routing(g: &Gate, sys: &SpinSystem) -> bool {
    match *g {
        Gate::Cnot { control: a, target: b }
        | Gate::Inept { control: a, target: b }
        | Gate::ControlledPhase { a, b, .. } => sys.coupling_hz(a, b) == 0.0,
        _ => false,
    }
}

/// Pulse sequence for one gate. Two-spin gates need a direct coupling.
pub fn compile_gate(g: &Gate, sys: &SpinSystem) -> Result<PulseSequence> {
    g.validate(sys.n())?;
    let mut b = Builder::new(sys, CompileOptions::default());
    b.gate(g)?;
    Ok(b.seq)
}

/// Lowers a circuit to pulses; the frame report of the returned sequence is
/// part of the result.
pub fn compile_circuit(c: &Circuit, sys: &SpinSystem, options: CompileOptions) -> Result<PulseSequence> {
    if c.n() != sys.n() {
        return Err(Error::WrongSpinCount { expected: sys.n(), found: c.n() });
    }
    let mut b = Builder::new(sys, options);
    b.circuit(c)?;
    Ok(b.seq)
}

/// Phase-aligned Frobenius distance between the ideal-pulse logical propagator
/// of `seq` and the circuit unitary.
pub fn verify_sequence(seq: &PulseSequence, c: &Circuit, sys: &SpinSystem) -> Result<f64> {
    let u = logical_propagator(seq, sys, &SimOptions::ideal())?;
    Ok(phase_aligned_distance(&u, &c.unitary()))
}

/// `Some((A, b))` with `map(x) = A·x ⊕ b` over GF(2) (bit `q` of the local
/// index is spin `q`, most significant first), or `None`.
pub fn is_affine(map: &[usize], k: usize) -> Option<(Vec<Vec<u8>>, Vec<u8>)> {
    let bit = |x: usize, q: usize| ((x >> (k - 1 - q)) & 1) as u8;
    let offset = map[0];
    let columns: Vec<usize> = (0..k).map(|r| map[1 << (k - 1 - r)] ^ offset).collect();
    for (x, &y) in map.iter().enumerate() {
        let predicted = (0..k).filter(|&r| bit(x, r) == 1).fold(offset, |acc, r| acc ^ columns[r]);
        if predicted != y {
            return None;
        }
    }
    let a = (0..k).map(|q| (0..k).map(|r| bit(columns[r], q)).collect()).collect();
    let b = (0..k).map(|q| bit(offset, q)).collect();
    Some((a, b))
}

/// CNOT/NOT circuit for an affine permutation of `spins`; `Unsupported` otherwise.
pub fn affine_permutation_circuit(n: usize, spins: &[usize], map: &[usize]) -> Result<Circuit> {
    let k = spins.len();
    let (mut a, b) =
        is_affine(map, k).ok_or_else(|| Error::Unsupported(format!("permutation {map:?} is not affine over GF(2)")))?;
    // Row-reduce A to I; each row operation (row t ^= row c) is a CNOT c→t.
    let mut ops: Vec<(usize, usize)> = Vec::new();
    for col in 0..k {
        let pivot = (col..k).find(|&r| a[r][col] == 1).expect("affine bijections have invertible A");
        if pivot != col {
            for j in 0..k {
                a[col][j] ^= a[pivot][j];
            }
            ops.push((pivot, col));
        }
        for r in 0..k {
            if r != col && a[r][col] == 1 {
                for j in 0..k {
                    a[r][j] ^= a[col][j];
                }
                ops.push((col, r));
            }
        }
    }
    // E_m…E_1·A = I, so A = E_1…E_m: apply E_m first.
    let mut circuit = Circuit::new(n)?;
    for &(c, t) in ops.iter().rev() {
        circuit.push(Gate::cnot(spins[c], spins[t]))?;
    }
    for (q, &bit) in b.iter().enumerate() {
        if bit == 1 {
            circuit.push(Gate::not(spins[q]))?;
        }
    }
    Ok(circuit)
}
