//! Time evolution of density matrices under pulse sequences.
//!
//! Rotation convention: a hard pulse of angle θ and phase φ is
//! `exp(−iθ(Ix cos φ + Iy sin φ))`, so 90° about x takes +z to −y.
//! The simulated state is the physical one (in the per-spin carrier frames);
//! [`SimResult::logical_state`] applies the frame report.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{self, bit_of, c, dim, CMatrix, C64};
use crate::pulse::{advance_frames, PulseEvent, PulseSequence};
use crate::spin_system::{HamiltonianModel, SpinSystem};
use crate::state::{DensityMatrix, Representation};

/// Error-rate threshold for fault-tolerant operation.
pub const ERROR_THRESHOLD: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PulseModel {
    /// Soft pulses replaced by an ideal rotation of the channel spin nearest
    /// the carrier, centred in the pulse interval.
    Ideal,
    /// Soft pulses integrated with piecewise-constant propagators.
    #[default]
    Physical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub relaxation: bool,
    pub pulse_model: PulseModel,
    /// Keep a copy of the state after every event.
    pub trajectory: bool,
    /// Largest integration step for soft pulses (s).
    pub step_cap_s: f64,
    pub hamiltonian: HamiltonianModel,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            relaxation: false,
            pulse_model: PulseModel::Physical,
            trajectory: false,
            step_cap_s: 1e-6,
            hamiltonian: HamiltonianModel::Weak,
        }
    }
}

impl SimOptions {
    pub fn ideal() -> Self {
        Self { pulse_model: PulseModel::Ideal, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// Final state in the physical (carrier) frames.
    pub state: DensityMatrix,
    /// Final software frame phase per spin (degrees).
    pub frames_deg: Vec<f64>,
    /// States after each event, when requested.
    pub trajectory: Vec<DensityMatrix>,
}

impl SimResult {
    /// `Rz(F)·ρ·Rz(F)†`, the state as seen by the circuit.
    pub fn logical_state(&self) -> DensityMatrix {
        let phases = frame_phases(&self.frames_deg);
        let mut out = self.state.clone();
        linalg::conjugate_diagonal(out.matrix_mut(), &phases);
        out
    }
}

/// Diagonal of `Rz(F) = ⊗_s exp(−i F_s Iz_s)`.
pub fn frame_phases(frames_deg: &[f64]) -> Vec<C64> {
    let n = frames_deg.len();
    (0..dim(n))
        .map(|idx| {
            let angle: f64 = (0..n)
                .map(|s| {
                    let m = if bit_of(idx, s, n) == 0 { 0.5 } else { -0.5 };
                    -frames_deg[s].to_radians() * m
                })
                .sum();
            C64::from_polar(1.0, angle)
        })
        .collect()
}

/// Full-space matrix of `Rz(F)`.
pub fn frame_rotation(frames_deg: &[f64]) -> CMatrix {
    CMatrix::from_diagonal(&nalgebra::DVector::from_vec(frame_phases(frames_deg)))
}

/// What an event does to the state.
#[derive(Debug, Clone, PartialEq)]
pub enum EventAction {
    Unitary(CMatrix),
    /// Zero every coherence of nonzero order.
    Crusher,
}

/// Largest soft-pulse step that resolves both the drive phase and the nutation.
pub fn required_step_cap(carrier_hz: f64, amplitude_hz: f64) -> f64 {
    let rate = carrier_hz.abs().max(amplitude_hz.abs());
    if rate == 0.0 {
        f64::INFINITY
    } else {
        1.0 / (20.0 * rate)
    }
}

/// Channel spin whose offset is nearest the carrier (lowest index on ties).
pub fn reference_spin(sys: &SpinSystem, channel: usize, carrier_hz: f64) -> Result<usize> {
    (0..sys.n())
        .filter(|&s| sys.channel_of(s) == channel)
        .min_by(|&a, &b| {
            let da = (sys.offset_hz(a) - carrier_hz).abs();
            let db = (sys.offset_hz(b) - carrier_hz).abs();
            da.total_cmp(&db).then(a.cmp(&b))
        })
        .ok_or_else(|| Error::InvalidArgument(format!("no spin on channel {channel}")))
}

fn hard_pulse_matrix(n: usize, spins: &[usize], angle_deg: f64, phase_deg: f64, frames_deg: &[f64]) -> CMatrix {
    let mut u = CMatrix::identity(dim(n), dim(n));
    for &s in spins {
        let r = linalg::rotation(angle_deg.to_radians(), (phase_deg - frames_deg[s]).to_radians());
        linalg::apply_local_left(&mut u, n, &[s], &r);
    }
    u
}

fn delay_matrix(sys: &SpinSystem, t: f64, model: HamiltonianModel) -> CMatrix {
    match model {
        HamiltonianModel::Weak => {
            let phases: Vec<C64> = sys.zeeman_energies().iter().map(|e| C64::from_polar(1.0, -e * t)).collect();
            CMatrix::from_diagonal(&nalgebra::DVector::from_vec(phases))
        }
        HamiltonianModel::Strong => linalg::propagator(&sys.internal_hamiltonian(model), t),
    }
}

struct SoftPulse {
    channel: usize,
    carrier_hz: f64,
    amplitude_hz: f64,
    duration_s: f64,
    phase_deg: f64,
}

fn soft_physical_matrix(sys: &SpinSystem, p: &SoftPulse, frames_deg: &[f64], options: &SimOptions) -> Result<CMatrix> {
    let n = sys.n();
    let required = required_step_cap(p.carrier_hz, p.amplitude_hz);
    if !(options.step_cap_s > 0.0) {
        return Err(Error::InvalidArgument("step cap must be positive".into()));
    }
    if options.step_cap_s > required {
        return Err(Error::StepCapTooCoarse { required, given: options.step_cap_s });
    }
    let reference = reference_spin(sys, p.channel, p.carrier_hz)?;
    let h_int = sys.internal_hamiltonian(options.hamiltonian);
    let driven: Vec<usize> = (0..n).filter(|&s| sys.channel_of(s) == p.channel).collect();
    let ix: CMatrix =
        driven.iter().fold(CMatrix::zeros(dim(n), dim(n)), |acc, &s| acc + linalg::spin_axis(n, s, linalg::Axis::X));
    let iy: CMatrix =
        driven.iter().fold(CMatrix::zeros(dim(n), dim(n)), |acc, &s| acc + linalg::spin_axis(n, s, linalg::Axis::Y));
    let w1 = 2.0 * PI * p.amplitude_hz;
    let phase0 = (p.phase_deg - frames_deg[reference]).to_radians();
    let step_h = |tau: f64| {
        let phi = phase0 - 2.0 * PI * p.carrier_hz * tau;
        &h_int + &ix * c(w1 * phi.cos()) + &iy * c(w1 * phi.sin())
    };
    if p.duration_s == 0.0 {
        return Ok(CMatrix::identity(dim(n), dim(n)));
    }
    if p.carrier_hz == 0.0 {
        // time-independent drive
        return Ok(linalg::propagator(&step_h(0.0), p.duration_s));
    }
    let steps = (p.duration_s / options.step_cap_s).ceil().max(1.0) as usize;
    let dt = p.duration_s / steps as f64;
    let mut u = CMatrix::identity(dim(n), dim(n));
    for k in 0..steps {
        let mid = (k as f64 + 0.5) * dt;
        u = linalg::propagator(&step_h(mid), dt) * u;
    }
    Ok(u)
}

/// Ideal model of a soft pulse as three events: half delay, rotation of the
/// reference spin, half delay.
fn ideal_soft_events(sys: &SpinSystem, p: &SoftPulse) -> Result<[PulseEvent; 3]> {
    let reference = reference_spin(sys, p.channel, p.carrier_hz)?;
    Ok([
        PulseEvent::delay(p.duration_s / 2.0),
        PulseEvent::hard(vec![reference], 360.0 * p.amplitude_hz * p.duration_s, p.phase_deg),
        PulseEvent::delay(p.duration_s / 2.0),
    ])
}

fn soft_params(event: &PulseEvent) -> Option<SoftPulse> {
    match *event {
        PulseEvent::Soft { channel, carrier_hz, amplitude_hz, duration_s, phase_deg } => {
            Some(SoftPulse { channel, carrier_hz, amplitude_hz, duration_s, phase_deg })
        }
        _ => None,
    }
}

/// Propagator of a single event given the frame phases at its start.
pub fn event_propagator(
    event: &PulseEvent,
    sys: &SpinSystem,
    frames_deg: &[f64],
    options: &SimOptions,
) -> Result<EventAction> {
    let n = sys.n();
    Ok(match event {
        PulseEvent::Hard { spins, angle_deg, phase_deg } => {
            EventAction::Unitary(hard_pulse_matrix(n, spins, *angle_deg, *phase_deg, frames_deg))
        }
        PulseEvent::Delay { duration_s } => EventAction::Unitary(delay_matrix(sys, *duration_s, options.hamiltonian)),
        PulseEvent::Soft { .. } => {
            let p = soft_params(event).expect("matched soft");
            match options.pulse_model {
                PulseModel::Physical => EventAction::Unitary(soft_physical_matrix(sys, &p, frames_deg, options)?),
                PulseModel::Ideal => {
                    let mut frames = frames_deg.to_vec();
                    let mut u = CMatrix::identity(dim(n), dim(n));
                    for e in ideal_soft_events(sys, &p)? {
                        if let EventAction::Unitary(step) = event_propagator(&e, sys, &frames, options)? {
                            u = step * u;
                        }
                        advance_frames(&mut frames, sys.offsets_hz(), &e);
                    }
                    EventAction::Unitary(u)
                }
            }
        }
        PulseEvent::Crusher => EventAction::Crusher,
        PulseEvent::FrameShift { .. } => EventAction::Unitary(CMatrix::identity(dim(n), dim(n))),
    })
}

fn check_inputs(seq: &PulseSequence, sys: &SpinSystem) -> Result<()> {
    if !seq.matches(sys) {
        return Err(Error::InvalidArgument("pulse sequence was built for a different spin system".into()));
    }
    Ok(())
}

fn first_missing_relaxation(sys: &SpinSystem) -> Option<usize> {
    (0..sys.n()).find(|&s| sys.t1(s).is_none() || sys.t2(s).is_none())
}

/// Applies `seq` to `rho0`; relaxation (if enabled) follows every timed event.
pub fn simulate(
    seq: &PulseSequence,
    rho0: &DensityMatrix,
    sys: &SpinSystem,
    options: &SimOptions,
) -> Result<SimResult> {
    check_inputs(seq, sys)?;
    if rho0.n() != sys.n() {
        return Err(Error::WrongSpinCount { expected: sys.n(), found: rho0.n() });
    }
    if options.relaxation {
        if let Some(s) = first_missing_relaxation(sys) {
            return Err(Error::MissingRelaxation(s));
        }
    }
    let n = sys.n();
    let energies = sys.zeeman_energies();
    let mut rho = rho0.clone();
    let mut frames = vec![0.0; n];
    let mut trajectory = Vec::new();
    for event in seq.events() {
        apply_event(&mut rho, event, sys, &mut frames, options, &energies)?;
        if options.trajectory {
            trajectory.push(rho.clone());
        }
    }
    Ok(SimResult { state: rho, frames_deg: frames, trajectory })
}

fn apply_event(
    rho: &mut DensityMatrix,
    event: &PulseEvent,
    sys: &SpinSystem,
    frames: &mut Vec<f64>,
    options: &SimOptions,
    energies: &[f64],
) -> Result<()> {
    let n = sys.n();
    match event {
        PulseEvent::Hard { spins, angle_deg, phase_deg } => {
            for &s in spins {
                let r = linalg::rotation(angle_deg.to_radians(), (phase_deg - frames[s]).to_radians());
                linalg::conjugate_local(rho.matrix_mut(), n, &[s], &r);
            }
        }
        PulseEvent::Delay { duration_s } => match options.hamiltonian {
            HamiltonianModel::Weak => {
                let phases: Vec<C64> = energies.iter().map(|e| C64::from_polar(1.0, -e * duration_s)).collect();
                linalg::conjugate_diagonal(rho.matrix_mut(), &phases);
            }
            HamiltonianModel::Strong => {
                let u = delay_matrix(sys, *duration_s, options.hamiltonian);
                *rho.matrix_mut() = &u * rho.matrix() * u.adjoint();
            }
        },
        PulseEvent::Soft { .. } => {
            let p = soft_params(event).expect("matched soft");
            match options.pulse_model {
                PulseModel::Physical => {
                    let u = soft_physical_matrix(sys, &p, frames, options)?;
                    *rho.matrix_mut() = &u * rho.matrix() * u.adjoint();
                }
                PulseModel::Ideal => {
                    // relaxation is applied once for the whole pulse below
                    let inner = SimOptions { relaxation: false, trajectory: false, ..options.clone() };
                    for e in ideal_soft_events(sys, &p)? {
                        apply_event(rho, &e, sys, frames, &inner, energies)?;
                    }
                    if options.relaxation && p.duration_s > 0.0 {
                        *rho = relax(rho, p.duration_s, sys)?;
                    }
                    return Ok(());
                }
            }
        }
        PulseEvent::Crusher => *rho = rho.crush(),
        PulseEvent::FrameShift { .. } => {}
    }
    advance_frames(frames, sys.offsets_hz(), event);
    let t = event.duration_s();
    if options.relaxation && t > 0.0 {
        *rho = relax(rho, t, sys)?;
    }
    Ok(())
}

/// Physical propagator of a crusher-free sequence and its frame report.
pub fn sequence_propagator(seq: &PulseSequence, sys: &SpinSystem, options: &SimOptions) -> Result<(CMatrix, Vec<f64>)> {
    check_inputs(seq, sys)?;
    let n = sys.n();
    let mut frames = vec![0.0; n];
    let mut u = CMatrix::identity(dim(n), dim(n));
    for event in seq.events() {
        match event_propagator(event, sys, &frames, options)? {
            EventAction::Unitary(step) => u = step * u,
            EventAction::Crusher => return Err(Error::Unsupported("crusher has no unitary propagator".into())),
        }
        advance_frames(&mut frames, sys.offsets_hz(), event);
    }
    Ok((u, frames))
}

/// `Rz(F)·U_physical`: the propagator in the logical (circuit) picture.
pub fn logical_propagator(seq: &PulseSequence, sys: &SpinSystem, options: &SimOptions) -> Result<CMatrix> {
    let (u, frames) = sequence_propagator(seq, sys, options)?;
    Ok(frame_rotation(&frames) * u)
}

/// In-place fast Walsh–Hadamard transform (unnormalized).
fn walsh_hadamard(v: &mut [f64]) {
    let mut h = 1;
    while h < v.len() {
        for i in (0..v.len()).step_by(2 * h) {
            for j in i..i + h {
                let (a, b) = (v[j], v[j + h]);
                v[j] = a + b;
                v[j + h] = a - b;
            }
        }
        h *= 2;
    }
}

/// Phenomenological relaxation over `t` seconds.
///
/// Coherence `ρ_rs` decays by `exp(−t·Σ 1/T2_i)` over the spins that differ
/// between `r` and `s`. The diagonal is expanded in z-only product operators:
/// one-spin terms relax toward equilibrium with `exp(−t/T1_i)`, multi-spin
/// terms decay with `Π exp(−t/T1_i)`. Deviation states relax toward the
/// thermal deviation of the system weights; full states toward `I/2ⁿ`.
pub fn relax(rho: &DensityMatrix, t: f64, sys: &SpinSystem) -> Result<DensityMatrix> {
    let n = sys.n();
    if rho.n() != n {
        return Err(Error::WrongSpinCount { expected: n, found: rho.n() });
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument("relaxation time must be nonnegative".into()));
    }
    if let Some(s) = first_missing_relaxation(sys) {
        return Err(Error::MissingRelaxation(s));
    }
    let t1: Vec<f64> = (0..n).map(|s| sys.t1(s).expect("checked")).collect();
    let t2: Vec<f64> = (0..n).map(|s| sys.t2(s).expect("checked")).collect();
    let d = dim(n);
    let mut out = rho.clone();
    let m = out.matrix_mut();
    // per-bit-position decay factor
    let dephase: Vec<f64> = (0..n).map(|s| (-t / t2[s]).exp()).collect();
    for j in 0..d {
        for i in 0..d {
            if i == j {
                continue;
            }
            let flipped = i ^ j;
            let mut f = 1.0;
            for s in 0..n {
                if (flipped >> linalg::bit_position(n, s)) & 1 == 1 {
                    f *= dephase[s];
                }
            }
            m[(i, j)] *= f;
        }
    }

    let mut diag: Vec<f64> = (0..d).map(|i| m[(i, i)].re).collect();
    walsh_hadamard(&mut diag);
    let longitudinal: Vec<f64> = (0..n).map(|s| (-t / t1[s]).exp()).collect();
    for (mask, coeff) in diag.iter_mut().enumerate().skip(1) {
        let spins: Vec<usize> = (0..n).filter(|&s| (mask >> linalg::bit_position(n, s)) & 1 == 1).collect();
        let f: f64 = spins.iter().map(|&s| longitudinal[s]).product();
        let eq = if spins.len() == 1 && rho.representation() == Representation::Deviation {
            // thermal diagonal Σ w_s (−1)^{bit_s} transforms to 2ⁿ·w_s on mask {s}
            d as f64 * sys.weights()[spins[0]]
        } else {
            0.0
        };
        *coeff = eq + (*coeff - eq) * f;
    }
    walsh_hadamard(&mut diag);
    for (i, v) in diag.iter().enumerate() {
        m[(i, i)] = C64::new(v / d as f64, m[(i, i)].im);
    }
    Ok(out)
}

/// `1/(2|J|T₂)` with the smaller T₂ of the pair.
pub fn error_rate(sys: &SpinSystem, a: usize, b: usize) -> Result<f64> {
    sys.check_spin(a)?;
    sys.check_spin(b)?;
    let j = sys.coupling_hz(a, b);
    if j == 0.0 {
        return Err(Error::ZeroCoupling(a, b));
    }
    let t2a = sys.t2(a).ok_or(Error::MissingRelaxation(a))?;
    let t2b = sys.t2(b).ok_or(Error::MissingRelaxation(b))?;
    Ok(error_rate_from(j, t2a.min(t2b)))
}

pub fn error_rate_from(j_hz: f64, t2_s: f64) -> f64 {
    1.0 / (2.0 * j_hz.abs() * t2_s)
}

/// True when the rate is at or below [`ERROR_THRESHOLD`].
pub fn threshold_check(rate: f64) -> bool {
    rate <= ERROR_THRESHOLD
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frobenius, spin_axis, Axis};
    use proptest::prelude::*;

    fn pair(j: f64) -> SpinSystem {
        SpinSystem::new(vec![0.0, 0.0]).unwrap().with_coupling(0, 1, j).unwrap()
    }

    fn seq_of(sys: &SpinSystem, events: Vec<PulseEvent>) -> PulseSequence {
        let mut seq = PulseSequence::new(sys);
        for e in events {
            seq.push(e).unwrap();
        }
        seq
    }

    #[test]
    fn ninety_x_takes_z_to_minus_y() {
        let sys = SpinSystem::new(vec![0.0]).unwrap();
        let seq = seq_of(&sys, vec![PulseEvent::hard(vec![0], 90.0, 0.0)]);
        let out = simulate(&seq, &DensityMatrix::basis_state(1, 0).unwrap(), &sys, &SimOptions::default()).unwrap();
        let y = out.state.expectation(&linalg::spin_half(Axis::Y)).unwrap().re;
        let z = out.state.expectation(&linalg::spin_half(Axis::Z)).unwrap().re;
        assert!((y + 0.5).abs() < 1e-12 && z.abs() < 1e-12);
    }

    #[test]
    fn j_evolution_gives_antiphase() {
        let j = 100.0;
        let sys = pair(j);
        let seq = seq_of(&sys, vec![PulseEvent::delay(1.0 / (2.0 * j))]);
        let ix = spin_axis(2, 0, Axis::X);
        let rho = DensityMatrix::new(ix, Representation::Deviation).unwrap();
        let out = simulate(&seq, &rho, &sys, &SimOptions::default()).unwrap();
        let anti = spin_axis(2, 0, Axis::Y) * spin_axis(2, 1, Axis::Z) * c(2.0);
        // oracle: explicit exponential of the dense Hamiltonian
        let u = linalg::expm(&(sys.internal_hamiltonian(HamiltonianModel::Weak) * C64::new(0.0, -1.0 / (2.0 * j))));
        let expected = &u * rho.matrix() * u.adjoint();
        assert!(frobenius(&(out.state.matrix() - &expected)) < 1e-12);
        assert!(frobenius(&(out.state.matrix() - &anti)) < 1e-12 || frobenius(&(out.state.matrix() + &anti)) < 1e-12);
    }

    #[test]
    fn empty_sequence_is_identity() {
        let sys = pair(10.0);
        let rho = DensityMatrix::thermal(&sys);
        let out = simulate(&PulseSequence::new(&sys), &rho, &sys, &SimOptions::default()).unwrap();
        assert_eq!(out.state, rho);
        assert_eq!(out.frames_deg, vec![0.0, 0.0]);
    }

    #[test]
    fn simulate_matches_propagator_and_frames() {
        let sys = SpinSystem::new(vec![13.0, -170.0, 40.0])
            .unwrap()
            .with_coupling(0, 1, 50.0)
            .unwrap()
            .with_coupling(1, 2, 20.0)
            .unwrap();
        let seq = seq_of(
            &sys,
            vec![
                PulseEvent::frame_shift(1, 33.0),
                PulseEvent::hard(vec![0, 2], 90.0, 10.0),
                PulseEvent::delay(0.003),
                PulseEvent::hard(vec![1], 180.0, 90.0),
                PulseEvent::delay(0.0011),
            ],
        );
        let rho = DensityMatrix::thermal_deviation(3, &[1.0, 0.7, 0.3]).unwrap();
        let out = simulate(&seq, &rho, &sys, &SimOptions::default()).unwrap();
        let (u, frames) = sequence_propagator(&seq, &sys, &SimOptions::default()).unwrap();
        let expected = &u * rho.matrix() * u.adjoint();
        assert!(frobenius(&(out.state.matrix() - expected)) < 1e-12);
        for (a, b) in frames.iter().zip(seq.frames_deg()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(out.frames_deg, frames);
    }

    #[test]
    fn composition_of_sequences() {
        let sys = SpinSystem::new(vec![5.0, 60.0]).unwrap().with_coupling(0, 1, 30.0).unwrap();
        let a = seq_of(&sys, vec![PulseEvent::hard(vec![0], 90.0, 0.0), PulseEvent::delay(0.004)]);
        let b =
            seq_of(&sys, vec![PulseEvent::hard(vec![1], 45.0, 30.0), PulseEvent::delay(0.002), PulseEvent::Crusher]);
        let mut ab = a.clone();
        ab.extend(&b).unwrap();
        let rho = DensityMatrix::thermal(&sys);
        let opts = SimOptions::default();
        let whole = simulate(&ab, &rho, &sys, &opts).unwrap();
        let first = simulate(&a, &rho, &sys, &opts).unwrap();
        // second half starts from the first half's frames
        let mut shifted = PulseSequence::new(&sys);
        for (s, f) in first.frames_deg.iter().enumerate() {
            shifted.push(PulseEvent::frame_shift(s, *f)).unwrap();
        }
        shifted.extend(&b).unwrap();
        let second = simulate(&shifted, &first.state, &sys, &opts).unwrap();
        assert!(frobenius(&(whole.state.matrix() - second.state.matrix())) < 1e-13);
    }

    #[test]
    fn relaxation_examples() {
        let t2 = 0.5;
        let sys = SpinSystem::new(vec![0.0]).unwrap().with_relaxation(0, 2.0, t2).unwrap();
        let rho = DensityMatrix::new(linalg::spin_half(Axis::X), Representation::Deviation).unwrap();
        assert_eq!(relax(&rho, 0.0, &sys).unwrap(), rho);
        let out = relax(&rho, t2, &sys).unwrap();
        assert!((out.matrix()[(0, 1)].re - 0.5 * (-1.0f64).exp()).abs() < 1e-14);

        let sys2 = SpinSystem::new(vec![0.0, 0.0])
            .unwrap()
            .with_relaxation(0, 3.0, 0.8)
            .unwrap()
            .with_relaxation(1, 3.0, 0.3)
            .unwrap();
        let mut m = CMatrix::zeros(4, 4);
        m[(0, 3)] = c(0.5);
        m[(3, 0)] = c(0.5);
        m[(0, 1)] = c(0.5);
        m[(1, 0)] = c(0.5);
        let rho = DensityMatrix::new(m, Representation::Deviation).unwrap();
        let t = 0.2;
        let out = relax(&rho, t, &sys2).unwrap();
        let dq = out.matrix()[(0, 3)].re / 0.5;
        let sq = out.matrix()[(0, 1)].re / 0.5;
        assert!((dq - (-t * (1.0 / 0.8 + 1.0 / 0.3)).exp()).abs() < 1e-14);
        assert!((sq - (-t / 0.3f64).exp()).abs() < 1e-14);
        assert!(dq < sq);
        assert!(matches!(relax(&rho, 1.0, &pair(1.0)), Err(Error::MissingRelaxation(0))));
    }

    #[test]
    fn relaxation_drives_deviation_to_thermal() {
        let sys = SpinSystem::new(vec![0.0, 0.0])
            .unwrap()
            .with_relaxation(0, 1.0, 0.5)
            .unwrap()
            .with_relaxation(1, 2.0, 1.0)
            .unwrap()
            .with_weights(vec![1.0, 0.25])
            .unwrap();
        let target = DensityMatrix::effective_pure_target(2, 3).unwrap();
        let late = relax(&target, 200.0, &sys).unwrap();
        let thermal = DensityMatrix::thermal(&sys);
        assert!(frobenius(&(late.matrix() - thermal.matrix())) < 1e-12);
        assert!(relax(&target, 0.3, &sys).unwrap().trace().norm() < 1e-14);
    }

    proptest! {
        #[test]
        fn relaxation_keeps_full_states_physical(theta in 0.0..std::f64::consts::PI, phi in 0.0..std::f64::consts::TAU, t in 0.0f64..3.0) {
            let sys = SpinSystem::new(vec![0.0, 0.0])
                .unwrap()
                .with_relaxation(0, 1.0, 2.0)
                .unwrap()
                .with_relaxation(1, 1.5, 0.4)
                .unwrap();
            let (s, co) = (theta / 2.0).sin_cos();
            let bell = [c(co), C64::from_polar(s * 0.6, phi), C64::from_polar(s * 0.8, -phi), c(0.0)];
            let rho = DensityMatrix::pure(&bell).unwrap();
            let out = relax(&rho, t, &sys).unwrap();
            prop_assert!((out.trace().re - 1.0).abs() < 1e-12);
            prop_assert!(linalg::hermiticity_error(out.matrix()) < 1e-12);
            prop_assert!(linalg::hermitian_eigenvalues(out.matrix())[0] >= -1e-10);
        }
    }

    #[test]
    fn error_rate_examples() {
        let sys = pair(100.0).with_relaxation(0, 2.0, 1.0).unwrap().with_relaxation(1, 4.0, 3.0).unwrap();
        let r = error_rate(&sys, 0, 1).unwrap();
        assert!((r - 0.005).abs() < 1e-15);
        assert!(!threshold_check(r));
        assert!(threshold_check(1e-5));
        assert!(!threshold_check(1.0000001e-5));
        assert!(error_rate_from(1e12, 1.0) < 1e-12);
        let uncoupled = SpinSystem::new(vec![0.0, 0.0]).unwrap().with_relaxation(0, 1.0, 1.0).unwrap();
        assert!(matches!(error_rate(&uncoupled, 0, 1), Err(Error::ZeroCoupling(0, 1))));
    }

    #[test]
    fn step_cap_is_enforced() {
        let sys = SpinSystem::new(vec![0.0, 5000.0]).unwrap().with_channels(vec![0, 0]).unwrap();
        let seq = seq_of(
            &sys,
            vec![PulseEvent::Soft {
                channel: 0,
                carrier_hz: 2000.0,
                amplitude_hz: 1000.0,
                duration_s: 1e-3,
                phase_deg: 0.0,
            }],
        );
        let opts = SimOptions { step_cap_s: 1e-4, ..SimOptions::default() };
        let err = simulate(&seq, &DensityMatrix::thermal(&sys), &sys, &opts).unwrap_err();
        match err {
            Error::StepCapTooCoarse { required, given } => {
                assert!((required - 1.0 / 40000.0).abs() < 1e-15);
                assert_eq!(given, 1e-4);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn soft_pulse_converges_to_hard_pulse() {
        let sys = SpinSystem::new(vec![0.0, 300.0]).unwrap().with_coupling(0, 1, 12.0).unwrap();
        let hard = seq_of(&sys, vec![PulseEvent::hard(vec![0], 90.0, 0.0)]);
        let (u_hard, _) = sequence_propagator(&hard, &sys, &SimOptions::default()).unwrap();
        let mut errors = Vec::new();
        for amp in [1e3, 1e4, 1e5] {
            let d = 0.25 / amp;
            let seq = seq_of(
                &sys,
                vec![PulseEvent::Soft {
                    channel: 0,
                    carrier_hz: 0.0,
                    amplitude_hz: amp,
                    duration_s: d,
                    phase_deg: 0.0,
                }],
            );
            let opts = SimOptions { step_cap_s: required_step_cap(0.0, amp), ..SimOptions::default() };
            let u = logical_propagator(&seq, &sys, &opts).unwrap();
            errors.push(linalg::phase_aligned_distance(&u, &u_hard));
        }
        assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
        assert!(errors[2] < 1e-2);
    }

    #[test]
    fn ideal_soft_pulse_is_centred_rotation() {
        let sys = SpinSystem::new(vec![0.0, 300.0]).unwrap().with_coupling(0, 1, 12.0).unwrap();
        let d = 1e-3;
        let soft = seq_of(
            &sys,
            vec![PulseEvent::Soft { channel: 0, carrier_hz: 0.0, amplitude_hz: 250.0, duration_s: d, phase_deg: 30.0 }],
        );
        let explicit = seq_of(
            &sys,
            vec![PulseEvent::delay(d / 2.0), PulseEvent::hard(vec![0], 90.0, 30.0), PulseEvent::delay(d / 2.0)],
        );
        let a = sequence_propagator(&soft, &sys, &SimOptions::ideal()).unwrap();
        let b = sequence_propagator(&explicit, &sys, &SimOptions::ideal()).unwrap();
        assert!(frobenius(&(a.0 - b.0)) < 1e-12);
        let rho = DensityMatrix::thermal(&sys);
        let sa = simulate(&soft, &rho, &sys, &SimOptions::ideal()).unwrap();
        let sb = simulate(&explicit, &rho, &sys, &SimOptions::ideal()).unwrap();
        assert!(frobenius(&(sa.state.matrix() - sb.state.matrix())) < 1e-12);
    }
}
