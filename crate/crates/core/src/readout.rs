//! FID acquisition, spectra, multiplet decoding, projective measurement and
//! state tomography.
//!
//! The receiver detects `Tr(ρ·I₋)`, so a spin at offset ν with `+Ix`
//! magnetization gives `½·e^{i2πνt}` and a positive absorption line at `+ν`
//! after a forward transform.

use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::linalg::{self, bit_position, c, dim, CMatrix, C64};
use crate::spin_system::{HamiltonianModel, MultipletLine, SpinSystem};
use crate::state::{DensityMatrix, ProductOperatorExpansion, Representation};

/// Integrated amplitude of one spin's multiplet in an effective pure state
/// after a 90° read-out pulse.
pub const REFERENCE_AMPLITUDE: f64 = 0.5;

/// Default decision threshold, a quarter of [`REFERENCE_AMPLITUDE`].
pub const DEFAULT_THRESHOLD: f64 = 0.25 * REFERENCE_AMPLITUDE;

/// Line integration half-width in bins.
pub const LINE_WINDOW: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Fid {
    dwell_s: f64,
    samples: Vec<C64>,
    /// Set when a line falls outside the spectral window or a multiplet is
    /// wider than it.
    pub aliasing: bool,
}

impl Fid {
    pub fn new(dwell_s: f64, samples: Vec<C64>) -> Result<Self> {
        if !(dwell_s > 0.0 && dwell_s.is_finite()) {
            return Err(Error::InvalidArgument("dwell time must be positive".into()));
        }
        if samples.len() < 2 {
            return Err(Error::InvalidArgument("an FID needs at least two samples".into()));
        }
        Ok(Self { dwell_s, samples, aliasing: false })
    }

    pub fn dwell_s(&self) -> f64 {
        self.dwell_s
    }

    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.samples.len()).map(|k| k as f64 * self.dwell_s)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s,real,imag\n");
        for (t, z) in self.times().zip(&self.samples) {
            let _ = writeln!(out, "{t:?},{:?},{:?}", z.re, z.im);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquireOptions {
    /// Apply T₂ decay during acquisition.
    pub relaxation: bool,
    /// Frame report of a physical-frame state; the receiver phase of each spin
    /// is shifted by it. `None` means `ρ` is already logical.
    pub frames_deg: Option<Vec<f64>>,
    pub hamiltonian: HamiltonianModel,
}

impl Default for AcquireOptions {
    fn default() -> Self {
        Self { relaxation: false, frames_deg: None, hamiltonian: HamiltonianModel::Weak }
    }
}

/// One oscillating component `amplitude·e^{(iω − R)t}` of an FID.
#[derive(Debug, Clone, Copy)]
struct Transition {
    amplitude: C64,
    omega: f64,
    rate: f64,
}

fn receiver_phase(options: &AcquireOptions, spin: usize) -> C64 {
    match &options.frames_deg {
        Some(f) => C64::from_polar(1.0, -f[spin].to_radians()),
        None => linalg::ONE,
    }
}

fn transitions(
    rho: &DensityMatrix,
    sys: &SpinSystem,
    spins: &[usize],
    options: &AcquireOptions,
) -> Result<Vec<Transition>> {
    let n = sys.n();
    let d = dim(n);
    let m = rho.matrix();
    match options.hamiltonian {
        HamiltonianModel::Weak => {
            let energies = sys.zeeman_energies();
            let mut out = Vec::new();
            for &s in spins {
                let mask = 1 << bit_position(n, s);
                let rate = if options.relaxation { 1.0 / sys.t2(s).ok_or(Error::MissingRelaxation(s))? } else { 0.0 };
                let phase = receiver_phase(options, s);
                for col in (0..d).filter(|x| x & mask == 0) {
                    let row = col | mask;
                    let amplitude = m[(col, row)] * phase;
                    if amplitude.norm() > 0.0 {
                        out.push(Transition { amplitude, omega: energies[row] - energies[col], rate });
                    }
                }
            }
            Ok(out)
        }
        HamiltonianModel::Strong => {
            if options.relaxation {
                return Err(Error::Unsupported("relaxation during acquisition needs the weak-coupling model".into()));
            }
            let eig = nalgebra::SymmetricEigen::new(sys.internal_hamiltonian(HamiltonianModel::Strong));
            let v = eig.eigenvectors;
            let mut observable = CMatrix::zeros(d, d);
            for &s in spins {
                observable += linalg::spin_operator(n, s, &linalg::lowering()) * receiver_phase(options, s);
            }
            let rho_e = v.adjoint() * m * &v;
            let obs_e = v.adjoint() * observable * &v;
            let mut out = Vec::new();
            for a in 0..d {
                for b in 0..d {
                    let amplitude = rho_e[(a, b)] * obs_e[(b, a)];
                    if amplitude.norm() > 1e-15 {
                        out.push(Transition { amplitude, omega: eig.eigenvalues[b] - eig.eigenvalues[a], rate: 0.0 });
                    }
                }
            }
            Ok(out)
        }
    }
}

fn aliasing(sys: &SpinSystem, spins: &[usize], dwell_s: f64) -> Result<bool> {
    let width = 1.0 / dwell_s;
    for &s in spins {
        let lines = sys.multiplet_lines(s)?;
        let lo = lines.iter().map(|l| l.frequency_hz).fold(f64::INFINITY, f64::min);
        let hi = lines.iter().map(|l| l.frequency_hz).fold(f64::NEG_INFINITY, f64::max);
        if hi - lo >= width || lo < -width / 2.0 || hi >= width / 2.0 {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Free-induction decay of the given spins, sampled every `dwell_s`.
pub fn acquire(
    rho: &DensityMatrix,
    sys: &SpinSystem,
    spins: &[usize],
    dwell_s: f64,
    npoints: usize,
    options: &AcquireOptions,
) -> Result<Fid> {
    if rho.n() != sys.n() {
        return Err(Error::WrongSpinCount { expected: sys.n(), found: rho.n() });
    }
    for &s in spins {
        sys.check_spin(s)?;
    }
    if let Some(f) = &options.frames_deg {
        if f.len() != sys.n() {
            return Err(Error::DimensionMismatch { expected: sys.n(), found: f.len() });
        }
    }
    let mut fid = Fid::new(dwell_s, vec![linalg::ZERO; npoints])?;
    for t in transitions(rho, sys, spins, options)? {
        let step = C64::new(-t.rate * dwell_s, t.omega * dwell_s).exp();
        let mut z = t.amplitude;
        for sample in fid.samples.iter_mut() {
            *sample += z;
            z *= step;
        }
    }
    fid.aliasing = aliasing(sys, spins, dwell_s)?;
    Ok(fid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Ascending frequency axis (Hz), zero at index `N/2`.
    pub freqs_hz: Vec<f64>,
    pub values: Vec<C64>,
    pub bin_hz: f64,
}

/// `S_k = (1/N)·Σ fid_j·e^{−2πi jk/N}`, reordered so frequencies ascend.
pub fn spectrum(fid: &Fid) -> Spectrum {
    let n = fid.len();
    let mut buf = fid.samples.clone();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    let half = n / 2;
    let bin_hz = 1.0 / (n as f64 * fid.dwell_s);
    let values = (0..n).map(|j| buf[(j + n - half) % n] * scale).collect();
    let freqs_hz = (0..n).map(|j| (j as f64 - half as f64) * bin_hz).collect();
    Spectrum { freqs_hz, values, bin_hz }
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the bin nearest `freq_hz`, folding aliased frequencies.
    pub fn bin_of(&self, freq_hz: f64) -> usize {
        let n = self.len() as i64;
        let k = (freq_hz / self.bin_hz).round() as i64 + n / 2;
        k.rem_euclid(n) as usize
    }

    /// Sum of the complex values within `±half_width` bins of `freq_hz`.
    pub fn integrate(&self, freq_hz: f64, half_width: usize) -> C64 {
        let n = self.len() as i64;
        let centre = self.bin_of(freq_hz) as i64;
        let w = half_width as i64;
        (centre - w..=centre + w).map(|k| self.values[k.rem_euclid(n) as usize]).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("freq_hz,real,imag\n");
        for (f, z) in self.freqs_hz.iter().zip(&self.values) {
            let _ = writeln!(out, "{f:?},{:?},{:?}", z.re, z.im);
        }
        out
    }
}

/// Multiplet lines of `spin` keyed by coupled neighbours only, so uncoupled
/// spins do not produce duplicate lines.
pub fn resolved_lines(sys: &SpinSystem, spin: usize) -> Result<Vec<MultipletLine>> {
    let mut out: Vec<MultipletLine> = Vec::new();
    for mut line in sys.multiplet_lines(spin)? {
        line.neighbors.retain(|&(o, _)| sys.coupling_hz(spin, o) != 0.0);
        if !out.iter().any(|l| l.neighbors == line.neighbors) {
            out.push(line);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineReport {
    pub spin: usize,
    pub frequency_hz: f64,
    pub neighbors: Vec<(usize, u8)>,
    /// Real part of the integrated line.
    pub amplitude: f64,
    pub present: bool,
}

impl LineReport {
    pub fn label(&self) -> String {
        self.neighbors.iter().map(|&(_, b)| if b == 0 { '0' } else { '1' }).collect()
    }
}

/// Integrated amplitude of every line of `spin`'s multiplet.
pub fn line_table(spectrum: &Spectrum, sys: &SpinSystem, spin: usize, threshold: f64) -> Result<Vec<LineReport>> {
    Ok(resolved_lines(sys, spin)?
        .into_iter()
        .map(|l| {
            let amplitude = spectrum.integrate(l.frequency_hz, LINE_WINDOW).re;
            LineReport {
                spin,
                frequency_hz: l.frequency_hz,
                neighbors: l.neighbors,
                amplitude,
                present: amplitude.abs() > threshold,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitVerdict {
    /// Absorptive multiplet.
    Zero,
    /// Emissive multiplet.
    One,
    /// Signal below threshold: the spin is in a superposition or mixture.
    Averaged,
}

impl BitVerdict {
    pub fn from_amplitude(amplitude: f64, threshold: f64) -> Self {
        if amplitude > threshold {
            BitVerdict::Zero
        } else if amplitude < -threshold {
            BitVerdict::One
        } else {
            BitVerdict::Averaged
        }
    }

    pub fn bit(self) -> Option<u8> {
        match self {
            BitVerdict::Zero => Some(0),
            BitVerdict::One => Some(1),
            BitVerdict::Averaged => None,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            BitVerdict::Zero => '0',
            BitVerdict::One => '1',
            BitVerdict::Averaged => '?',
        }
    }
}

/// One verdict per `(spin, spectrum)` pair from the integrated multiplet.
pub fn decode_bits(spectra: &[(usize, Spectrum)], sys: &SpinSystem, threshold: f64) -> Result<Vec<BitVerdict>> {
    spectra
        .iter()
        .map(|(spin, sp)| {
            let total: f64 = line_table(sp, sys, *spin, threshold)?.iter().map(|l| l.amplitude).sum();
            Ok(BitVerdict::from_amplitude(total, threshold))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborReport {
    pub lines: Vec<LineReport>,
    /// Neighbour bits when exactly one line is present.
    pub determined: Option<Vec<(usize, u8)>>,
}

/// Which neighbour configurations are present in `spin`'s multiplet.
pub fn decode_neighbors(spectrum: &Spectrum, sys: &SpinSystem, spin: usize, threshold: f64) -> Result<NeighborReport> {
    let lines = line_table(spectrum, sys, spin, threshold)?;
    let present: Vec<&LineReport> = lines.iter().filter(|l| l.present).collect();
    let determined = (present.len() == 1).then(|| present[0].neighbors.clone());
    Ok(NeighborReport { lines, determined })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutOptions {
    pub dwell_s: f64,
    pub npoints: usize,
    pub threshold: f64,
    pub acquire: AcquireOptions,
}

impl Default for ReadoutOptions {
    fn default() -> Self {
        Self { dwell_s: 1.0 / 1024.0, npoints: 2048, threshold: DEFAULT_THRESHOLD, acquire: AcquireOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpinReadout {
    pub spin: usize,
    pub spectrum: Spectrum,
    pub lines: Vec<LineReport>,
    pub verdict: BitVerdict,
    pub aliasing: bool,
}

/// `exp(−i·π/2·Iy)` on one spin: takes `+z` to `+x`.
pub fn readout_pulse() -> CMatrix {
    linalg::rotation(std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2)
}

/// Per-spin read-out: a 90°ᵧ pulse on the spin, acquisition of that spin's
/// channel, transform and decoding.
pub fn read_out(rho: &DensityMatrix, sys: &SpinSystem, options: &ReadoutOptions) -> Result<Vec<SpinReadout>> {
    (0..sys.n()).map(|s| read_out_spin(rho, sys, s, options).map(|(_, r)| r)).collect()
}

/// Read-out of one spin, also returning the recorded FID.
pub fn read_out_spin(
    rho: &DensityMatrix,
    sys: &SpinSystem,
    spin: usize,
    options: &ReadoutOptions,
) -> Result<(Fid, SpinReadout)> {
    if rho.n() != sys.n() {
        return Err(Error::WrongSpinCount { expected: sys.n(), found: rho.n() });
    }
    sys.check_spin(spin)?;
    let rotated = rho.conjugate_local(&[spin], &readout_pulse());
    let fid = acquire(&rotated, sys, &[spin], options.dwell_s, options.npoints, &options.acquire)?;
    let spectrum = spectrum(&fid);
    let lines = line_table(&spectrum, sys, spin, options.threshold)?;
    let total: f64 = lines.iter().map(|l| l.amplitude).sum();
    let verdict = BitVerdict::from_amplitude(total, options.threshold);
    let aliasing = fid.aliasing;
    Ok((fid, SpinReadout { spin, spectrum, lines, verdict, aliasing }))
}

/// CSV line table of a read-out.
pub fn lines_csv(readouts: &[SpinReadout]) -> String {
    let mut out = String::from("spin,label,freq_hz,amplitude,present,verdict\n");
    for r in readouts {
        for l in &r.lines {
            let _ = writeln!(
                out,
                "{},{},{:?},{:?},{},{}",
                r.spin,
                l.label(),
                l.frequency_hz,
                l.amplitude,
                l.present,
                r.verdict.symbol()
            );
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureMode {
    Ensemble,
    Sampled { shots: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    /// Probability of each register value (register spin order, first most
    /// significant).
    pub distribution: Vec<f64>,
    /// Probability that each register spin reads 1.
    pub marginals: Vec<f64>,
    /// Drawn register values in sampled mode.
    pub samples: Vec<usize>,
    /// State after the last sampled outcome (sampled mode only).
    pub collapsed: Option<DensityMatrix>,
}

fn populations_for_measurement(rho: &DensityMatrix) -> Result<Vec<f64>> {
    let full = match rho.representation() {
        Representation::Full => rho.clone(),
        Representation::Deviation => rho.with_identity(),
    };
    let p = full.populations();
    if p.iter().any(|&x| x < -1e-12) {
        return Err(Error::InvalidArgument("state has negative populations".into()));
    }
    Ok(p.into_iter().map(|x| x.max(0.0)).collect())
}

/// Register distribution; deviation states are measured as `dev + I/2ⁿ`.
pub fn measure(rho: &DensityMatrix, register: &[usize], mode: MeasureMode) -> Result<Measurement> {
    let n = rho.n();
    for (i, &s) in register.iter().enumerate() {
        if s >= n {
            return Err(Error::IndexOutOfRange { index: s, len: n });
        }
        if register[..i].contains(&s) {
            return Err(Error::InvalidArgument(format!("spin {s} listed twice")));
        }
    }
    let p = populations_for_measurement(rho)?;
    let k = register.len();
    let mut distribution = vec![0.0; dim(k)];
    for (idx, prob) in p.iter().enumerate() {
        distribution[crate::gates::local_index(idx, n, register)] += prob;
    }
    let marginals = (0..k)
        .map(|q| distribution.iter().enumerate().filter(|&(v, _)| v >> (k - 1 - q) & 1 == 1).map(|(_, p)| p).sum())
        .collect();
    let mut out = Measurement { distribution, marginals, samples: Vec::new(), collapsed: None };
    if let MeasureMode::Sampled { shots, seed } = mode {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = WeightedIndex::new(&out.distribution).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        out.samples = (0..shots).map(|_| dist.sample(&mut rng)).collect();
        if let Some(&last) = out.samples.last() {
            out.collapsed = Some(collapse(rho, register, last)?);
        }
    }
    Ok(out)
}

/// Projects the register onto `value` and renormalizes (full representation).
pub fn collapse(rho: &DensityMatrix, register: &[usize], value: usize) -> Result<DensityMatrix> {
    let n = rho.n();
    let full = match rho.representation() {
        Representation::Full => rho.clone(),
        Representation::Deviation => rho.with_identity(),
    };
    let keep: Vec<bool> = (0..dim(n)).map(|i| crate::gates::local_index(i, n, register) == value).collect();
    let m = full.matrix();
    let projected =
        CMatrix::from_fn(dim(n), dim(n), |r, col| if keep[r] && keep[col] { m[(r, col)] } else { linalg::ZERO });
    let p = linalg::trace(&projected).re;
    if p <= 0.0 {
        return Err(Error::InvalidArgument(format!("outcome {value} has zero probability")));
    }
    DensityMatrix::new(projected / c(p), Representation::Full)
}

/// Read-out pulse applied to one spin in a tomography setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TomographyPulse {
    None,
    X90,
    Y90,
}

impl TomographyPulse {
    pub fn matrix(self) -> CMatrix {
        match self {
            TomographyPulse::None => CMatrix::identity(2, 2),
            TomographyPulse::X90 => linalg::rotation(std::f64::consts::FRAC_PI_2, 0.0),
            TomographyPulse::Y90 => readout_pulse(),
        }
    }
}

/// All `3ⁿ` settings `{I, X90, Y90}^⊗n`.
pub fn tomography_settings(n: usize) -> Vec<Vec<TomographyPulse>> {
    const ALL: [TomographyPulse; 3] = [TomographyPulse::None, TomographyPulse::X90, TomographyPulse::Y90];
    (0..3usize.pow(n as u32))
        .map(|mut code| {
            let mut setting = vec![TomographyPulse::None; n];
            for s in (0..n).rev() {
                setting[s] = ALL[code % 3];
                code /= 3;
            }
            setting
        })
        .collect()
}

pub fn apply_setting(rho: &DensityMatrix, setting: &[TomographyPulse]) -> DensityMatrix {
    let mut out = rho.clone();
    for (s, p) in setting.iter().enumerate() {
        if *p != TomographyPulse::None {
            out = out.conjugate_local(&[s], &p.matrix());
        }
    }
    out
}

/// Distinct line frequencies of all spins (clusters merged within 1 mHz) and
/// the `(spin, column-index)` coherences feeding each.
fn line_model(sys: &SpinSystem) -> Vec<(f64, Vec<(usize, usize)>)> {
    let n = sys.n();
    let energies = sys.zeeman_energies();
    let mut clusters: Vec<(f64, Vec<(usize, usize)>)> = Vec::new();
    for s in 0..n {
        let mask = 1 << bit_position(n, s);
        for col in (0..dim(n)).filter(|x| x & mask == 0) {
            let f = (energies[col | mask] - energies[col]) / (2.0 * std::f64::consts::PI);
            match clusters.iter_mut().find(|(g, _)| (g - f).abs() < 1e-3) {
                Some((_, members)) => members.push((s, col)),
                None => clusters.push((f, vec![(s, col)])),
            }
        }
    }
    clusters
}

fn line_amplitudes(rho: &CMatrix, n: usize, model: &[(f64, Vec<(usize, usize)>)]) -> Vec<C64> {
    model
        .iter()
        .map(|(_, members)| members.iter().map(|&(s, col)| rho[(col, col | 1 << bit_position(n, s))]).sum())
        .collect()
}

/// Least-squares complex amplitudes of lines at known frequencies.
pub fn fit_lines(fid: &Fid, freqs_hz: &[f64]) -> Result<Vec<C64>> {
    let basis = CMatrix::from_fn(fid.len(), freqs_hz.len(), |k, j| {
        C64::from_polar(1.0, 2.0 * std::f64::consts::PI * freqs_hz[j] * k as f64 * fid.dwell_s)
    });
    let rhs = nalgebra::DVector::from_column_slice(fid.samples());
    let svd = basis.svd(true, true);
    let x = svd.solve(&rhs, 1e-12).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(x.iter().copied().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tomography {
    /// Reconstructed traceless deviation.
    pub state: DensityMatrix,
    pub experiments: usize,
    /// Ratio of extreme nonzero singular values of the design matrix.
    pub condition_number: f64,
}

/// Which product-operator components are reconstructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TomographyModel {
    /// Every traceless component.
    Full,
    /// Only products of `Iz` terms (populations).
    Diagonal,
}

impl TomographyModel {
    /// Product-operator word indices solved for (the identity word excluded).
    fn unknowns(self, n: usize) -> Vec<usize> {
        let all = 1..dim(2 * n);
        match self {
            TomographyModel::Full => all.collect(),
            // E and Z are factors 0 and 3 of every base-4 digit
            TomographyModel::Diagonal => all.filter(|&w| (0..n).all(|s| matches!(w >> (2 * s) & 3, 0 | 3))).collect(),
        }
    }
}

/// `n` settings, each a 90°ᵧ pulse on one spin; enough for
/// [`TomographyModel::Diagonal`].
pub fn diagonal_settings(n: usize) -> Vec<Vec<TomographyPulse>> {
    (0..n)
        .map(|s| (0..n).map(|q| if q == s { TomographyPulse::Y90 } else { TomographyPulse::None }).collect())
        .collect()
}

/// Linear-inversion tomography. `experiment` returns the FID recorded after
/// the given read-out setting; line amplitudes are fitted at the known
/// multiplet frequencies and inverted for the traceless part of `ρ` in the
/// product-operator basis.
pub fn tomography<F>(
    sys: &SpinSystem,
    settings: &[Vec<TomographyPulse>],
    model: TomographyModel,
    mut experiment: F,
) -> Result<Tomography>
where
    F: FnMut(&[TomographyPulse]) -> Result<Fid>,
{
    let n = sys.n();
    let d = dim(n);
    if settings.iter().any(|s| s.len() != n) {
        return Err(Error::InvalidArgument(format!("settings must list a pulse for each of {n} spins")));
    }
    let words = model.unknowns(n);
    let model = line_model(sys);
    let unknowns = words.len();
    let rows = 2 * model.len() * settings.len();
    let mut design = nalgebra::DMatrix::<f64>::zeros(rows, unknowns);
    for (u, &w) in words.iter().enumerate() {
        let mut coeffs = vec![0.0; d * d];
        coeffs[w] = 1.0;
        let po = ProductOperatorExpansion::from_coefficients(n, coeffs)?;
        let basis = DensityMatrix::new(po.to_matrix(), Representation::Deviation)?;
        for (e, setting) in settings.iter().enumerate() {
            let rotated = apply_setting(&basis, setting);
            for (l, a) in line_amplitudes(rotated.matrix(), n, &model).iter().enumerate() {
                let r = 2 * (e * model.len() + l);
                design[(r, u)] = a.re;
                design[(r + 1, u)] = a.im;
            }
        }
    }
    let freqs: Vec<f64> = model.iter().map(|(f, _)| *f).collect();
    let mut observed = nalgebra::DVector::<f64>::zeros(rows);
    for (e, setting) in settings.iter().enumerate() {
        let fid = experiment(setting)?;
        for (l, a) in fit_lines(&fid, &freqs)?.iter().enumerate() {
            let r = 2 * (e * model.len() + l);
            observed[r] = a.re;
            observed[r + 1] = a.im;
        }
    }
    let svd = design.svd(true, true);
    let sv = &svd.singular_values;
    let max = sv.max();
    let min = sv.min();
    let condition_number = if min > 0.0 && sv.len() == unknowns { max / min } else { f64::INFINITY };
    if !(condition_number < 1e10) {
        return Err(Error::RankDeficient(condition_number));
    }
    let x = svd.solve(&observed, 1e-12 * max).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut coeffs = vec![0.0; d * d];
    for (&w, v) in words.iter().zip(x.iter()) {
        coeffs[w] = *v;
    }
    let po = ProductOperatorExpansion::from_coefficients(n, coeffs)?;
    let state = DensityMatrix::new(po.to_matrix(), Representation::Deviation)?;
    Ok(Tomography { state, experiments: settings.len(), condition_number })
}

/// Simulated experiment source for [`tomography`]: ideal read-out pulses on
/// `rho` followed by acquisition of every spin.
pub fn simulated_source<'a>(
    rho: &'a DensityMatrix,
    sys: &'a SpinSystem,
    dwell_s: f64,
    npoints: usize,
) -> impl FnMut(&[TomographyPulse]) -> Result<Fid> + 'a {
    let spins: Vec<usize> = (0..sys.n()).collect();
    move |setting| acquire(&apply_setting(rho, setting), sys, &spins, dwell_s, npoints, &AcquireOptions::default())
}
