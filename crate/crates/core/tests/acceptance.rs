use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nmrqc_core::algorithms::{self, PeriodFinding, RunMode};
use nmrqc_core::evolution::{self, logical_propagator, required_step_cap, sequence_propagator};
use nmrqc_core::gates::{fft_reference, qft_matrix, rescale_by_first_nonzero, StateVector};
use nmrqc_core::linalg::{self, dim, embed, frobenius, lowering, phase_aligned_distance, spin_axis, Axis, ONE, ZERO};
use nmrqc_core::prep::{self, Scheme};
use nmrqc_core::pulse::{self, compile_circuit, compile_gate, verify_sequence, CompileOptions};
use nmrqc_core::readout::{self, BitVerdict, ReadoutOptions, TomographyModel};
use nmrqc_core::{
    simulate, CMatrix, Circuit, Convention, DensityMatrix, Gate, PulseEvent, PulseSequence, Representation, SimOptions,
    SpinSystem, C64,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || format!("runtime {:.2}s exceeds {limit_s}s", elapsed.as_secs_f64()))
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn pair(j: f64) -> SpinSystem {
    SpinSystem::new(vec![-200.0, 250.0]).unwrap().with_coupling(0, 1, j).unwrap()
}

fn cnot_truth_table() -> Outcome {
    let start = Instant::now();
    let sys = pair(215.0);
    let seq = compile_gate(&Gate::cnot(0, 1), &sys).map_err(e)?;
    let mut worst: f64 = 1.0;
    for (input, output) in [(0, 0), (1, 1), (2, 3), (3, 2)] {
        let rho = DensityMatrix::basis_state(2, input).map_err(e)?;
        let out = simulate(&seq, &rho, &sys, &SimOptions::default()).map_err(e)?.logical_state();
        let fidelity = out.matrix()[(output, output)].re;
        ensure(fidelity > 1.0 - 1e-9, || format!("|{input:02b}> gave fidelity {fidelity} with |{output:02b}>"))?;
        worst = worst.min(fidelity);
    }
    within(start.elapsed(), 1.0)?;
    Ok(format!("worst row fidelity 1-{:.1e}", 1.0 - worst))
}

fn gate_matrix_fidelity() -> Outcome {
    let s = FRAC_1_SQRT_2;
    let c = |re: f64| C64::new(re, 0.0);
    let u_cnot = CMatrix::from_row_slice(
        4,
        4,
        &[ONE, ZERO, ZERO, ZERO, ZERO, ONE, ZERO, ZERO, ZERO, ZERO, ZERO, ONE, ZERO, ZERO, ONE, ZERO],
    );
    let u_had = CMatrix::from_row_slice(2, 2, &[c(s), c(s), c(s), c(-s)]);
    let u_90y = CMatrix::from_row_slice(2, 2, &[c(s), c(-s), c(s), c(s)]);

    let mut worst: f64 = 0.0;
    for j in [215.0, -120.0] {
        let sys = pair(j);
        let u = logical_propagator(&compile_gate(&Gate::cnot(0, 1), &sys).map_err(e)?, &sys, &SimOptions::default())
            .map_err(e)?;
        let err = phase_aligned_distance(&u, &u_cnot);
        ensure(err < 1e-9, || format!("CNOT (J={j}) error {err:.2e}"))?;
        worst = worst.max(err);
    }
    let one = SpinSystem::new(vec![80.0]).unwrap();
    let u = logical_propagator(&compile_gate(&Gate::Hadamard(0), &one).map_err(e)?, &one, &SimOptions::default())
        .map_err(e)?;
    let err = phase_aligned_distance(&u, &u_had);
    ensure(err < 1e-9, || format!("Hadamard error {err:.2e}"))?;
    worst = worst.max(err);

    let had = Gate::Hadamard(0).matrix(1).map_err(e)?;
    let ry90 = Gate::ry(0, 90.0).matrix(1).map_err(e)?;
    let ry180 = Gate::ry(0, 180.0).matrix(1).map_err(e)?;
    ensure(frobenius(&(&had - &u_had)) < 1e-12, || "Hadamard matrix differs from the printed one".into())?;
    ensure(frobenius(&(&ry90 - &u_90y)) < 1e-12, || "90y matrix differs from the printed one".into())?;
    ensure(frobenius(&(&had * &had - CMatrix::identity(2, 2))) < 1e-12, || "Had² ≠ I".into())?;
    ensure(frobenius(&(&ry90 * &ry90 - &ry180)) < 1e-12, || "(90y)² ≠ 180y".into())?;
    Ok(format!("max sequence error {worst:.1e}"))
}

fn fft_qft_examples() -> Outcome {
    let i = linalg::I;
    let ones = |idx: &[usize]| {
        let mut v = vec![ZERO; 8];
        for &k in idx {
            v[k] = ONE;
        }
        v
    };
    let examples: Vec<(&str, Vec<C64>, Vec<C64>)> = vec![
        ("a", ones(&[0]), vec![ONE; 8]),
        ("b", ones(&[0, 4]), ones(&[0, 2, 4, 6])),
        ("c", ones(&[0, 2, 4, 6]), ones(&[0, 4])),
        ("d", vec![ONE; 8], ones(&[0])),
        ("e", ones(&[0, 4]), ones(&[0, 2, 4, 6])),
        ("f", ones(&[1, 5]), vec![ONE, ZERO, -i, ZERO, -ONE, ZERO, i, ZERO]),
        ("g", ones(&[2, 6]), vec![ONE, ZERO, -ONE, ZERO, ONE, ZERO, -ONE, ZERO]),
        ("h", ones(&[3, 7]), vec![ONE, ZERO, i, ZERO, -ONE, ZERO, -i, ZERO]),
    ];
    let q = qft_matrix(8, Convention::Negative).map_err(e)?;
    let mut worst: f64 = 0.0;
    for (name, input, expected) in &examples {
        let by_ref = rescale_by_first_nonzero(&fft_reference(input, Convention::Negative), 1e-9);
        let by_matrix: Vec<C64> = (&q * nalgebra::DVector::from_column_slice(input)).iter().copied().collect();
        let by_matrix = rescale_by_first_nonzero(&by_matrix, 1e-9);
        for (got, want) in by_ref.iter().chain(&by_matrix).zip(expected.iter().chain(expected)) {
            let err = (got - want).norm();
            ensure(err < 1e-10, || format!("example ({name}) element error {err:.2e}"))?;
            worst = worst.max(err);
        }
    }
    for r in [1usize, 2, 4, 8] {
        for shift in 0..r {
            let input: Vec<C64> = (0..8).map(|j| if j % r == shift { ONE } else { ZERO }).collect();
            let out: Vec<C64> = (&q * nalgebra::DVector::from_column_slice(&input)).iter().copied().collect();
            for (k, y) in out.iter().enumerate() {
                let on_support = k % (8 / r) == 0;
                ensure(on_support == (y.norm() > 1e-10), || format!("r={r} shift={shift}: output {k} = {y}"))?;
            }
        }
    }
    Ok(format!("8 examples, max error {worst:.1e}; period inversion exhaustive for N=8"))
}

fn shor_worked_example() -> Outcome {
    let start = Instant::now();
    let table = (0..8).map(|x| if x % 2 == 0 { 3 } else { 1 }).collect();
    let p = PeriodFinding::from_table(table, 3, 2).map_err(e)?;
    let result = algorithms::period_find(&p, RunMode::Ensemble).map_err(e)?;
    let mut worst: f64 = 0.0;
    for (k, prob) in result.distribution.iter().enumerate() {
        let want = if k == 0 || k == 4 { 0.5 } else { 0.0 };
        worst = worst.max((prob - want).abs());
    }
    ensure(worst < 1e-10, || format!("distribution error {worst:.2e}"))?;
    ensure(algorithms::recover_period(4, 8, 8) == Some(2), || "recover_period(4, 8) ≠ 2".into())?;
    ensure(result.period == Some(2), || format!("period {:?}", result.period))?;
    let deferred = algorithms::period_distribution(&p, true).map_err(e)?;
    let gap = deferred.iter().zip(&result.distribution).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(gap < 1e-10, || format!("deferred-measurement gap {gap:.2e}"))?;
    within(start.elapsed(), 1.0)?;
    Ok(format!("distribution error {worst:.1e}, deferred gap {gap:.1e}"))
}

/// Register-1 distribution by direct summation over the function's level sets.
fn period_oracle(table: &[usize], big_n: usize) -> Vec<f64> {
    let levels: std::collections::BTreeSet<usize> = table.iter().copied().collect();
    (0..big_n)
        .map(|k| {
            levels
                .iter()
                .map(|&y| {
                    let amp: C64 = (0..big_n)
                        .filter(|&x| table[x] == y)
                        .map(|x| C64::from_polar(1.0, -2.0 * PI * (x * k) as f64 / big_n as f64))
                        .sum();
                    amp.norm_sqr()
                })
                .sum::<f64>()
                / (big_n * big_n) as f64
        })
        .collect()
}

fn factoring_end_to_end() -> Outcome {
    let start = Instant::now();
    let p = PeriodFinding::modular_exponent(15, 7, 8, 4).map_err(e)?;
    let oracle = period_oracle(&p.table, 256);
    let ens = algorithms::period_find(&p, RunMode::Ensemble).map_err(e)?;
    let gap = oracle.iter().zip(&ens.distribution).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(gap < 1e-10, || format!("distribution differs from direct summation by {gap:.2e}"))?;
    for (k, prob) in ens.distribution.iter().enumerate() {
        ensure(k % 64 == 0 || *prob < 1e-10, || format!("mass {prob} off the multiples of 64 at {k}"))?;
    }
    // outcomes 64 and 192 give r = 4; 128 gives 2, which fails 7² ≡ 1 (mod 15)
    let exact = oracle[64] + oracle[192];
    ensure(ens.period == Some(4), || format!("ensemble period {:?}", ens.period))?;
    ensure(ens.factors == Some((3, 5)), || format!("ensemble factors {:?}", ens.factors))?;
    ensure(ens.success_probability >= exact - 1e-10, || {
        format!("success probability {} below exact {exact}", ens.success_probability)
    })?;
    let mode = RunMode::Sampled { shots: 16, seed: 7 };
    let a = algorithms::period_find(&p, mode).map_err(e)?;
    let b = algorithms::period_find(&p, mode).map_err(e)?;
    ensure(a.samples == b.samples, || "sampled mode not reproducible".into())?;
    ensure(a.period == Some(4) && a.factors == Some((3, 5)), || format!("sampled {:?} {:?}", a.period, a.factors))?;
    within(start.elapsed(), 30.0)?;
    Ok(format!("r=4, factors 3×5, success probability {:.6} (exact {exact:.6})", ens.success_probability))
}

fn rational_thermal(n: usize) -> Vec<Rational64> {
    (0..dim(n))
        .map(|x| {
            (0..n).map(|s| if x >> (n - 1 - s) & 1 == 0 { Rational64::from(1) } else { Rational64::from(-1) }).sum()
        })
        .collect()
}

fn effective_pure_states() -> Outcome {
    for n in [2usize, 3] {
        let sys = SpinSystem::new(vec![0.0; n]).unwrap();
        let t = prep::temporal_average(&sys, 0).map_err(e)?;
        let thermal = rational_thermal(n);
        let mut total = vec![Rational64::from(0); dim(n)];
        for (map, circuit) in t.maps.iter().zip(&t.circuits) {
            for x in 0..dim(n) {
                total[map[x]] += thermal[x];
                let mut psi = StateVector::basis(n, x).map_err(e)?;
                circuit.apply_vec(&mut psi).map_err(e)?;
                ensure((psi.probabilities()[map[x]] - 1.0).abs() < 1e-12, || {
                    format!("circuit disagrees with map at {x}")
                })?;
            }
        }
        let others = total[1];
        ensure(total[1..].iter().all(|&v| v == others), || format!("n={n}: non-target populations differ {total:?}"))?;
        ensure(total[0] == -others * Rational64::from(dim(n) as i64 - 1), || format!("n={n}: {total:?} not pure"))?;
        ensure(total[0] > Rational64::from(0), || format!("n={n}: target population not positive"))?;
        let bound = (dim(n) - 1).div_ceil(n);
        ensure(t.experiments() >= bound, || format!("n={n}: {} experiments beat the bound {bound}", t.experiments()))?;
        let cost = prep::prep_cost(Scheme::Temporal, n).map_err(e)?;
        ensure(cost.lower_bound == bound && cost.experiments == t.experiments(), || format!("n={n}: cost {cost:?}"))?;
    }

    let sys3 = SpinSystem::new(vec![0.0; 3]).unwrap();
    let (circuit, label) = prep::logical_label(&sys3).map_err(e)?;
    let thermal = DensityMatrix::thermal(&sys3);
    let a = thermal.populations()[0] / 3.0;
    let before: Vec<f64> = thermal.populations().iter().map(|p| p / a).collect();
    let after: Vec<f64> = circuit.apply(&thermal).map_err(e)?.populations().iter().map(|p| p / a).collect();
    let close = |v: &[f64], w: &[f64]| v.iter().zip(w).all(|(x, y)| (x - y).abs() < 1e-12);
    ensure(close(&before, &[3., 1., 1., -1., 1., -1., -1., -3.]), || format!("thermal populations {before:?}"))?;
    ensure(close(&after, &[3., -1., -1., -1., 1., 1., 1., -3.]), || format!("rearranged populations {after:?}"))?;
    ensure(label.condition_spin == 0 && label.condition_value == 0, || format!("{label:?}"))?;

    let mut spatial_worst: f64 = 0.0;
    let (iz, sz) = (spin_axis(2, 0, Axis::Z), spin_axis(2, 1, Axis::Z));
    let target = &iz + &sz + &iz * &sz * C64::new(2.0, 0.0);
    for sys in [pair(215.0), pair(-120.0)] {
        let out = prep::spatial_average(&sys).map_err(e)?;
        let m = out.state.matrix();
        let scale = linalg::trace(&(m * &target)).re / linalg::trace(&(&target * &target)).re;
        let residual = frobenius(&(m - &target * C64::new(scale, 0.0))) / frobenius(&target);
        ensure(scale.abs() > 1e-3, || "spatial averaging output vanished".into())?;
        ensure(residual < 1e-8, || format!("spatial residual {residual:.2e}"))?;
        spatial_worst = spatial_worst.max(residual);
    }
    Ok(format!("temporal exact for n=2,3; labeling matches; spatial residual {spatial_worst:.1e}"))
}

fn resolved_system(n: usize) -> SpinSystem {
    let offsets = [-380.0, -130.0, 120.0, 370.0];
    let couplings = [(0, 1, 8.0), (0, 2, 12.0), (0, 3, 16.0), (1, 2, 16.0), (1, 3, 12.0), (2, 3, 8.0)];
    let mut sys = SpinSystem::new(offsets[..n].to_vec()).unwrap();
    for &(a, b, j) in couplings.iter().filter(|(a, b, _)| *a < n && *b < n) {
        sys = sys.with_coupling(a, b, j).unwrap();
    }
    sys
}

fn spectral_signature() -> Outcome {
    let mut checked = 0;
    for n in 2..=4 {
        let sys = resolved_system(n);
        for s in 0..dim(n) {
            let rho = DensityMatrix::effective_pure_target(n, s).map_err(e)?;
            for r in readout::read_out(&rho, &sys, &ReadoutOptions::default()).map_err(e)? {
                let present: Vec<_> = r.lines.iter().filter(|l| l.present).collect();
                ensure(present.len() == 1, || format!("n={n} state {s} spin {}: {} lines", r.spin, present.len()))?;
                let expected: String = (0..n)
                    .filter(|&q| q != r.spin)
                    .map(|q| if s >> (n - 1 - q) & 1 == 0 { '0' } else { '1' })
                    .collect();
                ensure(present[0].label() == expected, || {
                    format!("n={n} state {s} spin {}: line {} expected {expected}", r.spin, present[0].label())
                })?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} multiplets with a single line"))
}

fn grover_readout() -> Outcome {
    let start = Instant::now();
    let sys = pair(215.0);
    let opts = ReadoutOptions::default();
    let mut patterns = Vec::new();
    for marked in 0..4usize {
        let circuit = algorithms::grover_2q(marked).map_err(e)?;
        let seq = compile_circuit(&circuit, &sys, CompileOptions::default()).map_err(e)?;
        let input = DensityMatrix::effective_pure_target(2, 0).map_err(e)?;
        let out = simulate(&seq, &input, &sys, &SimOptions::default()).map_err(e)?;
        let read = readout::read_out(&out.logical_state(), &sys, &opts).map_err(e)?;
        let bits: Vec<u8> = read.iter().map(|r| r.verdict.bit().unwrap_or(9)).collect();
        let want = vec![(marked >> 1) as u8, (marked & 1) as u8];
        ensure(bits == want, || format!("marked {marked:02b}: absorption/emission gave {bits:?}"))?;
        for r in &read {
            let other = 1 - r.spin;
            let report = readout::decode_neighbors(&r.spectrum, &sys, r.spin, opts.threshold).map_err(e)?;
            ensure(report.determined == Some(vec![(other, want[other])]), || {
                format!("marked {marked:02b}: line position on spin {} gave {:?}", r.spin, report.determined)
            })?;
        }
        ensure(read.iter().all(|r| r.verdict != BitVerdict::Averaged), || "averaged verdict".into())?;
        patterns.push(format!("{}{}", want[0], want[1]));
    }
    within(start.elapsed(), 5.0)?;
    Ok(format!("decoded {}", patterns.join(" ")))
}

fn random_deviation(n: usize, rng: &mut impl Rng) -> DensityMatrix {
    let d = dim(n);
    let a = CMatrix::from_fn(d, d, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let h = (&a + a.adjoint()) * C64::new(0.5, 0.0);
    let mean = linalg::trace(&h) / C64::new(d as f64, 0.0);
    DensityMatrix::new(h - CMatrix::identity(d, d) * mean, Representation::Deviation).unwrap()
}

fn tomography_systems() -> Vec<SpinSystem> {
    vec![
        SpinSystem::new(vec![130.0]).unwrap(),
        pair(215.0),
        SpinSystem::new(vec![-310.0, 45.0, 260.0])
            .unwrap()
            .with_coupling(0, 1, 41.0)
            .unwrap()
            .with_coupling(1, 2, 67.0)
            .unwrap()
            .with_coupling(0, 2, 9.0)
            .unwrap(),
    ]
}

fn tomography_reconstruction() -> Outcome {
    let systems = tomography_systems();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for trial in 0..50 {
        let sys = &systems[trial % 3];
        let n = sys.n();
        let rho = random_deviation(n, &mut rng);
        let settings = readout::tomography_settings(n);
        let source = readout::simulated_source(&rho, sys, 1.0 / 1024.0, 256);
        let t = readout::tomography(sys, &settings, TomographyModel::Full, source).map_err(e)?;
        let d = t.state.distance(&rho).map_err(e)?.trace_distance;
        ensure(d < 1e-6, || format!("trial {trial} (n={n}): trace distance {d:.2e}"))?;
        ensure(t.experiments <= dim(2 * n), || format!("trial {trial}: {} experiments", t.experiments))?;
        worst = worst.max(d);
    }
    Ok(format!("50 states, max trace distance {worst:.1e}"))
}

fn spectator_phase(seq: &PulseSequence, sys: &SpinSystem) -> Result<f64, String> {
    let rho = DensityMatrix::new(spin_axis(2, 1, Axis::X), Representation::Deviation).map_err(e)?;
    let out = simulate(seq, &rho, sys, &SimOptions::default()).map_err(e)?;
    let minus = embed(&lowering(), &[1], 2);
    let after = out.logical_state().expectation(&minus).map_err(e)?;
    let before = rho.expectation(&minus).map_err(e)?;
    Ok((after / before).arg().to_degrees())
}

fn bloch_siegert() -> Outcome {
    let mut notes = Vec::new();
    for (delta, amp) in [(5000.0, 1000.0), (-8000.0, 1000.0), (6000.0, 500.0), (-10000.0, 800.0)] {
        let sys = SpinSystem::new(vec![0.0, delta]).unwrap().with_channels(vec![0, 0]).unwrap();
        let soft =
            PulseEvent::Soft { channel: 0, carrier_hz: 0.0, amplitude_hz: amp, duration_s: 1e-3, phase_deg: 0.0 };
        let mut seq = PulseSequence::new(&sys);
        seq.push(soft.clone()).map_err(e)?;
        let predicted = pulse::bloch_siegert_phase(&soft, delta).map_err(e)?;
        let measured = spectator_phase(&seq, &sys)?;
        let rel = ((measured - predicted) / predicted).abs();
        ensure(rel < 0.15, || format!("Δν={delta} A={amp}: measured {measured:.3}° vs {predicted:.3}°"))?;
        let fixed = pulse::compensate_bloch_siegert(&seq, &sys).map_err(e)?;
        let residual = spectator_phase(&fixed, &sys)?;
        ensure(residual.abs() * 10.0 <= measured.abs(), || format!("Δν={delta}: residual {residual:.3}°"))?;
        notes.push(format!("{:.0}%/{:.0}×", rel * 100.0, measured.abs() / residual.abs().max(1e-12)));
    }
    Ok(format!("deviation/reduction {}", notes.join(" ")))
}

fn error_rate_metric() -> Outcome {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for j in (50..=500).step_by(50) {
        for t2 in [1.0, 1.25, 1.5, 1.75, 2.0] {
            let sys =
                pair(j as f64).with_relaxation(0, 2.0 * t2, t2).unwrap().with_relaxation(1, 2.0 * t2, t2).unwrap();
            let rate = evolution::error_rate(&sys, 0, 1).map_err(e)?;
            ensure((rate - 1.0 / (2.0 * j as f64 * t2)).abs() < 1e-15, || format!("J={j} T2={t2}: {rate}"))?;
            let order = rate.log10().round();
            ensure(order == -3.0 || order == -2.0, || format!("J={j} T2={t2}: rate {rate} outside the band"))?;
            ensure(!evolution::threshold_check(rate), || format!("J={j} T2={t2}: passes the threshold"))?;
            lo = lo.min(rate);
            hi = hi.max(rate);
        }
    }
    ensure((evolution::error_rate_from(500.0, 1.0) - 1e-3).abs() < 1e-15, || "J=500, T2=1 is not 0.1%".into())?;
    ensure((evolution::error_rate_from(50.0, 1.0) - 1e-2).abs() < 1e-15, || "J=50, T2=1 is not 1%".into())?;
    ensure(evolution::threshold_check(1e-5) && evolution::threshold_check(5e-6), || "threshold rejects 1e-5".into())?;
    ensure(!evolution::threshold_check(1.1e-5), || "threshold accepts 1.1e-5".into())?;
    Ok(format!("rates {:.2}%–{:.2}%, threshold 10⁻⁵", lo * 100.0, hi * 100.0))
}

fn random_gate(rng: &mut impl Rng, n: usize) -> Gate {
    let a = rng.random_range(0..n);
    let b = (a + rng.random_range(1..n)) % n;
    let angle = rng.random_range(-270.0..270.0);
    match rng.random_range(0..7) {
        0 => Gate::rx(a, angle),
        1 => Gate::ry(a, angle),
        2 => Gate::rz(a, angle),
        3 => Gate::Hadamard(a),
        4 => Gate::cnot(a, b),
        5 => Gate::Inept { control: a, target: b },
        _ => Gate::ControlledPhase { a, b, angle_deg: angle },
    }
}

fn chain4() -> SpinSystem {
    SpinSystem::new(vec![12.0, -80.0, 145.0, 300.0])
        .unwrap()
        .with_coupling(0, 1, 130.0)
        .unwrap()
        .with_coupling(1, 2, -70.0)
        .unwrap()
        .with_coupling(2, 3, 45.0)
        .unwrap()
}

fn property_suites() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let sys = chain4();

    for _ in 0..40 {
        let n = rng.random_range(1..=4);
        let c = Circuit::from_gates(
            n,
            (0..rng.random_range(0..12))
                .map(|_| random_gate(&mut rng, n.max(2)))
                .filter(|g| g.validate(n).is_ok())
                .collect(),
        )
        .map_err(e)?;
        let u = c.unitary();
        ensure(linalg::unitarity_error(&u) < 1e-10, || "circuit unitary not unitary".into())?;
        let rho = random_deviation(n, &mut rng).with_identity();
        let out = c.apply(&rho).map_err(e)?;
        ensure((out.trace() - rho.trace()).norm() < 1e-10, || "trace not preserved".into())?;
        ensure(linalg::hermiticity_error(out.matrix()) < 1e-10, || "Hermiticity lost".into())?;
        let identity_part = |m: &DensityMatrix| m.to_product_operators().coefficients()[0];
        ensure((identity_part(&out) - identity_part(&rho)).abs() < 1e-12, || "identity component changed".into())?;
        let dev = out.deviation();
        let back = c.apply(&rho.deviation()).map_err(e)?;
        ensure(frobenius(&(dev.matrix() - back.matrix())) < 1e-10, || {
            "deviation does not commute with conjugation".into()
        })?;

        let po = rho.to_product_operators();
        ensure(frobenius(&(po.to_matrix() - rho.matrix())) < 1e-12, || "product-operator round trip".into())?;
    }

    let seq_sys = resolved_system(3);
    for _ in 0..10 {
        let mut seq = PulseSequence::new(&seq_sys);
        for _ in 0..6 {
            let event = match rng.random_range(0..3) {
                0 => PulseEvent::hard(
                    vec![rng.random_range(0..3)],
                    rng.random_range(0.0..360.0),
                    rng.random_range(0.0..360.0),
                ),
                1 => PulseEvent::delay(rng.random_range(0.0..0.02)),
                _ => PulseEvent::frame_shift(rng.random_range(0..3), rng.random_range(0.0..360.0)),
            };
            seq.push(event).map_err(e)?;
        }
        let (u, _) = sequence_propagator(&seq, &seq_sys, &SimOptions::default()).map_err(e)?;
        ensure(linalg::unitarity_error(&u) < 1e-10, || "sequence propagator not unitary".into())?;
        let rho = random_deviation(3, &mut rng).with_identity();
        let out = simulate(&seq, &rho, &seq_sys, &SimOptions::default()).map_err(e)?.state;
        ensure((out.trace() - rho.trace()).norm() < 1e-10, || "simulation changed the trace".into())?;
        ensure(linalg::hermiticity_error(out.matrix()) < 1e-10, || "simulation broke Hermiticity".into())?;
    }

    for (control, target) in [(0, 3), (3, 0), (0, 2), (1, 3)] {
        let routed = pulse::route_cnot(control, target, &sys).map_err(e)?;
        let want = Gate::cnot(control, target).matrix(4).map_err(e)?;
        let err = phase_aligned_distance(&routed.unitary(), &want);
        ensure(err < 1e-10, || format!("routed CNOT({control},{target}) disturbs spectators: {err:.2e}"))?;
    }

    let mut worst: f64 = 0.0;
    for case in 0..24 {
        let c = Circuit::from_gates(4, (0..rng.random_range(0..=20)).map(|_| random_gate(&mut rng, 4)).collect())
            .map_err(e)?;
        let seq = compile_circuit(&c, &sys, CompileOptions::default()).map_err(e)?;
        let err = verify_sequence(&seq, &c, &sys).map_err(e)?;
        ensure(err < 1e-8, || format!("compiler case {case}: error {err:.2e}"))?;
        worst = worst.max(err);
    }

    let soft_sys = SpinSystem::new(vec![0.0, 300.0]).unwrap().with_coupling(0, 1, 12.0).unwrap();
    let mut hard = PulseSequence::new(&soft_sys);
    hard.push(PulseEvent::hard(vec![0], 90.0, 0.0)).map_err(e)?;
    let u_hard = logical_propagator(&hard, &soft_sys, &SimOptions::default()).map_err(e)?;
    let mut errors = Vec::new();
    for amp in [1e3, 1e4, 1e5] {
        let mut soft = PulseSequence::new(&soft_sys);
        soft.push(PulseEvent::Soft {
            channel: 0,
            carrier_hz: 0.0,
            amplitude_hz: amp,
            duration_s: 0.25 / amp,
            phase_deg: 0.0,
        })
        .map_err(e)?;
        let opts = SimOptions { step_cap_s: required_step_cap(0.0, amp), ..SimOptions::default() };
        errors.push(phase_aligned_distance(&logical_propagator(&soft, &soft_sys, &opts).map_err(e)?, &u_hard));
    }
    ensure(errors.windows(2).all(|w| w[1] < w[0]) && errors[2] < 1e-2, || format!("soft→hard errors {errors:?}"))?;

    within(start.elapsed(), 300.0)?;
    Ok(format!("compiler max error {worst:.1e}; soft→hard {:.1e}→{:.1e}", errors[0], errors[2]))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("1 CNOT truth table", cnot_truth_table),
        ("2 gate-matrix fidelity", gate_matrix_fidelity),
        ("3 FFT/QFT examples", fft_qft_examples),
        ("4 Shor worked example", shor_worked_example),
        ("5 factoring 15", factoring_end_to_end),
        ("6 effective pure states", effective_pure_states),
        ("7 spectral signature", spectral_signature),
        ("8 Grover read-out", grover_readout),
        ("9 tomography", tomography_reconstruction),
        ("10 Bloch-Siegert", bloch_siegert),
        ("11 error-rate metric", error_rate_metric),
        ("12 property suites", property_suites),
    ];
    let mut failures = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] {name}: {detail} ({secs:.2}s)"),
            Err(why) => {
                failures += 1;
                println!("[FAIL] {name}: {why} ({secs:.2}s)");
            }
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
