use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use nmrqc_core::algorithms::{self, PeriodFinding, RunMode};
use nmrqc_core::gates::{self, fft_reference};
use nmrqc_core::linalg::{dim, C64};
use nmrqc_core::prep::{self, Scheme};
use nmrqc_core::pulse::{compile_circuit, verify_sequence, CompileOptions};
use nmrqc_core::readout::{self, ReadoutOptions, SpinReadout, TomographyModel};
use nmrqc_core::{
    simulate, Circuit, Convention, DensityMatrix, Error, Gate, PulseEvent, PulseSequence, Result, SimOptions,
    SpinSystem,
};

const DEFAULT_SEED: u64 = 20_011;

#[derive(Parser)]
#[command(name = "nmrqc", version, about = "Liquid-state NMR quantum computing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve a state under a pulse sequence and print the final state and frames.
    Simulate {
        /// Molecule config (TOML).
        #[arg(long)]
        system: PathBuf,
        /// Pulse sequence file.
        #[arg(long)]
        sequence: PathBuf,
        /// Initial state file; thermal equilibrium when omitted.
        #[arg(long)]
        state: Option<PathBuf>,
        /// Apply T1/T2 relaxation during delays.
        #[arg(long)]
        relax: bool,
        /// Replace soft pulses by ideal centred rotations.
        #[arg(long)]
        ideal: bool,
        /// Write the state after every event into this directory.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Lower a circuit to a pulse sequence.
    Compile {
        /// Molecule config; a built-in test molecule when omitted.
        #[arg(long)]
        system: Option<PathBuf>,
        /// Circuit file or built-in name (cnot01, bell, qft3, had0).
        #[arg(long)]
        circuit: String,
        /// Check the sequence propagator against the circuit unitary.
        #[arg(long)]
        verify: bool,
        /// Skip refocusing of inactive couplings.
        #[arg(long)]
        no_refocus: bool,
        /// Fail instead of routing gates between uncoupled spins.
        #[arg(long)]
        no_route: bool,
    },
    /// Prepare an effective pure state from thermal equilibrium.
    Prepare {
        #[arg(long)]
        system: Option<PathBuf>,
        /// temporal, spatial or logical.
        #[arg(long)]
        scheme: String,
        /// Target basis state index.
        #[arg(long, default_value_t = 0)]
        target: usize,
        /// Spin count of the built-in molecule when --system is omitted.
        #[arg(long, default_value_t = 2)]
        spins: usize,
    },
    /// Run an algorithm end to end.
    Run {
        #[arg(long)]
        system: Option<PathBuf>,
        #[arg(long, value_enum)]
        algorithm: Algorithm,
        /// Comma-separated key=value list: shor takes m, a, n1, n2 or table;
        /// grover takes marked; dj takes f (truth table such as 0,1,1,0 written 0110).
        #[arg(long, default_value = "")]
        params: String,
        #[arg(long, value_enum, default_value_t = Mode::Ensemble)]
        mode: Mode,
        #[arg(long, default_value_t = 100)]
        shots: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Compile and simulate pulses instead of applying gate matrices.
        #[arg(long)]
        pulse_level: bool,
        /// Directory for spectrum and line-table exports.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulated spectra, line table and bit verdicts of a state.
    Readout {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        state: PathBuf,
        /// Spins to read, e.g. 0,2; all when omitted.
        #[arg(long, value_delimiter = ',')]
        spins: Vec<usize>,
        #[arg(long, default_value_t = 1.0 / 1024.0)]
        dwell: f64,
        #[arg(long, default_value_t = 2048)]
        npoints: usize,
        /// Directory for FID and spectrum CSV files.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reconstruct the state produced by a circuit from simulated read-outs.
    Tomography {
        #[arg(long)]
        system: Option<PathBuf>,
        #[arg(long)]
        circuit: String,
        /// Input state; the effective pure |0…0⟩ deviation when omitted.
        #[arg(long)]
        state: Option<PathBuf>,
        #[arg(long, default_value_t = 256)]
        npoints: usize,
    },
    /// Reference discrete Fourier transform of a vector.
    Fft {
        /// Exponent sign, + or -.
        #[arg(long, default_value = "-", allow_hyphen_values = true)]
        convention: String,
        /// One value per line: `re` or `re im`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Norm::Rescaled)]
        norm: Norm,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Algorithm {
    Shor,
    Grover,
    Dj,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Ensemble,
    Sampled,
}

#[derive(Clone, Copy, ValueEnum)]
enum Norm {
    /// Divide by the first nonzero output element.
    Rescaled,
    /// The 1/√N-normalized transform.
    Unitary,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Fully coupled test molecule with resolved multiplets for up to four spins.
fn builtin_system(n: usize) -> Result<SpinSystem> {
    match n {
        0 => Err(Error::InvalidArgument("no spins".into())),
        1 => SpinSystem::new(vec![100.0]),
        2 => SpinSystem::new(vec![-200.0, 250.0])?.with_coupling(0, 1, 215.0),
        _ => {
            let offsets = (0..n).map(|s| -400.0 + 800.0 * s as f64 / (n - 1) as f64).collect();
            let mut sys = SpinSystem::new(offsets)?;
            for i in 0..n {
                for j in i + 1..n {
                    let j_hz =
                        if n <= 4 { [8.0, 12.0, 16.0][(i + j - 1) % 3] } else { 20.0 + 10.0 * ((i + j) % 5) as f64 };
                    sys = sys.with_coupling(i, j, j_hz)?;
                }
            }
            Ok(sys)
        }
    }
}

fn load_system(path: Option<&Path>, n: usize) -> Result<SpinSystem> {
    match path {
        Some(p) => SpinSystem::load(p),
        None => builtin_system(n),
    }
}

fn builtin_circuit(name: &str) -> Option<Result<Circuit>> {
    let c = match name {
        "cnot01" => Circuit::from_gates(2, vec![Gate::cnot(0, 1)]),
        "bell" => Circuit::from_gates(2, vec![Gate::Hadamard(0), Gate::cnot(0, 1)]),
        "qft3" => Circuit::from_gates(3, vec![Gate::Qft { spins: vec![0, 1, 2], convention: Convention::Negative }]),
        "had0" => Circuit::from_gates(1, vec![Gate::Hadamard(0)]),
        _ => return None,
    };
    Some(c)
}

fn load_circuit(spec: &str) -> Result<Circuit> {
    match builtin_circuit(spec) {
        Some(c) => c,
        None => Circuit::parse(&read(Path::new(spec))?),
    }
}

fn check_size(sys: &SpinSystem, n: usize, what: &str) -> Result<()> {
    if sys.n() == n {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{what} acts on {n} spins but the system has {}", sys.n())))
    }
}

fn frames_line(frames: &[f64]) -> String {
    let f: Vec<String> = frames.iter().map(|v| format!("{v:?}")).collect();
    format!("FRAMES {}\n", f.join(" "))
}

fn cmd_simulate(
    system: &Path,
    sequence: &Path,
    state: Option<&Path>,
    relax: bool,
    ideal: bool,
    trajectory: Option<&Path>,
) -> Result<String> {
    let sys = SpinSystem::load(system)?;
    let seq = PulseSequence::parse(&read(sequence)?)?;
    let rho = match state {
        Some(p) => DensityMatrix::from_text(&read(p)?)?,
        None => DensityMatrix::thermal(&sys),
    };
    let base = if ideal { SimOptions::ideal() } else { SimOptions::default() };
    let opts = SimOptions { relaxation: relax, trajectory: trajectory.is_some(), ..base };
    let result = simulate(&seq, &rho, &sys, &opts)?;
    if let Some(dir) = trajectory {
        ensure_dir(dir)?;
        for (k, step) in result.trajectory.iter().enumerate() {
            write(&dir.join(format!("step_{k:04}.txt")), &step.to_text())?;
        }
    }
    Ok(format!("{}{}", result.state.to_text(), frames_line(&result.frames_deg)))
}

fn cmd_compile(system: Option<&Path>, circuit: &str, verify: bool, refocus: bool, route: bool) -> Result<String> {
    let c = load_circuit(circuit)?;
    let sys = load_system(system, c.n())?;
    check_size(&sys, c.n(), "circuit")?;
    let seq = compile_circuit(&c, &sys, CompileOptions { refocus, route })?;
    let mut out = seq.to_text();
    if verify {
        let err = verify_sequence(&seq, &c, &sys)?;
        let _ = writeln!(out, "# fidelity_error {err:e}");
    }
    Ok(out)
}

fn cmd_prepare(system: Option<&Path>, scheme: &str, target: usize, spins: usize) -> Result<String> {
    let scheme: Scheme = scheme.parse()?;
    let sys = load_system(system, spins)?;
    let n = sys.n();
    if target >= dim(n) {
        return Err(Error::IndexOutOfRange { index: target, len: dim(n) });
    }
    let flips: Vec<usize> = (0..n).filter(|&s| target >> (n - 1 - s) & 1 == 1).collect();
    let mut out = String::new();
    match scheme {
        Scheme::Temporal => {
            let t = prep::temporal_average(&sys, target)?;
            let _ = writeln!(out, "experiments {}", t.experiments());
            for (k, c) in t.circuits.iter().enumerate() {
                let _ = writeln!(out, "# experiment {k}");
                out.push_str(&c.to_text());
            }
            let _ = writeln!(out, "# combined state (scale {:?}, residual {:e})", t.scale, t.residual);
            out.push_str(&t.combined.to_text());
        }
        Scheme::Spatial => {
            let s = prep::spatial_average(&sys)?;
            let mut seq = s.sequence.clone();
            let mut state = s.state.clone();
            for &q in &flips {
                seq.push(PulseEvent::hard(vec![q], 180.0, 0.0))?;
                state = state.conjugate_local(&[q], &Gate::not(0).local_matrix());
            }
            out.push_str(&seq.to_text());
            let _ = writeln!(out, "# output state (scale {:?}, residual {:e})", s.scale, s.residual);
            out.push_str(&state.to_text());
        }
        Scheme::LogicalLabeling => {
            let (mut circuit, label) = prep::logical_label(&sys)?;
            let pure = label.pure_spins.len();
            if target >= dim(pure) {
                return Err(Error::InvalidArgument(format!(
                    "logical labeling leaves {pure} pure spins; target {target} too large"
                )));
            }
            for (k, &q) in label.pure_spins.iter().enumerate() {
                if target >> (pure - 1 - k) & 1 == 1 {
                    circuit.push(Gate::not(q))?;
                }
            }
            out.push_str(&circuit.to_text());
            let state = circuit.apply(&DensityMatrix::thermal(&sys))?;
            let _ = writeln!(
                out,
                "# condition spin {} = |{}>, pure spins {:?}",
                label.condition_spin, label.condition_value, label.pure_spins
            );
            out.push_str(&state.to_text());
            let _ = writeln!(out, "# conditional block");
            out.push_str(&label.conditional_block(&state)?.to_text());
        }
    }
    let cost = prep::prep_cost(scheme, n)?;
    let _ = write!(out, "# cost signal_scale {:?} experiments {}", cost.signal_scale, cost.experiments);
    if scheme == Scheme::Temporal {
        let _ = write!(out, " lower_bound {}", cost.lower_bound);
    }
    out.push('\n');
    Ok(out)
}

fn parse_params(text: &str) -> Result<BTreeMap<String, String>> {
    text.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (k, v) =
                p.split_once('=').ok_or_else(|| Error::InvalidArgument(format!("parameter `{p}` is not key=value")))?;
            Ok((k.trim().to_ascii_lowercase(), v.trim().to_string()))
        })
        .collect()
}

fn param<T: std::str::FromStr>(params: &BTreeMap<String, String>, key: &str, default: T) -> Result<T> {
    match params.get(key) {
        Some(v) => v.parse().map_err(|_| Error::InvalidArgument(format!("bad value `{v}` for {key}"))),
        None => Ok(default),
    }
}

fn readout_report(read: &[SpinReadout], out: Option<&Path>, written: &mut Vec<PathBuf>) -> Result<String> {
    let mut text = String::new();
    let bits: String = read.iter().map(|r| r.verdict.symbol()).collect();
    let _ = writeln!(text, "bits {bits}");
    text.push_str(&readout::lines_csv(read));
    if let Some(dir) = out {
        ensure_dir(dir)?;
        for r in read {
            let path = dir.join(format!("spectrum_spin{}.csv", r.spin));
            write(&path, &r.spectrum.to_csv())?;
            written.push(path);
        }
        let path = dir.join("lines.csv");
        write(&path, &readout::lines_csv(read))?;
        written.push(path);
    }
    Ok(text)
}

/// Final state of `circuit` on the effective pure `|0…0⟩`, by gate matrices or
/// by compiled pulses.
fn execute(circuit: &Circuit, sys: &SpinSystem, pulse_level: bool) -> Result<DensityMatrix> {
    let input = DensityMatrix::effective_pure_target(circuit.n(), 0)?;
    if pulse_level {
        let seq = compile_circuit(circuit, sys, CompileOptions::default())?;
        Ok(simulate(&seq, &input, sys, &SimOptions::default())?.logical_state())
    } else {
        circuit.apply(&input)
    }
}

fn histogram(rho: &DensityMatrix, register: &[usize], mode: Mode, shots: usize, seed: u64) -> Result<String> {
    let m = match mode {
        Mode::Ensemble => readout::measure(rho, register, readout::MeasureMode::Ensemble)?,
        Mode::Sampled => readout::measure(rho, register, readout::MeasureMode::Sampled { shots, seed })?,
    };
    let width = register.len();
    let mut text = String::new();
    if m.samples.is_empty() {
        for (k, p) in m.distribution.iter().enumerate().filter(|(_, &p)| p > 1e-12) {
            let _ = writeln!(text, "outcome {k:0width$b} {p:.12}");
        }
    } else {
        let mut counts = BTreeMap::new();
        for &k in &m.samples {
            *counts.entry(k).or_insert(0usize) += 1;
        }
        for (k, c) in counts {
            let _ = writeln!(text, "outcome {k:0width$b} {c}");
        }
    }
    Ok(text)
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    system: Option<&Path>,
    algorithm: Algorithm,
    params: &str,
    mode: Mode,
    shots: usize,
    seed: u64,
    pulse_level: bool,
    out: Option<&Path>,
) -> Result<String> {
    let params = parse_params(params)?;
    let mut written = Vec::new();
    let mut text = String::new();
    match algorithm {
        Algorithm::Shor => {
            let problem = match params.get("table") {
                Some(t) => {
                    let table = t
                        .split(|c| c == ' ' || c == ';' || c == ':')
                        .filter(|v| !v.is_empty())
                        .map(|v| {
                            v.parse::<usize>().map_err(|_| Error::InvalidArgument(format!("bad table entry `{v}`")))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    PeriodFinding::from_table(table, param(&params, "n1", 3)?, param(&params, "n2", 2)?)?
                }
                None => PeriodFinding::modular_exponent(
                    param(&params, "m", 15)?,
                    param(&params, "a", 7)?,
                    param(&params, "n1", 8)?,
                    param(&params, "n2", 4)?,
                )?,
            };
            if pulse_level {
                return Err(Error::Unsupported("period finding runs at circuit level only".into()));
            }
            let run_mode = match mode {
                Mode::Ensemble => RunMode::Ensemble,
                Mode::Sampled => RunMode::Sampled { shots, seed },
            };
            text.push_str(&algorithms::period_find(&problem, run_mode)?.to_text());
        }
        Algorithm::Grover => {
            let marked: usize = param(&params, "marked", 0)?;
            let circuit = algorithms::grover_2q(marked)?;
            let sys = load_system(system, 2)?;
            check_size(&sys, 2, "Grover search")?;
            let rho = execute(&circuit, &sys, pulse_level)?;
            text.push_str(&histogram(&rho, &[0, 1], mode, shots, seed)?);
            let read = readout::read_out(&rho, &sys, &ReadoutOptions::default())?;
            text.push_str(&readout_report(&read, out, &mut written)?);
        }
        Algorithm::Dj => {
            let f = params.get("f").map(String::as_str).unwrap_or("0000");
            let table = f
                .chars()
                .filter(|c| !matches!(c, ',' | ' ' | ';'))
                .map(|c| {
                    c.to_digit(2)
                        .map(|d| d as u8)
                        .ok_or_else(|| Error::InvalidArgument(format!("bad truth-table digit `{c}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            let circuit = algorithms::deutsch_jozsa(&table)?;
            let n = circuit.n();
            let sys = load_system(system, n)?;
            check_size(&sys, n, "Deutsch-Jozsa")?;
            let rho = execute(&circuit, &sys, pulse_level)?;
            let query: Vec<usize> = (0..n - 1).collect();
            let constant = readout::measure(&rho, &query, readout::MeasureMode::Ensemble)?.distribution[0] > 0.5;
            let _ = writeln!(text, "verdict {}", if constant { "constant" } else { "balanced" });
            text.push_str(&histogram(&rho, &query, mode, shots, seed)?);
            let read = readout::read_out(&rho, &sys, &ReadoutOptions::default())?;
            text.push_str(&readout_report(&read, out, &mut written)?);
        }
    }
    for p in written {
        let _ = writeln!(text, "# wrote {}", p.display());
    }
    Ok(text)
}

fn cmd_readout(
    system: &Path,
    state: &Path,
    spins: &[usize],
    dwell: f64,
    npoints: usize,
    out: Option<&Path>,
) -> Result<String> {
    let sys = SpinSystem::load(system)?;
    let rho = DensityMatrix::from_text(&read(state)?)?;
    let spins: Vec<usize> = if spins.is_empty() { (0..sys.n()).collect() } else { spins.to_vec() };
    let opts = ReadoutOptions { dwell_s: dwell, npoints, ..ReadoutOptions::default() };
    let mut reads = Vec::new();
    let mut written = Vec::new();
    for &s in &spins {
        let (fid, r) = readout::read_out_spin(&rho, &sys, s, &opts)?;
        if let Some(dir) = out {
            ensure_dir(dir)?;
            let path = dir.join(format!("fid_spin{s}.csv"));
            write(&path, &fid.to_csv())?;
            written.push(path);
        }
        reads.push(r);
    }
    let mut text = readout_report(&reads, out, &mut written)?;
    for r in reads.iter().filter(|r| r.aliasing) {
        let _ = writeln!(text, "# warning: spin {} has lines outside the spectral window", r.spin);
    }
    for p in written {
        let _ = writeln!(text, "# wrote {}", p.display());
    }
    Ok(text)
}

fn cmd_tomography(system: Option<&Path>, circuit: &str, state: Option<&Path>, npoints: usize) -> Result<String> {
    let c = load_circuit(circuit)?;
    let sys = load_system(system, c.n())?;
    check_size(&sys, c.n(), "circuit")?;
    let input = match state {
        Some(p) => DensityMatrix::from_text(&read(p)?)?.deviation(),
        None => DensityMatrix::effective_pure_target(c.n(), 0)?,
    };
    let direct = c.apply(&input)?;
    let settings = readout::tomography_settings(c.n());
    let source = readout::simulated_source(&direct, &sys, 1.0 / 1024.0, npoints);
    let t = readout::tomography(&sys, &settings, TomographyModel::Full, source)?;
    let distance = t.state.distance(&direct)?.trace_distance;
    let mut out = t.state.to_text();
    let _ = writeln!(out, "# experiments {}", t.experiments);
    let _ = writeln!(out, "# condition_number {:e}", t.condition_number);
    let _ = writeln!(out, "# trace_distance {distance:e}");
    Ok(out)
}

fn parse_vector(text: &str) -> Result<Vec<C64>> {
    text.lines()
        .enumerate()
        .filter_map(|(k, raw)| {
            let line = raw.split('#').next().unwrap_or("").trim();
            (!line.is_empty()).then_some((k + 1, line))
        })
        .map(|(line_no, line)| {
            let err = |message: String| Error::Parse { line: line_no, message };
            let nums = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<f64>().map_err(|_| err(format!("bad number `{t}`"))))
                .collect::<Result<Vec<_>>>()?;
            match nums.as_slice() {
                [re] => Ok(C64::new(*re, 0.0)),
                [re, im] => Ok(C64::new(*re, *im)),
                _ => Err(err("expected `re` or `re im`".into())),
            }
        })
        .collect()
}

fn tidy(x: f64) -> f64 {
    let r = (x * 1e12).round() / 1e12;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn cmd_fft(convention: &str, input: &Path, norm: Norm) -> Result<String> {
    let conv: Convention = convention.parse()?;
    let x = parse_vector(&read(input)?)?;
    if x.is_empty() {
        return Err(Error::InvalidArgument("empty input vector".into()));
    }
    let y = fft_reference(&x, conv);
    let y = match norm {
        Norm::Unitary => y,
        Norm::Rescaled => gates::rescale_by_first_nonzero(&y, 1e-9),
    };
    let mut out = String::new();
    for v in y {
        let _ = writeln!(out, "{} {}", tidy(v.re), tidy(v.im));
    }
    Ok(out)
}

fn dispatch(cmd: Command) -> Result<String> {
    match cmd {
        Command::Simulate { system, sequence, state, relax, ideal, trajectory } => {
            cmd_simulate(&system, &sequence, state.as_deref(), relax, ideal, trajectory.as_deref())
        }
        Command::Compile { system, circuit, verify, no_refocus, no_route } => {
            cmd_compile(system.as_deref(), &circuit, verify, !no_refocus, !no_route)
        }
        Command::Prepare { system, scheme, target, spins } => cmd_prepare(system.as_deref(), &scheme, target, spins),
        Command::Run { system, algorithm, params, mode, shots, seed, pulse_level, out } => {
            cmd_run(system.as_deref(), algorithm, &params, mode, shots, seed, pulse_level, out.as_deref())
        }
        Command::Readout { system, state, spins, dwell, npoints, out } => {
            cmd_readout(&system, &state, &spins, dwell, npoints, out.as_deref())
        }
        Command::Tomography { system, circuit, state, npoints } => {
            cmd_tomography(system.as_deref(), &circuit, state.as_deref(), npoints)
        }
        Command::Fft { convention, input, norm } => cmd_fft(&convention, &input, norm),
    }
}

fn error_line(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            eprintln!("{}", error_line("usage", e.to_string().trim()));
            return ExitCode::from(2);
        }
    };
    match dispatch(cli.command) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            ExitCode::FAILURE
        }
    }
}
