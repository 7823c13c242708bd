//! Pulse-sequence IR, the circuit-to-pulse compiler, refocusing, routing and
//! Bloch–Siegert estimates.
//!
//! Phases of hard and soft pulses are written in each spin's software
//! rotating frame. The sequence keeps a running frame phase per spin: a
//! frame shift adds its angle, and every timed event adds `360·ν_s·t` degrees
//! for each spin. The simulator plays a hard pulse of logical phase `φ` on
//! spin `s` with physical phase `φ − F_s`, so the logical state is
//! `Rz(F)·ρ_physical·Rz(F)†`.

mod bloch_siegert;
mod compiler;
mod refocus;
mod routing;

use std::fmt::Write as _;

pub use bloch_siegert::{bloch_siegert_phase, compensate_bloch_siegert};
pub use compiler::{
    affine_permutation_circuit, compile_circuit, compile_gate, is_affine, verify_sequence, CompileOptions,
};
pub use refocus::{refocus, walsh_row};
pub use routing::{route_circuit, route_cnot};

use crate::error::{Error, Result};
use crate::spin_system::SpinSystem;

#[derive(Debug, Clone, PartialEq)]
pub enum PulseEvent {
    /// Ideal zero-duration rotation of every listed spin.
    Hard {
        spins: Vec<usize>,
        angle_deg: f64,
        phase_deg: f64,
    },
    /// Constant-amplitude pulse on one transmitter channel. `amplitude_hz` is
    /// the nutation rate, so the on-resonance flip angle is `360·A·d` degrees.
    Soft {
        channel: usize,
        carrier_hz: f64,
        amplitude_hz: f64,
        duration_s: f64,
        phase_deg: f64,
    },
    Delay {
        duration_s: f64,
    },
    /// Ideal gradient crusher (keeps zero-quantum coherences and populations).
    Crusher,
    /// Software z-rotation of one spin's frame.
    FrameShift {
        spin: usize,
        phase_deg: f64,
    },
}

impl PulseEvent {
    pub fn hard(spins: Vec<usize>, angle_deg: f64, phase_deg: f64) -> Self {
        PulseEvent::Hard { spins, angle_deg, phase_deg }
    }

    pub fn delay(duration_s: f64) -> Self {
        PulseEvent::Delay { duration_s }
    }

    pub fn frame_shift(spin: usize, phase_deg: f64) -> Self {
        PulseEvent::FrameShift { spin, phase_deg }
    }

    pub fn duration_s(&self) -> f64 {
        match self {
            PulseEvent::Soft { duration_s, .. } | PulseEvent::Delay { duration_s } => *duration_s,
            _ => 0.0,
        }
    }

    fn to_line(&self) -> String {
        match self {
            PulseEvent::Hard { spins, angle_deg, phase_deg } => {
                let list: Vec<String> = spins.iter().map(|s| s.to_string()).collect();
                format!("HARD spins={} angle_deg={angle_deg:?} phase_deg={phase_deg:?}", list.join(","))
            }
            PulseEvent::Soft { channel, carrier_hz, amplitude_hz, duration_s, phase_deg } => format!(
                "SOFT channel={channel} carrier_hz={carrier_hz:?} amp_hz={amplitude_hz:?} dur_s={duration_s:?} phase_deg={phase_deg:?}"
            ),
            PulseEvent::Delay { duration_s } => format!("DELAY dur_s={duration_s:?}"),
            PulseEvent::Crusher => "CRUSH".to_string(),
            PulseEvent::FrameShift { spin, phase_deg } => format!("FRAME spin={spin} phase_deg={phase_deg:?}"),
        }
    }
}

/// Ordered pulse events plus the running per-spin frame phases.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSequence {
    offsets_hz: Vec<f64>,
    channels: Vec<usize>,
    events: Vec<PulseEvent>,
    frames_deg: Vec<f64>,
}

fn wrap_deg(x: f64) -> f64 {
    let w = x.rem_euclid(360.0);
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

impl PulseSequence {
    pub fn new(sys: &SpinSystem) -> Self {
        let n = sys.n();
        Self {
            offsets_hz: sys.offsets_hz().to_vec(),
            channels: (0..n).map(|s| sys.channel_of(s)).collect(),
            events: Vec::new(),
            frames_deg: vec![0.0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.offsets_hz.len()
    }

    pub fn events(&self) -> &[PulseEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Final frame phase of each spin in degrees, wrapped to `[0, 360)`.
    pub fn frames_deg(&self) -> &[f64] {
        &self.frames_deg
    }

    pub fn duration_s(&self) -> f64 {
        self.events.iter().map(PulseEvent::duration_s).sum()
    }

    pub fn offsets_hz(&self) -> &[f64] {
        &self.offsets_hz
    }

    pub fn channels(&self) -> &[usize] {
        &self.channels
    }

    /// True if this sequence was built for a system with the same offsets and
    /// channel layout.
    pub fn matches(&self, sys: &SpinSystem) -> bool {
        self.offsets_hz == sys.offsets_hz() && (0..sys.n()).all(|s| self.channels[s] == sys.channel_of(s))
    }

    fn validate(&self, event: &PulseEvent) -> Result<()> {
        let n = self.n();
        let finite = |x: f64, what: &str| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{what} must be finite")))
            }
        };
        match event {
            PulseEvent::Hard { spins, angle_deg, phase_deg } => {
                if spins.is_empty() {
                    return Err(Error::InvalidArgument("hard pulse on no spins".into()));
                }
                for (i, &s) in spins.iter().enumerate() {
                    if s >= n {
                        return Err(Error::IndexOutOfRange { index: s, len: n });
                    }
                    if spins[..i].contains(&s) {
                        return Err(Error::InvalidArgument(format!("spin {s} repeated in hard pulse")));
                    }
                }
                finite(*angle_deg, "angle")?;
                finite(*phase_deg, "phase")?;
            }
            PulseEvent::Soft { channel, carrier_hz, amplitude_hz, duration_s, phase_deg } => {
                if !self.channels.contains(channel) {
                    return Err(Error::InvalidArgument(format!("no spin on channel {channel}")));
                }
                finite(*carrier_hz, "carrier")?;
                finite(*amplitude_hz, "amplitude")?;
                finite(*phase_deg, "phase")?;
                if !(duration_s.is_finite() && *duration_s >= 0.0) {
                    return Err(Error::InvalidArgument("durations must be nonnegative".into()));
                }
            }
            PulseEvent::Delay { duration_s } => {
                if !(duration_s.is_finite() && *duration_s >= 0.0) {
                    return Err(Error::InvalidArgument("durations must be nonnegative".into()));
                }
            }
            PulseEvent::Crusher => {}
            PulseEvent::FrameShift { spin, phase_deg } => {
                if *spin >= n {
                    return Err(Error::IndexOutOfRange { index: *spin, len: n });
                }
                finite(*phase_deg, "phase")?;
            }
        }
        Ok(())
    }

    pub fn push(&mut self, event: PulseEvent) -> Result<()> {
        self.validate(&event)?;
        advance_frames(&mut self.frames_deg, &self.offsets_hz, &event);
        self.events.push(event);
        Ok(())
    }

    pub fn extend(&mut self, other: &PulseSequence) -> Result<()> {
        if other.offsets_hz != self.offsets_hz || other.channels != self.channels {
            return Err(Error::InvalidArgument("sequences were built for different systems".into()));
        }
        for e in &other.events {
            self.push(e.clone())?;
        }
        Ok(())
    }

    /// Text form: header, one event per line, trailing frame report.
    ///
    /// ```text
    /// SPINS 2
    /// OFFSETS 0.0 500.0
    /// CHANNELS 0 1
    /// FRAME spin=0 phase_deg=90.0
    /// HARD spins=1 angle_deg=90.0 phase_deg=0.0
    /// DELAY dur_s=0.002325581395348837
    /// SOFT channel=0 carrier_hz=0.0 amp_hz=1000.0 dur_s=0.00025 phase_deg=0.0
    /// CRUSH
    /// FRAMES 90.0 270.0
    /// ```
    pub fn to_text(&self) -> String {
        let mut out = format!("SPINS {}\n", self.n());
        let offs: Vec<String> = self.offsets_hz.iter().map(|o| format!("{o:?}")).collect();
        let _ = writeln!(out, "OFFSETS {}", offs.join(" "));
        let chans: Vec<String> = self.channels.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(out, "CHANNELS {}", chans.join(" "));
        for e in &self.events {
            out.push_str(&e.to_line());
            out.push('\n');
        }
        let frames: Vec<String> = self.frames_deg.iter().map(|f| format!("{f:?}")).collect();
        let _ = writeln!(out, "FRAMES {}", frames.join(" "));
        out
    }

    /// Parses [`PulseSequence::to_text`] output. A trailing `FRAMES` line, when
    /// present, must agree with the recomputed frames.
    pub fn parse(text: &str) -> Result<Self> {
        let mut n: Option<usize> = None;
        let mut offsets: Option<Vec<f64>> = None;
        let mut channels: Option<Vec<usize>> = None;
        let mut seq: Option<PulseSequence> = None;
        let mut reported: Option<(usize, Vec<f64>)> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: line_no, message };
            if reported.is_some() {
                return Err(err("content after FRAMES".into()));
            }
            let mut tokens = line.split_whitespace();
            let keyword = tokens.next().unwrap_or_default().to_ascii_uppercase();
            let rest: Vec<&str> = tokens.collect();
            match keyword.as_str() {
                "SPINS" => {
                    n = Some(
                        rest.first().and_then(|t| t.parse().ok()).ok_or_else(|| err("expected `SPINS <n>`".into()))?,
                    );
                }
                "OFFSETS" => {
                    offsets = Some(
                        rest.iter()
                            .map(|t| t.parse::<f64>())
                            .collect::<std::result::Result<_, _>>()
                            .map_err(|e| err(e.to_string()))?,
                    );
                }
                "CHANNELS" => {
                    channels = Some(
                        rest.iter()
                            .map(|t| t.parse::<usize>())
                            .collect::<std::result::Result<_, _>>()
                            .map_err(|e| err(e.to_string()))?,
                    );
                }
                "FRAMES" => {
                    let f = rest
                        .iter()
                        .map(|t| t.parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|e| err(e.to_string()))?;
                    reported = Some((line_no, f));
                }
                _ => {
                    if seq.is_none() {
                        let count = n.ok_or_else(|| err("SPINS must precede events".into()))?;
                        let offsets_hz = offsets.clone().unwrap_or_else(|| vec![0.0; count]);
                        let chans = channels.clone().unwrap_or_else(|| (0..count).collect());
                        if offsets_hz.len() != count || chans.len() != count {
                            return Err(err(format!("OFFSETS/CHANNELS must list {count} values")));
                        }
                        seq = Some(PulseSequence {
                            offsets_hz,
                            channels: chans,
                            events: Vec::new(),
                            frames_deg: vec![0.0; count],
                        });
                    }
                    let event = parse_event(&keyword, &rest).map_err(err)?;
                    seq.as_mut().expect("initialized above").push(event).map_err(|e| err(e.to_string()))?;
                }
            }
        }
        let seq = match seq {
            Some(s) => s,
            None => {
                let count = n.ok_or(Error::Parse { line: 0, message: "missing SPINS line".into() })?;
                PulseSequence {
                    offsets_hz: offsets.unwrap_or_else(|| vec![0.0; count]),
                    channels: channels.unwrap_or_else(|| (0..count).collect()),
                    events: Vec::new(),
                    frames_deg: vec![0.0; count],
                }
            }
        };
        if let Some((line, frames)) = reported {
            let agrees = frames.len() == seq.n()
                && frames.iter().zip(&seq.frames_deg).all(|(a, b)| {
                    let d = (a - b).rem_euclid(360.0);
                    d.min(360.0 - d) < 1e-9
                });
            if !agrees {
                return Err(Error::Parse {
                    line,
                    message: format!("frame report {frames:?} disagrees with events {:?}", seq.frames_deg),
                });
            }
        }
        Ok(seq)
    }
}

/// Frame update for one event (degrees, wrapped).
pub(crate) fn advance_frames(frames: &mut [f64], offsets_hz: &[f64], event: &PulseEvent) {
    match event {
        PulseEvent::FrameShift { spin, phase_deg } => frames[*spin] = wrap_deg(frames[*spin] + phase_deg),
        PulseEvent::Delay { duration_s } | PulseEvent::Soft { duration_s, .. } => {
            for (f, nu) in frames.iter_mut().zip(offsets_hz) {
                *f = wrap_deg(*f + 360.0 * nu * duration_s);
            }
        }
        _ => {}
    }
}

fn parse_event(keyword: &str, args: &[&str]) -> std::result::Result<PulseEvent, String> {
    let mut fields = std::collections::BTreeMap::new();
    for a in args {
        let (k, v) = a.split_once('=').ok_or_else(|| format!("expected key=value, got `{a}`"))?;
        if fields.insert(k, v).is_some() {
            return Err(format!("duplicate field `{k}`"));
        }
    }
    let mut take = |k: &str| fields.remove(k).ok_or_else(|| format!("{keyword}: missing `{k}`"));
    let num = |v: &str| v.parse::<f64>().map_err(|_| format!("bad number `{v}`"));
    let idx = |v: &str| v.parse::<usize>().map_err(|_| format!("bad index `{v}`"));
    let event = match keyword {
        "HARD" => {
            let spins = take("spins")?.split(',').map(idx).collect::<std::result::Result<Vec<_>, _>>()?;
            PulseEvent::Hard { spins, angle_deg: num(take("angle_deg")?)?, phase_deg: num(take("phase_deg")?)? }
        }
        "SOFT" => PulseEvent::Soft {
            channel: idx(take("channel")?)?,
            carrier_hz: num(take("carrier_hz")?)?,
            amplitude_hz: num(take("amp_hz")?)?,
            duration_s: num(take("dur_s")?)?,
            phase_deg: num(take("phase_deg")?)?,
        },
        "DELAY" => PulseEvent::Delay { duration_s: num(take("dur_s")?)? },
        "CRUSH" => PulseEvent::Crusher,
        "FRAME" => PulseEvent::FrameShift { spin: idx(take("spin")?)?, phase_deg: num(take("phase_deg")?)? },
        other => return Err(format!("unknown event `{other}`")),
    };
    if let Some(k) = fields.keys().next() {
        return Err(format!("{keyword}: unexpected field `{k}`"));
    }
    Ok(event)
}
