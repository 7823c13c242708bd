use crate::error::{Error, Result};
use crate::evolution::reference_spin;
use crate::spin_system::SpinSystem;

use super::{PulseEvent, PulseSequence};

/// Second-order Bloch–Siegert phase (degrees) picked up by a spin at
/// `spectator_offset_hz` during a constant soft pulse:
/// `360·A²·d / (2Δν)` with `Δν` the spectator offset from the carrier.
pub fn bloch_siegert_phase(soft: &PulseEvent, spectator_offset_hz: f64) -> Result<f64> {
    let PulseEvent::Soft { carrier_hz, amplitude_hz, duration_s, .. } = *soft else {
        return Err(Error::InvalidArgument("Bloch-Siegert estimate needs a soft pulse".into()));
    };
    if amplitude_hz == 0.0 || duration_s == 0.0 {
        return Ok(0.0);
    }
    let delta = spectator_offset_hz - carrier_hz;
    if delta.abs() < amplitude_hz.abs() {
        return Err(Error::OnResonance(delta));
    }
    Ok(360.0 * amplitude_hz * amplitude_hz * duration_s / (2.0 * delta))
}

/// Copy of `seq` with a frame shift after every soft pulse that cancels the
/// estimated phase on each other spin of the driven channel.
pub fn compensate_bloch_siegert(seq: &PulseSequence, sys: &SpinSystem) -> Result<PulseSequence> {
    if !seq.matches(sys) {
        return Err(Error::InvalidArgument("pulse sequence was built for a different spin system".into()));
    }
    let mut out = PulseSequence::new(sys);
    for event in seq.events() {
        out.push(event.clone())?;
        if let PulseEvent::Soft { channel, carrier_hz, .. } = *event {
            let reference = reference_spin(sys, channel, carrier_hz)?;
            for s in (0..sys.n()).filter(|&s| s != reference && sys.channel_of(s) == channel) {
                let phase = bloch_siegert_phase(event, sys.offset_hz(s))?;
                if phase != 0.0 {
                    out.push(PulseEvent::frame_shift(s, phase))?;
                }
            }
        }
    }
    Ok(out)
}
