use crate::error::Result;
use crate::spin_system::SpinSystem;

use super::PulseEvent;

/// Sign of Walsh function `row` on segment `k` (Sylvester ordering).
pub fn walsh_row(row: usize, segments: usize) -> Vec<i8> {
    (0..segments).map(|k| if (row & k).count_ones().is_multiple_of(2) { 1 } else { -1 }).collect()
}

/// Events replacing a free delay of `duration_s` during which only the
/// coupling of `active` should act.
///
/// Every spin outside the pair that takes part in any coupling is assigned a
/// distinct nonzero Walsh row; the pair gets row 0. The delay is cut into `N`
/// equal segments (`N` the smallest power of two above the spectator count)
/// and a logical 180°ₓ pulse is applied to a spectator whenever its row
/// changes sign, plus once at the end if the row finishes negative. Pairwise
/// couplings then average to zero unless both spins share a row.
pub fn refocus(duration_s: f64, active: (usize, usize), sys: &SpinSystem) -> Result<Vec<PulseEvent>> {
    sys.check_spin(active.0)?;
    sys.check_spin(active.1)?;
    if duration_s == 0.0 {
        return Ok(Vec::new());
    }
    let spectators: Vec<usize> =
        (0..sys.n()).filter(|&s| s != active.0 && s != active.1 && !sys.neighbors(s).is_empty()).collect();
    if spectators.is_empty() {
        return Ok(vec![PulseEvent::delay(duration_s)]);
    }
    let segments = (spectators.len() + 1).next_power_of_two();
    let rows: Vec<Vec<i8>> = (1..=spectators.len()).map(|r| walsh_row(r, segments)).collect();
    let tau = duration_s / segments as f64;
    let mut events = Vec::new();
    for k in 0..segments {
        if k > 0 {
            let flips: Vec<usize> =
                spectators.iter().zip(&rows).filter(|(_, row)| row[k] != row[k - 1]).map(|(&s, _)| s).collect();
            if !flips.is_empty() {
                events.push(PulseEvent::hard(flips, 180.0, 0.0));
            }
        }
        events.push(PulseEvent::delay(tau));
    }
    let restore: Vec<usize> =
        spectators.iter().zip(&rows).filter(|(_, row)| row[segments - 1] < 0).map(|(&s, _)| s).collect();
    if !restore.is_empty() {
        events.push(PulseEvent::hard(restore, 180.0, 0.0));
    }
    Ok(events)
}
