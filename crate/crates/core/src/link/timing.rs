//! Per-maneuver transition timing: minimum headway and signal slots.

use crate::network::{GreenWindow, SignalPlan};
use crate::time::{Duration, SimTime};

/// Transition history of one maneuver queue.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ManeuverClock {
    pub last: Option<SimTime>,
    /// Start of the green window instance last used, and slots taken in it.
    used: Option<(SimTime, u32)>,
}

impl ManeuverClock {
    /// Records an accepted transition; later times only.
    pub fn observe(&mut self, t: SimTime) {
        self.last = Some(self.last.map_or(t, |l| l.max(t)));
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ZeroGreen;

/// Earliest legal transition time T2 for a vehicle reaching the stop line at `t1`.
///
/// Unsignalized: `max(t1, last + headway)`. Signalized: additionally the first
/// green window instance at or after that time with a free slot. Updates the
/// clock as if the vehicle transitions at the returned time.
pub fn timing_constraint(
    clock: &mut ManeuverClock,
    headway: Duration,
    signal: Option<(&SignalPlan, &[GreenWindow])>,
    t1: SimTime,
) -> Result<SimTime, ZeroGreen> {
    let earliest = match clock.last {
        Some(last) => t1.max(last + headway),
        None => t1,
    };
    let t2 = match signal {
        None => earliest,
        Some((plan, windows)) => {
            let (t, instance) = next_green_slot(plan.cycle, windows, clock.used, earliest)?;
            let used = match clock.used {
                Some((start, n)) if start == instance => n + 1,
                _ => 1,
            };
            clock.used = Some((instance, used));
            t
        }
    };
    clock.observe(t2);
    Ok(t2)
}

fn next_green_slot(
    cycle: Duration,
    windows: &[GreenWindow],
    used: Option<(SimTime, u32)>,
    from: SimTime,
) -> Result<(SimTime, SimTime), ZeroGreen> {
    if windows.iter().all(|w| w.duration <= Duration::ZERO || w.slots == 0) {
        return Err(ZeroGreen);
    }
    let c = cycle.as_micros();
    let mut base = SimTime::from_micros(from.as_micros().div_euclid(c) * c);
    loop {
        for w in windows {
            let start = base + w.offset;
            let end = start + w.duration;
            if end <= from || w.duration <= Duration::ZERO {
                continue;
            }
            let taken = match used {
                Some((s, n)) if s == start => n,
                _ => 0,
            };
            if taken < w.slots {
                return Ok((from.max(start), start));
            }
        }
        base += cycle;
    }
}
