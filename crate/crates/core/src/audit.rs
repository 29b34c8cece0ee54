//! Invariant audits over committed observations.

use std::collections::BTreeMap;
use std::fmt;

use crate::link::headway;
use crate::model::{Maneuver, Observation, SimActor, TripId};
use crate::network::{LinkId, Network};
use crate::scenario::Scenario;
use crate::time::{Duration, SimTime};

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    Storage { link: LinkId, time: SimTime, occupancy: u32, storage: u32 },
    Headway { link: LinkId, next: Maneuver, time: SimTime, gap: Duration, min: Duration },
    Distance { trip: TripId, reported: f64, traversed: f64 },
    ArrivesBeforeDeparture { trip: TripId },
    Conservation { injected: usize, completed: usize, unfinished: usize },
    LinkState(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Storage { link, time, occupancy, storage } => {
                write!(f, "link {link} holds {occupancy} vehicles at {time}, storage {storage}")
            }
            Violation::Headway { link, next, time, gap, min } => write!(
                f,
                "link {link} maneuver {next:?}: transitions {}s apart at {time}, headway {}s",
                gap.as_secs_f64(),
                min.as_secs_f64()
            ),
            Violation::Distance { trip, reported, traversed } => {
                write!(f, "trip {trip} reports {reported} m but traversed {traversed} m")
            }
            Violation::ArrivesBeforeDeparture { trip } => {
                write!(f, "trip {trip} arrives before it departs")
            }
            Violation::Conservation { injected, completed, unfinished } => {
                write!(f, "{injected} trips injected but {completed} completed and {unfinished} unfinished")
            }
            Violation::LinkState(s) => f.write_str(s),
        }
    }
}

/// Occupancy replay: +1 at every entry, -1 at every exit, exits first at
/// equal times.
pub fn audit_storage(net: &Network, obs: &[Observation]) -> Vec<Violation> {
    let mut events: BTreeMap<LinkId, Vec<(SimTime, i32)>> = BTreeMap::new();
    for o in obs {
        match *o {
            Observation::Entry { link, time, .. } => events.entry(link).or_default().push((time, 1)),
            Observation::Traversal { link, exit, .. } => events.entry(link).or_default().push((exit, -1)),
            _ => {}
        }
    }
    let mut out = Vec::new();
    for (link, mut ev) in events {
        ev.sort();
        let storage = net.link(link).storage_capacity();
        let mut occ: i64 = 0;
        for (time, d) in ev {
            occ += d as i64;
            if occ > storage as i64 || occ < 0 {
                out.push(Violation::Storage { link, time, occupancy: occ.max(0) as u32, storage });
            }
        }
    }
    out
}

/// Spacing of consecutive transitions through each maneuver.
pub fn audit_headway(net: &Network, obs: &[Observation], saturation_vph_per_lane: f64) -> Vec<Violation> {
    let mut exits: BTreeMap<(LinkId, Maneuver), Vec<SimTime>> = BTreeMap::new();
    for o in obs {
        if let Observation::Traversal { link, next, exit, .. } = *o {
            exits.entry((link, next)).or_default().push(exit);
        }
    }
    let tolerance = Duration::from_micros(1);
    let mut out = Vec::new();
    for ((link, next), mut ts) in exits {
        ts.sort();
        let min = headway(net.link(link).lanes, saturation_vph_per_lane);
        for w in ts.windows(2) {
            let gap = w[1] - w[0];
            if gap < min - tolerance {
                out.push(Violation::Headway { link, next, time: w[1], gap, min });
            }
        }
    }
    out
}

/// Trip accounting and per-trip distance against the traversal record.
pub fn audit_conservation(scenario: &Scenario, obs: &[Observation]) -> Vec<Violation> {
    let net = &scenario.net;
    let mut traversed: BTreeMap<TripId, f64> = BTreeMap::new();
    let mut completed = Vec::new();
    for o in obs {
        match *o {
            Observation::Traversal { trip, link, .. } => *traversed.entry(trip).or_default() += net.link(link).length_m,
            Observation::TripComplete { trip, depart, arrive, distance_m, .. } => {
                completed.push((trip, depart, arrive, distance_m))
            }
            _ => {}
        }
    }
    let mut out = Vec::new();
    for &(trip, depart, arrive, reported) in &completed {
        let t = traversed.get(&trip).copied().unwrap_or(0.0);
        if t != reported {
            out.push(Violation::Distance { trip, reported, traversed: t });
        }
        if arrive < depart {
            out.push(Violation::ArrivesBeforeDeparture { trip });
        }
    }
    let injected = scenario.demand.legs.len();
    let done: std::collections::BTreeSet<TripId> = completed.iter().map(|c| c.0).collect();
    let unfinished = scenario.demand.legs.iter().filter(|l| !done.contains(&l.leg.id)).count();
    if injected != completed.len() + unfinished || scenario.loaded != injected + scenario.demand.dropped.len() {
        out.push(Violation::Conservation { injected, completed: completed.len(), unfinished });
    }
    out
}

/// Bookkeeping identities of the final link states.
pub fn audit_final_states(actors: &[SimActor]) -> Vec<Violation> {
    actors
        .iter()
        .filter_map(SimActor::as_link)
        .filter_map(|l| l.check_invariants().err())
        .map(Violation::LinkState)
        .collect()
}

/// All audits of a finished run.
pub fn audit_run(scenario: &Scenario, obs: &[Observation], actors: &[SimActor]) -> Vec<Violation> {
    let mut v = audit_storage(&scenario.net, obs);
    v.extend(audit_headway(&scenario.net, obs, scenario.params.link.saturation_vph_per_lane));
    v.extend(audit_conservation(scenario, obs));
    v.extend(audit_final_states(actors));
    v
}
