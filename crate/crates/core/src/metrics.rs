//! Run metrics derived from committed observations, output files and series
//! comparison.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::engine::CommitStats;
use crate::model::{Observation, TripId};
use crate::network::{LinkId, Network};
use crate::scenario::Scenario;
use crate::time::{Duration, SimTime};

pub const METERS_PER_MILE: f64 = 1609.344;
pub const BIN_WIDTH_S: i64 = 900;

#[derive(Clone, Debug, PartialEq)]
pub struct TripRecord {
    pub trip: TripId,
    pub depart: SimTime,
    pub arrive: SimTime,
    pub freespeed: Duration,
    pub distance_m: f64,
    pub reroutes: u32,
    pub reroutable: bool,
}

impl TripRecord {
    /// Delay over the initial route's free-flow time, never negative.
    pub fn delay(&self) -> Duration {
        ((self.arrive - self.depart) - self.freespeed).max(Duration::ZERO)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunMetrics {
    pub loaded: usize,
    pub dropped: usize,
    pub injected: usize,
    pub completed: usize,
    pub unfinished: usize,
    pub vhd_h: f64,
    /// Elapsed hours of trips still on the road at the end.
    pub residual_vhd_h: f64,
    pub vmt_mi: f64,
    pub reroutable_legs: usize,
    /// Accepted reroutes, summed over legs.
    pub reroutes: u64,
    pub legs_rerouted: usize,
    pub legs_rerouted_once: usize,
    pub checks: u64,
    pub lsus: u64,
    pub heartbeats: u64,
    pub customizations: u64,
    pub unreachable_queries: u64,
    pub stats: CommitStats,
    pub trips: Vec<TripRecord>,
}

impl RunMetrics {
    /// Rerouted legs as a percentage of reroutable legs.
    pub fn rerouted_share_pct(&self) -> Option<f64> {
        (self.reroutable_legs > 0).then(|| 100.0 * self.legs_rerouted as f64 / self.reroutable_legs as f64)
    }

    pub fn once_share(&self) -> Option<f64> {
        (self.legs_rerouted > 0).then(|| self.legs_rerouted_once as f64 / self.legs_rerouted as f64)
    }

    /// `key = value` lines.
    pub fn summary(&self) -> Vec<(String, String)> {
        let opt = |v: Option<f64>| v.map_or("missing".to_string(), |x| x.to_string());
        vec![
            ("trips_loaded".into(), self.loaded.to_string()),
            ("trips_dropped_unreachable".into(), self.dropped.to_string()),
            ("trips_injected".into(), self.injected.to_string()),
            ("trips_completed".into(), self.completed.to_string()),
            ("trips_unfinished".into(), self.unfinished.to_string()),
            ("vhd_h".into(), self.vhd_h.to_string()),
            ("residual_vhd_h".into(), self.residual_vhd_h.to_string()),
            ("vmt_mi".into(), self.vmt_mi.to_string()),
            ("reroutable_legs".into(), self.reroutable_legs.to_string()),
            ("reroutes".into(), self.reroutes.to_string()),
            ("legs_rerouted".into(), self.legs_rerouted.to_string()),
            ("legs_rerouted_once".into(), self.legs_rerouted_once.to_string()),
            ("rerouted_share_pct".into(), opt(self.rerouted_share_pct())),
            ("reroute_checks".into(), self.checks.to_string()),
            ("lsus".into(), self.lsus.to_string()),
            ("heartbeats".into(), self.heartbeats.to_string()),
            ("customizations".into(), self.customizations.to_string()),
            ("unreachable_queries".into(), self.unreachable_queries.to_string()),
            ("events_committed".into(), self.stats.committed.to_string()),
            ("events_rolled_back".into(), self.stats.rolled_back.to_string()),
            ("commit_efficiency".into(), self.stats.efficiency().to_string()),
        ]
    }
}

/// Metrics of a run ending at `end`.
pub fn accumulate(scenario: &Scenario, obs: &[Observation], stats: CommitStats, end: SimTime) -> RunMetrics {
    let net = &scenario.net;
    let mut m = RunMetrics {
        loaded: scenario.loaded,
        dropped: scenario.demand.dropped.len(),
        injected: scenario.demand.legs.len(),
        reroutable_legs: scenario.demand.legs.iter().filter(|l| l.reroutable).count(),
        stats,
        ..RunMetrics::default()
    };
    let mut meters = 0.0;
    let mut rerouted: BTreeMap<TripId, u32> = BTreeMap::new();
    for o in obs {
        match *o {
            Observation::Traversal { link, .. } => meters += net.link(link).length_m,
            Observation::TripComplete { trip, depart, arrive, freespeed, distance_m, reroutes, reroutable } => {
                m.trips.push(TripRecord { trip, depart, arrive, freespeed, distance_m, reroutes, reroutable })
            }
            Observation::RerouteCheck { .. } => m.checks += 1,
            Observation::RerouteDecision { trip, switched, unreachable, .. } => {
                if switched {
                    m.reroutes += 1;
                    *rerouted.entry(trip).or_default() += 1;
                }
                if unreachable {
                    m.unreachable_queries += 1;
                }
            }
            Observation::StatusBroadcast { heartbeat, .. } => {
                if heartbeat {
                    m.heartbeats += 1;
                } else {
                    m.lsus += 1;
                }
            }
            Observation::Customization { .. } => m.customizations += 1,
            Observation::Entry { .. } => {}
        }
    }
    m.trips.sort_by_key(|t| t.trip);
    m.completed = m.trips.len();
    m.unfinished = m.injected - m.completed;
    m.vmt_mi = meters / METERS_PER_MILE;
    m.vhd_h = m.trips.iter().map(|t| t.delay().as_secs_f64()).sum::<f64>() / 3600.0 + 0.0;
    let done: std::collections::BTreeSet<TripId> = m.trips.iter().map(|t| t.trip).collect();
    m.residual_vhd_h = scenario
        .demand
        .legs
        .iter()
        .filter(|l| !done.contains(&l.leg.id))
        .map(|l| (end - l.leg.depart).max(Duration::ZERO).as_secs_f64())
        .sum::<f64>()
        / 3600.0
        + 0.0;
    m.legs_rerouted = rerouted.len();
    m.legs_rerouted_once = rerouted.values().filter(|&&n| n == 1).count();
    m
}

fn secs(t: SimTime) -> f64 {
    t.as_secs_f64()
}

/// `trip_id,depart_s,arrive_s,freespeed_s,distance_m,reroutes`, by trip id.
pub fn write_trip_log<W: Write>(mut out: W, trips: &[TripRecord]) -> io::Result<()> {
    writeln!(out, "trip_id,depart_s,arrive_s,freespeed_s,distance_m,reroutes")?;
    for t in trips {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            t.trip,
            secs(t.depart),
            secs(t.arrive),
            t.freespeed.as_secs_f64(),
            t.distance_m,
            t.reroutes
        )?;
    }
    Ok(())
}

/// `time_s,vehicle_id,controller_id,decision,old_cost_s,new_cost_s`.
pub fn write_reroute_log<W: Write>(mut out: W, obs: &[Observation]) -> io::Result<()> {
    writeln!(out, "time_s,vehicle_id,controller_id,decision,old_cost_s,new_cost_s")?;
    for o in obs {
        if let Observation::RerouteDecision { trip, controller, time, switched, old_cost, new_cost, .. } = o {
            let d = if *switched { "switch" } else { "keep" };
            writeln!(
                out,
                "{},{},{},{},{},{}",
                secs(*time),
                trip,
                controller,
                d,
                old_cost.as_secs_f64(),
                new_cost.as_secs_f64()
            )?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinkBin {
    pub count: u64,
    speed_sum: f64,
    speed_n: u64,
}

impl LinkBin {
    pub fn mean_speed(&self) -> Option<f64> {
        (self.speed_n > 0).then(|| self.speed_sum / self.speed_n as f64)
    }
}

/// Per link and 15-minute bin of entry time: entries and mean traversal speed
/// of vehicles that entered in the bin and have left.
pub fn link_bins(net: &Network, obs: &[Observation]) -> BTreeMap<(LinkId, i64), LinkBin> {
    let bin = |t: SimTime| t.as_micros().div_euclid(BIN_WIDTH_S * 1_000_000) * BIN_WIDTH_S;
    let mut out: BTreeMap<(LinkId, i64), LinkBin> = BTreeMap::new();
    for o in obs {
        match *o {
            Observation::Entry { link, time, .. } => out.entry((link, bin(time))).or_default().count += 1,
            Observation::Traversal { link, entry, exit, .. } => {
                let dt = (exit - entry).as_secs_f64();
                if dt > 0.0 {
                    let b = out.entry((link, bin(entry))).or_default();
                    b.speed_sum += net.link(link).length_m / dt;
                    b.speed_n += 1;
                }
            }
            _ => {}
        }
    }
    out
}

/// `link_id,bin_start_s,count,mean_speed_mps`; speed is blank when no vehicle
/// of the bin has left the link.
pub fn write_link_bins<W: Write>(mut out: W, bins: &BTreeMap<(LinkId, i64), LinkBin>) -> io::Result<()> {
    writeln!(out, "link_id,bin_start_s,count,mean_speed_mps")?;
    for ((l, start), b) in bins {
        let speed = b.mean_speed().map_or(String::new(), |s| s.to_string());
        writeln!(out, "{l},{start},{},{speed}", b.count)?;
    }
    Ok(())
}

pub fn write_summary<W: Write>(mut out: W, lines: &[(String, String)]) -> io::Result<()> {
    for (k, v) in lines {
        writeln!(out, "{k} = {v}")?;
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("series lengths differ: {0} vs {1}")]
    Length(usize, usize),
    #[error("simulated bin (link {link}, {start} s) is not in the reference")]
    UnmatchedBin { link: u32, start: i64 },
    #[error("duplicate bin (link {link}, {start} s)")]
    DuplicateBin { link: u32, start: i64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesComparison {
    pub n: usize,
    /// Missing when the reference has no variance.
    pub r2: Option<f64>,
    /// Missing when the reference total is zero.
    pub relative_error: Option<f64>,
}

/// Coefficient of determination of `sim` against `reference`, and relative
/// error of the totals.
pub fn compare_series(sim: &[f64], reference: &[f64]) -> Result<SeriesComparison, SeriesError> {
    if sim.len() != reference.len() {
        return Err(SeriesError::Length(sim.len(), reference.len()));
    }
    let n = reference.len();
    let mean = reference.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = reference.iter().map(|r| (r - mean) * (r - mean)).sum();
    let ss_res: f64 = sim.iter().zip(reference).map(|(s, r)| (r - s) * (r - s)).sum();
    let r2 = (n > 0 && ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot);
    let (st, rt) = (sim.iter().sum::<f64>(), reference.iter().sum::<f64>());
    let relative_error = (rt != 0.0).then(|| (st - rt) / rt);
    Ok(SeriesComparison { n, r2, relative_error })
}

pub type BinCounts = BTreeMap<(u32, i64), f64>;

#[derive(Debug, Deserialize)]
struct CountRow {
    link_id: u32,
    bin_start_s: i64,
    count: f64,
}

/// Reads `link_id,bin_start_s,count[,...]`; extra columns are ignored.
pub fn load_bin_counts(path: &Path) -> Result<BinCounts, SeriesError> {
    let err = |source| SeriesError::Csv { path: path.to_path_buf(), source };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(err)?;
    let mut out = BinCounts::new();
    for row in rdr.deserialize::<CountRow>() {
        let row = row.map_err(err)?;
        if out.insert((row.link_id, row.bin_start_s), row.count).is_some() {
            return Err(SeriesError::DuplicateBin { link: row.link_id, start: row.bin_start_s });
        }
    }
    Ok(out)
}

/// Pairs simulated bins with the reference bin structure. Reference bins the
/// simulation never entered count as zero.
pub fn compare_bins(sim: &BinCounts, reference: &BinCounts) -> Result<SeriesComparison, SeriesError> {
    if let Some(&(link, start)) = sim.keys().find(|k| !reference.contains_key(k)) {
        return Err(SeriesError::UnmatchedBin { link, start });
    }
    let r: Vec<f64> = reference.values().copied().collect();
    let s: Vec<f64> = reference.keys().map(|k| sim.get(k).copied().unwrap_or(0.0)).collect();
    compare_series(&s, &r)
}

/// Per-link daily totals of A and B with `B - A`, for every link in either.
pub fn diff_traversals(a: &BinCounts, b: &BinCounts) -> Vec<(u32, f64, f64, f64)> {
    let mut totals: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
    for (&(l, _), &c) in a {
        totals.entry(l).or_default().0 += c;
    }
    for (&(l, _), &c) in b {
        totals.entry(l).or_default().1 += c;
    }
    totals.into_iter().map(|(l, (x, y))| (l, x, y, y - x)).collect()
}

pub fn write_diff<W: Write>(mut out: W, rows: &[(u32, f64, f64, f64)]) -> io::Result<()> {
    writeln!(out, "link_id,count_a,count_b,delta")?;
    for (l, a, b, d) in rows {
        writeln!(out, "{l},{a},{b},{d}")?;
    }
    Ok(())
}
