//! Trip legs: loading, zone expansion, penetration assignment and initial
//! free-flow routes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::TripId;
use crate::network::{LinkId, Network, NodeId};
use crate::routing::{freespeed_weights, shortest_path};
use crate::time::{Duration, SimTime};

#[derive(Debug, Error)]
pub enum DemandError {
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: node {node} is not in the network")]
    UnknownNode { line: usize, node: u32 },
    #[error("line {line}: origin and destination are both node {node}")]
    SameEndpoints { line: usize, node: u32 },
    #[error("line {line}: departure time {depart} is not a finite non-negative number")]
    BadDeparture { line: usize, depart: f64 },
    #[error("line {line}: reroutable must be 0, 1 or auto, got {value:?}")]
    BadFlag { line: usize, value: String },
    #[error("line {line}: count must be at least 1")]
    BadCount { line: usize },
    #[error("zone {zone} has no eligible node")]
    NoEligibleNode { zone: u32 },
    #[error("zone {zone} can only produce trips from and to the same node")]
    DegenerateZonePair { zone: u32 },
    #[error("penetration rate must lie in [0, 1], got {0}")]
    BadPenetration(f64),
}

/// Per-leg rerouting flag as written in the trips file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RerouteFlag {
    Off,
    On,
    /// Decided by the penetration rate.
    Auto,
}

impl RerouteFlag {
    fn as_str(self) -> &'static str {
        match self {
            RerouteFlag::Off => "0",
            RerouteFlag::On => "1",
            RerouteFlag::Auto => "auto",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TripLeg {
    pub id: TripId,
    pub origin: NodeId,
    pub dest: NodeId,
    pub depart: SimTime,
    pub reroutable: RerouteFlag,
}

#[derive(Debug, Serialize, Deserialize)]
struct TripRow {
    id: u32,
    origin_node: u32,
    dest_node: u32,
    depart_s: f64,
    reroutable: String,
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> DemandError + '_ {
    move |source| DemandError::Csv { path: path.to_path_buf(), source }
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>, DemandError> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_err(path))
}

/// Reads `id,origin_node,dest_node,depart_s,reroutable{0|1|auto}`.
pub fn load_trips(path: &Path, net: &Network) -> Result<Vec<TripLeg>, DemandError> {
    let mut rdr = reader(path)?;
    let mut legs = Vec::new();
    for (i, row) in rdr.deserialize::<TripRow>().enumerate() {
        let row = row.map_err(csv_err(path))?;
        let line = i + 2;
        let node = |n: u32| {
            if (n as usize) < net.node_count() {
                Ok(NodeId(n))
            } else {
                Err(DemandError::UnknownNode { line, node: n })
            }
        };
        let origin = node(row.origin_node)?;
        let dest = node(row.dest_node)?;
        if origin == dest {
            return Err(DemandError::SameEndpoints { line, node: origin.0 });
        }
        if !(row.depart_s.is_finite() && row.depart_s >= 0.0) {
            return Err(DemandError::BadDeparture { line, depart: row.depart_s });
        }
        let reroutable = match row.reroutable.as_str() {
            "0" => RerouteFlag::Off,
            "1" => RerouteFlag::On,
            "auto" => RerouteFlag::Auto,
            other => return Err(DemandError::BadFlag { line, value: other.to_string() }),
        };
        legs.push(TripLeg {
            id: TripId(row.id),
            origin,
            dest,
            depart: SimTime::from_secs_f64(row.depart_s),
            reroutable,
        });
    }
    Ok(legs)
}

pub fn save_trips(legs: &[TripLeg], path: &Path) -> Result<(), DemandError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for l in legs {
        w.serialize(TripRow {
            id: l.id.0,
            origin_node: l.origin.0,
            dest_node: l.dest.0,
            depart_s: l.depart.as_secs_f64(),
            reroutable: l.reroutable.as_str().to_string(),
        })
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| DemandError::Io { path: path.to_path_buf(), source })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZoneDemand {
    pub o_zone: u32,
    pub d_zone: u32,
    pub depart: SimTime,
    pub count: u32,
}

#[derive(Debug, Deserialize)]
struct ZoneRow {
    o_zone: u32,
    d_zone: u32,
    depart_s: f64,
    count: u32,
}

#[derive(Debug, Deserialize)]
struct MemberRow {
    zone: u32,
    node: u32,
}

/// Reads `o_zone,d_zone,depart_s,count`.
pub fn load_zone_demand(path: &Path) -> Result<Vec<ZoneDemand>, DemandError> {
    let mut rdr = reader(path)?;
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<ZoneRow>().enumerate() {
        let row = row.map_err(csv_err(path))?;
        let line = i + 2;
        if row.count == 0 {
            return Err(DemandError::BadCount { line });
        }
        if !(row.depart_s.is_finite() && row.depart_s >= 0.0) {
            return Err(DemandError::BadDeparture { line, depart: row.depart_s });
        }
        out.push(ZoneDemand {
            o_zone: row.o_zone,
            d_zone: row.d_zone,
            depart: SimTime::from_secs_f64(row.depart_s),
            count: row.count,
        });
    }
    Ok(out)
}

/// Reads `zone,node` into zone → member nodes.
pub fn load_membership(path: &Path, net: &Network) -> Result<BTreeMap<u32, Vec<NodeId>>, DemandError> {
    let mut rdr = reader(path)?;
    let mut out: BTreeMap<u32, Vec<NodeId>> = BTreeMap::new();
    for (i, row) in rdr.deserialize::<MemberRow>().enumerate() {
        let row = row.map_err(csv_err(path))?;
        if row.node as usize >= net.node_count() {
            return Err(DemandError::UnknownNode { line: i + 2, node: row.node });
        }
        out.entry(row.zone).or_default().push(NodeId(row.node));
    }
    Ok(out)
}

/// A node may host trip ends if it has population and touches a road below
/// the freeway classes.
pub fn eligible(net: &Network, node: NodeId) -> bool {
    net.node(node).pop_weight > 0.0
        && net.out_links(node).iter().chain(net.in_links(node)).any(|&l| net.link(l).fclass > 2)
}

/// Turns zone-level demand into node-level legs, drawing each end in
/// proportion to node population weight among the zone's eligible nodes.
/// Leg ids are assigned in demand order. Flags are left to the penetration rate.
pub fn expand_zones(
    demand: &[ZoneDemand],
    membership: &BTreeMap<u32, Vec<NodeId>>,
    net: &Network,
    seed: u64,
) -> Result<Vec<TripLeg>, DemandError> {
    let mut pools: BTreeMap<u32, (Vec<NodeId>, Vec<f64>)> = BTreeMap::new();
    for d in demand {
        for zone in [d.o_zone, d.d_zone] {
            if pools.contains_key(&zone) {
                continue;
            }
            let nodes: Vec<NodeId> = membership
                .get(&zone)
                .map(|ns| ns.iter().copied().filter(|&n| eligible(net, n)).collect())
                .unwrap_or_default();
            if nodes.is_empty() {
                return Err(DemandError::NoEligibleNode { zone });
            }
            let weights = nodes.iter().map(|&n| net.node(n).pop_weight).collect();
            pools.insert(zone, (nodes, weights));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut legs = Vec::new();
    for d in demand {
        let (o_nodes, o_w) = &pools[&d.o_zone];
        let (d_nodes, d_w) = &pools[&d.d_zone];
        if d.o_zone == d.d_zone && o_nodes.len() == 1 {
            return Err(DemandError::DegenerateZonePair { zone: d.o_zone });
        }
        let o_dist = WeightedIndex::new(o_w).expect("eligible nodes have positive weight");
        let d_dist = WeightedIndex::new(d_w).expect("eligible nodes have positive weight");
        for _ in 0..d.count {
            let origin = o_nodes[o_dist.sample(&mut rng)];
            let dest = loop {
                let n = d_nodes[d_dist.sample(&mut rng)];
                if n != origin {
                    break n;
                }
                if d_nodes.len() == 1 {
                    return Err(DemandError::DegenerateZonePair { zone: d.d_zone });
                }
            };
            legs.push(TripLeg {
                id: TripId(legs.len() as u32),
                origin,
                dest,
                depart: d.depart,
                reroutable: RerouteFlag::Auto,
            });
        }
    }
    Ok(legs)
}

/// Resolves rerouting flags: legs marked `auto` are flagged on for exactly
/// `round(p * n_auto)` of them, chosen by a seeded shuffle.
pub fn assign_reroutable(legs: &[TripLeg], p: f64, seed: u64) -> Result<Vec<bool>, DemandError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(DemandError::BadPenetration(p));
    }
    let mut auto: Vec<usize> =
        legs.iter().enumerate().filter(|(_, l)| l.reroutable == RerouteFlag::Auto).map(|(i, _)| i).collect();
    let k = (p * auto.len() as f64).round() as usize;
    auto.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut flags: Vec<bool> = legs.iter().map(|l| l.reroutable == RerouteFlag::On).collect();
    for &i in &auto[..k] {
        flags[i] = true;
    }
    Ok(flags)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoutedLeg {
    pub leg: TripLeg,
    pub reroutable: bool,
    pub path: Vec<LinkId>,
    pub freespeed: Duration,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RoutedDemand {
    pub legs: Vec<RoutedLeg>,
    /// Legs whose destination cannot be reached from the origin.
    pub dropped: Vec<TripId>,
}

/// Free-flow shortest path for every leg. Unreachable legs are dropped.
pub fn initial_routes(legs: &[TripLeg], flags: &[bool], net: &Network) -> RoutedDemand {
    let weights = freespeed_weights(net);
    let mut out = RoutedDemand::default();
    for (leg, &reroutable) in legs.iter().zip(flags) {
        match shortest_path(net, &weights, leg.origin, leg.dest) {
            Some(r) if !r.links.is_empty() => {
                out.legs.push(RoutedLeg { leg: leg.clone(), reroutable, path: r.links, freespeed: r.cost })
            }
            _ => {
                log::warn!("trip {}: node {} unreachable from node {}; dropped", leg.id, leg.dest, leg.origin);
                out.dropped.push(leg.id);
            }
        }
    }
    out
}

/// Uniform random legs between eligible nodes with departures spread over
/// `[0, horizon)`. For fixtures.
pub fn random_legs(net: &Network, count: usize, horizon: Duration, seed: u64) -> Vec<TripLeg> {
    let nodes: Vec<NodeId> = (0..net.node_count() as u32).map(NodeId).filter(|&n| eligible(net, n)).collect();
    assert!(nodes.len() >= 2, "need at least two eligible nodes");
    let weights: Vec<f64> = nodes.iter().map(|&n| net.node(n).pop_weight).collect();
    let dist = WeightedIndex::new(&weights).expect("positive weights");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let legs = (0..count)
        .map(|_| {
            let origin = nodes[dist.sample(&mut rng)];
            let dest = loop {
                let d = nodes[dist.sample(&mut rng)];
                if d != origin {
                    break d;
                }
            };
            (origin, dest, whole_second(&mut rng, horizon))
        })
        .collect();
    numbered(legs)
}

/// Uniform draws from `origins` x `dests`, for demand focused on one corridor.
/// Pairs with equal endpoints are redrawn; the two sets must not be the same
/// single node.
pub fn commute_legs(origins: &[NodeId], dests: &[NodeId], count: usize, horizon: Duration, seed: u64) -> Vec<TripLeg> {
    assert!(!origins.is_empty() && !dests.is_empty(), "empty node set");
    assert!(origins.len() > 1 || dests.len() > 1 || origins[0] != dests[0], "degenerate node sets");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let legs = (0..count)
        .map(|_| loop {
            let o = origins[rng.gen_range(0..origins.len())];
            let d = dests[rng.gen_range(0..dests.len())];
            if o != d {
                break (o, d, whole_second(&mut rng, horizon));
            }
        })
        .collect();
    numbered(legs)
}

fn whole_second(rng: &mut ChaCha8Rng, horizon: Duration) -> SimTime {
    SimTime::from_micros(rng.gen_range(0..horizon.as_micros().max(1)) / 1_000_000 * 1_000_000)
}

fn numbered(mut legs: Vec<(NodeId, NodeId, SimTime)>) -> Vec<TripLeg> {
    legs.sort_by_key(|l| l.2);
    legs.into_iter()
        .enumerate()
        .map(|(i, (origin, dest, depart))| TripLeg {
            id: TripId(i as u32),
            origin,
            dest,
            depart,
            reroutable: RerouteFlag::Auto,
        })
        .collect()
}
