//! Static road graph: nodes, directed links, optional signal plans.

mod grid;
mod io;
mod partition;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::Duration;

pub use grid::{make_grid, GridProfile, RoadClass};
pub use io::{load_network, load_signal_plans, save_network, save_partition};
pub use partition::{partition_graph, Partition, DEFAULT_IMBALANCE};

/// Jam spacing used to derive storage capacity, meters per vehicle per lane.
pub const JAM_SPACING_M: f64 = 7.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl LinkId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
    pub pop_weight: f64,
}

/// One green interval of a maneuver, repeating every cycle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreenWindow {
    pub offset: Duration,
    pub duration: Duration,
    /// Maximum transitions through this window per cycle.
    pub slots: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SignalPlan {
    pub cycle: Duration,
    /// Green windows per downstream link, sorted by offset.
    pub maneuvers: BTreeMap<LinkId, Vec<GreenWindow>>,
}

impl SignalPlan {
    pub fn validate(&self) -> Result<(), String> {
        if self.cycle <= Duration::ZERO {
            return Err("cycle length must be positive".into());
        }
        for (to, windows) in &self.maneuvers {
            let mut sorted = windows.clone();
            sorted.sort_by_key(|w| w.offset);
            let mut prev_end = Duration::ZERO;
            for w in &sorted {
                if w.offset < Duration::ZERO || w.offset + w.duration > self.cycle {
                    return Err(format!("green window for maneuver to {to} falls outside [0, cycle)"));
                }
                if w.offset < prev_end {
                    return Err(format!("overlapping green windows for maneuver to {to}"));
                }
                if w.slots == 0 {
                    return Err(format!("green window for maneuver to {to} has no slots"));
                }
                prev_end = w.offset + w.duration;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Link {
    pub id: LinkId,
    pub from: NodeId,
    pub to: NodeId,
    pub length_m: f64,
    pub lanes: u32,
    pub freespeed_mps: f64,
    pub capacity_vph: f64,
    /// Road hierarchy, 1 (freeway) to 5 (local street).
    pub fclass: u8,
    pub signalized: bool,
    pub signal: Option<SignalPlan>,
}

impl Link {
    /// Free-flow traversal time in seconds.
    pub fn freespeed_time(&self) -> f64 {
        self.length_m / self.freespeed_mps
    }

    /// Storage capacity in vehicles: floor(length * lanes / jam spacing), at least 1.
    pub fn storage_capacity(&self) -> u32 {
        ((self.length_m * self.lanes as f64 / JAM_SPACING_M).floor() as u32).max(1)
    }

    fn check(&self) -> Result<(), String> {
        if !(self.length_m > 0.0 && self.length_m.is_finite()) {
            return Err(format!("length must be positive, got {}", self.length_m));
        }
        if !(self.freespeed_mps > 0.0 && self.freespeed_mps.is_finite()) {
            return Err(format!("freespeed must be positive, got {}", self.freespeed_mps));
        }
        if !(self.capacity_vph > 0.0 && self.capacity_vph.is_finite()) {
            return Err(format!("capacity must be positive, got {}", self.capacity_vph));
        }
        if self.lanes == 0 {
            return Err("lane count must be positive".into());
        }
        if !(1..=5).contains(&self.fclass) {
            return Err(format!("functional class must be in 1..=5, got {}", self.fclass));
        }
        if let Some(plan) = &self.signal {
            plan.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("node ids must be dense in [0, {count}); row {row} has id {id}")]
    NodeIds { row: usize, id: u32, count: usize },
    #[error("link ids must be dense in [0, {count}); row {row} has id {id}")]
    LinkIds { row: usize, id: u32, count: usize },
    #[error("link {link} references unknown node {node}")]
    DanglingNode { link: LinkId, node: NodeId },
    #[error("link {link}: {reason}")]
    InvalidLink { link: LinkId, reason: String },
    #[error("node {node}: population weight must be non-negative and finite")]
    InvalidNode { node: NodeId },
    #[error("signal plan row {row}: {reason}")]
    InvalidSignal { row: usize, reason: String },
    #[error("grid needs at least 2 rows and 2 columns, got {rows}x{cols}")]
    GridTooSmall { rows: usize, cols: usize },
    #[error("cannot split {links} links into {parts} partitions")]
    TooManyParts { parts: usize, links: usize },
    #[error("partition weights: {0}")]
    BadWeights(String),
}

/// Immutable directed road graph with adjacency by tail and head node.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    nodes: Vec<Node>,
    links: Vec<Link>,
    out_links: Vec<Vec<LinkId>>,
    in_links: Vec<Vec<LinkId>>,
}

impl Network {
    /// Validates and indexes a graph. Nodes and links must be sorted by dense id.
    pub fn new(nodes: Vec<Node>, links: Vec<Link>) -> Result<Self, NetworkError> {
        for (row, n) in nodes.iter().enumerate() {
            if n.id.index() != row {
                return Err(NetworkError::NodeIds { row, id: n.id.0, count: nodes.len() });
            }
            if !(n.pop_weight >= 0.0 && n.pop_weight.is_finite()) {
                return Err(NetworkError::InvalidNode { node: n.id });
            }
        }
        let mut out_links = vec![Vec::new(); nodes.len()];
        let mut in_links = vec![Vec::new(); nodes.len()];
        for (row, l) in links.iter().enumerate() {
            if l.id.index() != row {
                return Err(NetworkError::LinkIds { row, id: l.id.0, count: links.len() });
            }
            for node in [l.from, l.to] {
                if node.index() >= nodes.len() {
                    return Err(NetworkError::DanglingNode { link: l.id, node });
                }
            }
            l.check().map_err(|reason| NetworkError::InvalidLink { link: l.id, reason })?;
            out_links[l.from.index()].push(l.id);
            in_links[l.to.index()].push(l.id);
        }
        Ok(Network { nodes, links, out_links, in_links })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.index()]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    /// Links leaving `node`, in ascending id order.
    pub fn out_links(&self, node: NodeId) -> &[LinkId] {
        &self.out_links[node.index()]
    }

    /// Links entering `node`, in ascending id order.
    pub fn in_links(&self, node: NodeId) -> &[LinkId] {
        &self.in_links[node.index()]
    }

    /// Link midpoint coordinates.
    pub fn midpoint(&self, id: LinkId) -> (f64, f64) {
        let l = self.link(id);
        let (a, b) = (self.node(l.from), self.node(l.to));
        ((a.x + b.x) / 2.0, (a.y + b.y) / 2.0)
    }

    /// Installs signal plans; fails if a plan targets a link that is not a
    /// successor of its link.
    pub fn with_signals(mut self, plans: BTreeMap<LinkId, SignalPlan>) -> Result<Self, NetworkError> {
        for (id, plan) in plans {
            if id.index() >= self.links.len() {
                return Err(NetworkError::InvalidLink { link: id, reason: "signal plan for unknown link".into() });
            }
            let head = self.links[id.index()].to;
            for to in plan.maneuvers.keys() {
                if !self.out_links(head).contains(to) {
                    return Err(NetworkError::InvalidLink {
                        link: id,
                        reason: format!("signal maneuver to {to} is not a downstream link"),
                    });
                }
            }
            plan.validate().map_err(|reason| NetworkError::InvalidLink { link: id, reason })?;
            let link = &mut self.links[id.index()];
            link.signalized = true;
            link.signal = Some(plan);
        }
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_node() -> Network {
        let nodes = vec![
            Node { id: NodeId(0), x: 0.0, y: 0.0, pop_weight: 1.0 },
            Node { id: NodeId(1), x: 300.0, y: 0.0, pop_weight: 1.0 },
        ];
        let links = vec![Link {
            id: LinkId(0),
            from: NodeId(0),
            to: NodeId(1),
            length_m: 300.0,
            lanes: 2,
            freespeed_mps: 15.0,
            capacity_vph: 1200.0,
            fclass: 4,
            signalized: false,
            signal: None,
        }];
        Network::new(nodes, links).unwrap()
    }

    #[test]
    fn freespeed_time_and_storage() {
        let net = two_node();
        let l = net.link(LinkId(0));
        assert_eq!(l.freespeed_time(), 20.0);
        assert_eq!(l.storage_capacity(), 80);
        assert_eq!(net.out_links(NodeId(0)), &[LinkId(0)]);
        assert_eq!(net.in_links(NodeId(1)), &[LinkId(0)]);
    }

    #[test]
    fn storage_is_at_least_one() {
        let mut net = two_node();
        net.links[0].length_m = 3.0;
        net.links[0].lanes = 1;
        assert_eq!(net.links[0].storage_capacity(), 1);
    }

    #[test]
    fn rejects_dangling_and_invalid_links() {
        let base = two_node();
        let mut links = base.links.clone();
        links[0].to = NodeId(9);
        let err = Network::new(base.nodes.clone(), links).unwrap_err();
        assert!(matches!(err, NetworkError::DanglingNode { link: LinkId(0), node: NodeId(9) }));

        let mut links = base.links.clone();
        links[0].freespeed_mps = 0.0;
        assert!(matches!(Network::new(base.nodes.clone(), links), Err(NetworkError::InvalidLink { .. })));

        let mut links = base.links.clone();
        links[0].fclass = 6;
        assert!(matches!(Network::new(base.nodes.clone(), links), Err(NetworkError::InvalidLink { .. })));
    }

    #[test]
    fn signal_windows_must_fit_and_not_overlap() {
        let w =
            |o: i64, d: i64| GreenWindow { offset: Duration::from_secs(o), duration: Duration::from_secs(d), slots: 2 };
        let plan =
            |ws: Vec<GreenWindow>| SignalPlan { cycle: Duration::from_secs(60), maneuvers: [(LinkId(1), ws)].into() };
        assert!(plan(vec![w(0, 10), w(30, 10)]).validate().is_ok());
        assert!(plan(vec![w(55, 10)]).validate().is_err());
        assert!(plan(vec![w(0, 10), w(5, 10)]).validate().is_err());
    }
}
