//! Synthetic bidirectional grid networks for desk-scale runs.

use std::fmt;
use std::str::FromStr;

use super::{Link, LinkId, Network, NetworkError, Node, NodeId};

/// Attributes stamped onto generated links.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoadClass {
    pub lanes: u32,
    pub freespeed_mps: f64,
    pub capacity_vph: f64,
    pub fclass: u8,
}

impl RoadClass {
    pub const ARTERIAL: RoadClass = RoadClass { lanes: 2, freespeed_mps: 20.0, capacity_vph: 1200.0, fclass: 3 };
    pub const LOCAL: RoadClass = RoadClass { lanes: 1, freespeed_mps: 12.5, capacity_vph: 600.0, fclass: 5 };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridProfile {
    /// Every link is a local road.
    Uniform,
    /// Boundary ring links are arterials, interior links are local roads.
    ArterialRing,
}

impl FromStr for GridProfile {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "uniform" => Ok(GridProfile::Uniform),
            "arterial-ring" | "ring" => Ok(GridProfile::ArterialRing),
            other => Err(format!("unknown grid profile `{other}` (expected uniform or arterial-ring)")),
        }
    }
}

impl fmt::Display for GridProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GridProfile::Uniform => "uniform",
            GridProfile::ArterialRing => "arterial-ring",
        })
    }
}

/// Builds a `rows` x `cols` grid with both directions on every block.
///
/// Node `r * cols + c` sits at `(c * block, r * block)`. Links are numbered by
/// sweeping nodes row-major, emitting the east pair then the north pair.
pub fn make_grid(rows: usize, cols: usize, block_m: f64, profile: GridProfile) -> Result<Network, NetworkError> {
    if rows < 2 || cols < 2 {
        return Err(NetworkError::GridTooSmall { rows, cols });
    }
    let nodes = (0..rows * cols)
        .map(|i| Node {
            id: NodeId(i as u32),
            x: (i % cols) as f64 * block_m,
            y: (i / cols) as f64 * block_m,
            pop_weight: 1.0,
        })
        .collect();

    let on_ring = |a: usize, b: usize| {
        let (ra, ca, rb, cb) = (a / cols, a % cols, b / cols, b % cols);
        (ra == rb && (ra == 0 || ra == rows - 1)) || (ca == cb && (ca == 0 || ca == cols - 1))
    };
    let class_of = |a: usize, b: usize| match profile {
        GridProfile::ArterialRing if on_ring(a, b) => RoadClass::ARTERIAL,
        _ => RoadClass::LOCAL,
    };

    let mut links = Vec::with_capacity(4 * rows * cols);
    let mut push = |a: usize, b: usize| {
        let c = class_of(a, b);
        links.push(Link {
            id: LinkId(links.len() as u32),
            from: NodeId(a as u32),
            to: NodeId(b as u32),
            length_m: block_m,
            lanes: c.lanes,
            freespeed_mps: c.freespeed_mps,
            capacity_vph: c.capacity_vph,
            fclass: c.fclass,
            signalized: false,
            signal: None,
        });
    };
    for r in 0..rows {
        for c in 0..cols {
            let n = r * cols + c;
            if c + 1 < cols {
                push(n, n + 1);
                push(n + 1, n);
            }
            if r + 1 < rows {
                push(n, n + cols);
                push(n + cols, n);
            }
        }
    }
    Network::new(nodes, links)
}
