//! Shortest paths over integer-microsecond link weights.
//!
//! A backward Dijkstra from the target yields exact distances-to-target; the
//! path is then read forward by always taking the smallest link id that stays
//! on a shortest path. Among all minimum-cost paths this returns the one whose
//! link-id sequence is lexicographically smallest, so routing is a pure
//! function of the weights.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::network::{LinkId, Network, NodeId};
use crate::time::Duration;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Route {
    pub links: Vec<LinkId>,
    pub cost: Duration,
}

/// Free-flow traversal time of every link, rounded to microseconds.
pub fn freespeed_weights(net: &Network) -> Vec<Duration> {
    net.links().iter().map(|l| Duration::from_secs_f64(l.freespeed_time())).collect()
}

/// Sum of `weights` along `path`.
pub fn path_cost(weights: &[Duration], path: &[LinkId]) -> Duration {
    path.iter().map(|l| weights[l.index()]).sum()
}

/// Minimum-cost path from `from` to `to`; `None` if unreachable. Weights must be positive.
pub fn shortest_path(net: &Network, weights: &[Duration], from: NodeId, to: NodeId) -> Option<Route> {
    if from == to {
        return Some(Route { links: Vec::new(), cost: Duration::ZERO });
    }
    let dist = distances_to(net, weights, to, Some(from));
    let total = dist[from.index()]?;
    let mut links = Vec::new();
    let mut u = from;
    while u != to {
        let here = dist[u.index()].expect("on a shortest path");
        let next = net
            .out_links(u)
            .iter()
            .copied()
            .find(|&l| {
                let v = net.link(l).to;
                dist[v.index()].is_some_and(|d| d + weights[l.index()].as_micros() == here)
            })
            .expect("a tight link leaves every node on a shortest path");
        links.push(next);
        u = net.link(next).to;
    }
    Some(Route { links, cost: Duration::from_micros(total) })
}

/// Exact distance from every node to `target`, stopping once `stop_at` is settled.
fn distances_to(net: &Network, weights: &[Duration], target: NodeId, stop_at: Option<NodeId>) -> Vec<Option<i64>> {
    let mut dist: Vec<Option<i64>> = vec![None; net.node_count()];
    let mut done = vec![false; net.node_count()];
    let mut heap = BinaryHeap::new();
    dist[target.index()] = Some(0);
    heap.push(Reverse((0i64, target.0)));
    while let Some(Reverse((d, u))) = heap.pop() {
        let u = NodeId(u);
        if done[u.index()] {
            continue;
        }
        done[u.index()] = true;
        if Some(u) == stop_at {
            break;
        }
        for &l in net.in_links(u) {
            let v = net.link(l).from;
            let nd = d + weights[l.index()].as_micros();
            if dist[v.index()].is_none_or(|old| nd < old) {
                dist[v.index()] = Some(nd);
                heap.push(Reverse((nd, v.0)));
            }
        }
    }
    dist
}
