//! Load-weighted recursive coordinate bisection over link midpoints.

use log::warn;

use super::{LinkId, Network, NetworkError};

pub const DEFAULT_IMBALANCE: f64 = 1.2;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    parts: Vec<u32>,
    count: u32,
}

impl Partition {
    pub fn single(links: usize) -> Self {
        Partition { parts: vec![0; links], count: 1 }
    }

    pub fn part_of(&self, link: LinkId) -> u32 {
        self.parts[link.index()]
    }

    pub fn parts(&self) -> &[u32] {
        &self.parts
    }

    pub fn count(&self) -> u32 {
        self.count
    }

    /// Summed weight per partition.
    pub fn loads(&self, weights: &[f64]) -> Vec<f64> {
        let mut loads = vec![0.0; self.count as usize];
        for (p, w) in self.parts.iter().zip(weights) {
            loads[*p as usize] += w;
        }
        loads
    }

    /// Largest partition load over the mean load.
    pub fn imbalance(&self, weights: &[f64]) -> f64 {
        let loads = self.loads(weights);
        let mean = loads.iter().sum::<f64>() / loads.len() as f64;
        if mean == 0.0 {
            return 1.0;
        }
        loads.iter().cloned().fold(0.0, f64::max) / mean
    }
}

struct Item {
    link: u32,
    x: f64,
    y: f64,
    w: f64,
}

/// Splits the links into `parts` groups of roughly equal `weights`.
/// All-zero weights are treated as uniform.
pub fn partition_graph(net: &Network, parts: usize, weights: &[f64]) -> Result<Partition, NetworkError> {
    let n = net.link_count();
    if parts == 0 || parts > n {
        return Err(NetworkError::TooManyParts { parts, links: n });
    }
    if weights.len() != n {
        return Err(NetworkError::BadWeights(format!("{} weights for {n} links", weights.len())));
    }
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(NetworkError::BadWeights("weights must be non-negative and finite".into()));
    }
    let uniform = weights.iter().all(|&w| w == 0.0);
    let mut items: Vec<Item> = (0..n)
        .map(|i| {
            let (x, y) = net.midpoint(LinkId(i as u32));
            Item { link: i as u32, x, y, w: if uniform { 1.0 } else { weights[i] } }
        })
        .collect();
    let mut out = vec![0u32; n];
    bisect(&mut items, parts, 0, &mut out);
    let partition = Partition { parts: out, count: parts as u32 };

    let eff: Vec<f64> = items_weights(&items, n);
    let imb = partition.imbalance(&eff);
    if imb > DEFAULT_IMBALANCE {
        warn!("partition imbalance {imb:.3} exceeds {DEFAULT_IMBALANCE}");
    }
    Ok(partition)
}

fn items_weights(items: &[Item], n: usize) -> Vec<f64> {
    let mut w = vec![0.0; n];
    for it in items {
        w[it.link as usize] = it.w;
    }
    w
}

fn bisect(items: &mut [Item], parts: usize, first: u32, out: &mut [u32]) {
    if parts == 1 {
        for it in items.iter() {
            out[it.link as usize] = first;
        }
        return;
    }
    let (min_x, max_x, min_y, max_y) =
        items.iter().fold((f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY), |(a, b, c, d), it| {
            (a.min(it.x), b.max(it.x), c.min(it.y), d.max(it.y))
        });
    if max_x - min_x >= max_y - min_y {
        items.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)).then(a.link.cmp(&b.link)));
    } else {
        items.sort_by(|a, b| a.y.total_cmp(&b.y).then(a.x.total_cmp(&b.x)).then(a.link.cmp(&b.link)));
    }

    let left_parts = parts / 2;
    let total: f64 = items.iter().map(|it| it.w).sum();
    let target = total * left_parts as f64 / parts as f64;
    // Each side needs at least as many items as it has parts.
    let lo = left_parts;
    let hi = items.len() - (parts - left_parts);
    let mut best = lo;
    let mut best_gap = f64::INFINITY;
    let mut acc: f64 = items[..lo].iter().map(|it| it.w).sum();
    for cut in lo..=hi {
        let gap = (acc - target).abs();
        if gap < best_gap {
            best_gap = gap;
            best = cut;
        }
        if cut < items.len() {
            acc += items[cut].w;
        }
    }
    let (left, right) = items.split_at_mut(best);
    bisect(left, left_parts, first, out);
    bisect(right, parts - left_parts, first + left_parts as u32, out);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{make_grid, GridProfile};
    use std::collections::BTreeSet;

    #[test]
    fn one_part_is_identity() {
        let g = make_grid(5, 5, 100.0, GridProfile::Uniform).unwrap();
        let p = partition_graph(&g, 1, &vec![1.0; g.link_count()]).unwrap();
        assert_eq!(p, Partition::single(g.link_count()));
    }

    #[test]
    fn too_many_parts_is_an_error() {
        let g = make_grid(2, 2, 100.0, GridProfile::Uniform).unwrap();
        assert!(matches!(partition_graph(&g, 9, &[1.0; 8]), Err(NetworkError::TooManyParts { .. })));
        assert!(partition_graph(&g, 8, &[1.0; 8]).is_ok());
    }

    #[test]
    fn uniform_grid_four_ways_is_balanced() {
        let g = make_grid(10, 10, 100.0, GridProfile::ArterialRing).unwrap();
        let w = vec![1.0; g.link_count()];
        let p = partition_graph(&g, 4, &w).unwrap();
        // oracle: recount loads directly from the assignment
        let mut counts = [0usize; 4];
        for &part in p.parts() {
            counts[part as usize] += 1;
        }
        let mean = g.link_count() as f64 / 4.0;
        for c in counts {
            assert!(c as f64 <= 1.2 * mean, "{counts:?}");
        }
    }

    #[test]
    fn heavy_corridor_is_spread_over_parts() {
        let g = make_grid(10, 10, 100.0, GridProfile::ArterialRing).unwrap();
        // corridor: every eastbound link along row 5
        let corridor: Vec<usize> = g
            .links()
            .iter()
            .filter(|l| g.node(l.from).y == 500.0 && g.node(l.to).y == 500.0)
            .map(|l| l.id.index())
            .collect();
        let mut w = vec![1.0; g.link_count()];
        for &i in &corridor {
            w[i] = 50.0;
        }
        let p = partition_graph(&g, 4, &w).unwrap();
        let distinct: BTreeSet<u32> = corridor.iter().map(|&i| p.parts()[i]).collect();
        assert!(distinct.len() >= 2);
        assert!(p.imbalance(&w) <= 1.2);
    }

    #[test]
    fn every_link_assigned_once_in_range() {
        let g = make_grid(6, 9, 100.0, GridProfile::Uniform).unwrap();
        for parts in 1..=7 {
            let p = partition_graph(&g, parts, &vec![0.0; g.link_count()]).unwrap();
            assert_eq!(p.parts().len(), g.link_count());
            assert!(p.parts().iter().all(|&x| (x as usize) < parts));
            let used: BTreeSet<u32> = p.parts().iter().cloned().collect();
            assert_eq!(used.len(), parts);
        }
    }
}
