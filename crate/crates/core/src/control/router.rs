//! Batched routing over a controller's weight map.
//!
//! Weight changes are staged as pending; the first query after any change
//! applies them all at once (one customization) and later queries reuse the
//! result until the next change.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::network::{LinkId, Network, NodeId};
use crate::routing::{shortest_path, Route};
use crate::time::Duration;

#[derive(Clone, Debug)]
pub struct RoutingEngine {
    /// Customized weights. Shared between snapshots until changed.
    weights: Arc<Vec<Duration>>,
    pending: BTreeMap<LinkId, Duration>,
    customizations: u64,
}

impl RoutingEngine {
    pub fn new(initial: Vec<Duration>) -> Self {
        RoutingEngine { weights: Arc::new(initial), pending: BTreeMap::new(), customizations: 0 }
    }

    /// Stages a new weight; a no-op if it matches what would be in effect.
    pub fn update(&mut self, link: LinkId, w: Duration) {
        if self.weights[link.index()] == w {
            self.pending.remove(&link);
        } else {
            self.pending.insert(link, w);
        }
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn customizations(&self) -> u64 {
        self.customizations
    }

    /// Applies pending changes. Returns whether a customization happened.
    pub fn customize(&mut self) -> bool {
        if self.pending.is_empty() {
            return false;
        }
        let w = Arc::make_mut(&mut self.weights);
        for (l, v) in std::mem::take(&mut self.pending) {
            w[l.index()] = v;
        }
        self.customizations += 1;
        true
    }

    /// Weights as of the last customization.
    pub fn weights(&self) -> &[Duration] {
        &self.weights
    }

    /// Shortest path under current weights, customizing first if needed.
    pub fn query(&mut self, net: &Network, from: NodeId, to: NodeId) -> (Option<Route>, bool) {
        let customized = self.customize();
        (shortest_path(net, &self.weights, from, to), customized)
    }
}
