//! Scenario assembly: actors, initial events, engine selection and post-run
//! gridlock detection.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::control::{ControllerActor, ControllerStatic};
use crate::demand::{assign_reroutable, initial_routes, DemandError, RoutedDemand, TripLeg};
use crate::engine::{run_parallel, run_sequential, Event, ParallelConfig, RunOptions, RunOutput, SimError};
use crate::link::{LinkActor, LinkStatic};
use crate::model::{Layout, ModelParams, Payload, SimActor, Vehicle};
use crate::network::{partition_graph, LinkId, Network, NetworkError, Partition};
use crate::time::{Duration, SimTime};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("invalid parameters: {0}")]
    Params(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum EngineMode {
    Sequential,
    Parallel { workers: usize, gvt_interval: Duration },
}

#[derive(Debug)]
pub struct Scenario {
    pub net: Arc<Network>,
    pub demand: RoutedDemand,
    /// Legs read before routing, including dropped ones.
    pub loaded: usize,
    pub partition: Partition,
    pub params: Arc<ModelParams>,
}

impl Scenario {
    /// Resolves rerouting flags, routes every leg at free flow and partitions
    /// the network by the resulting link loads.
    pub fn new(
        net: Network,
        legs: &[TripLeg],
        penetration: f64,
        seed: u64,
        partitions: usize,
        params: ModelParams,
    ) -> Result<Self, ScenarioError> {
        params.reroute.validate().map_err(ScenarioError::Params)?;
        let flags = assign_reroutable(legs, penetration, seed)?;
        let demand = initial_routes(legs, &flags, &net);
        let mut load = vec![0.0; net.link_count()];
        for leg in &demand.legs {
            for l in &leg.path {
                load[l.index()] += 1.0;
            }
        }
        let partition = partition_graph(&net, partitions, &load)?;
        Ok(Scenario { net: Arc::new(net), demand, loaded: legs.len(), partition, params: Arc::new(params) })
    }

    pub fn layout(&self) -> Layout {
        Layout { links: self.net.link_count() as u32, controllers: self.partition.count() }
    }

    pub fn actors(&self) -> Vec<SimActor> {
        let layout = self.layout();
        let mut out: Vec<SimActor> = self
            .net
            .links()
            .iter()
            .map(|l| {
                let stat = LinkStatic::new(l, self.partition.part_of(l.id), layout, Arc::clone(&self.params));
                SimActor::Link(LinkActor::new(Arc::new(stat)))
            })
            .collect();
        for p in 0..layout.controllers {
            let stat = ControllerStatic::new(p, Arc::clone(&self.net), layout, Arc::clone(&self.params));
            out.push(SimActor::Controller(ControllerActor::new(Arc::new(stat))));
        }
        out
    }

    /// One trip start per routed leg, in leg order.
    pub fn initial_events(&self) -> Vec<Event<Payload>> {
        let layout = self.layout();
        self.demand
            .legs
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let v = Vehicle {
                    trip: r.leg.id,
                    depart: r.leg.depart,
                    path: r.path.clone(),
                    pos: 0,
                    reroutable: r.reroutable,
                    last_check: None,
                    reroutes: 0,
                    freespeed: r.freespeed,
                    distance_m: 0.0,
                };
                let dest = layout.link_actor(r.path[0]);
                Event::initial(
                    i as u64,
                    dest,
                    r.leg.depart,
                    Payload::VehicleArrival { vehicle: Box::new(v), from_origin: true },
                )
            })
            .collect()
    }

    /// Worker of every actor: a link follows its partition, a controller its
    /// own partition index.
    pub fn assignment(&self, workers: usize) -> Vec<usize> {
        let mut a: Vec<usize> = self.partition.parts().iter().map(|&p| p as usize % workers).collect();
        a.extend((0..self.partition.count() as usize).map(|p| p % workers));
        a
    }

    pub fn run(&self, mode: &EngineMode, end: SimTime, record_log: bool) -> Result<RunOutput<SimActor>, SimError> {
        let opts = RunOptions { end, record_log };
        match *mode {
            EngineMode::Sequential => run_sequential(self.actors(), self.initial_events(), &opts),
            EngineMode::Parallel { workers, gvt_interval } => {
                let cfg = ParallelConfig::new(workers, gvt_interval, self.assignment(workers));
                run_parallel(self.actors(), self.initial_events(), &opts, &cfg)
            }
        }
    }
}

/// A cycle of full links, each holding a vehicle that waits for storage on the
/// next one. Nothing on the cycle can ever move again.
pub fn find_gridlock(actors: &[SimActor]) -> Option<Vec<LinkId>> {
    let links: BTreeMap<LinkId, &LinkActor> =
        actors.iter().filter_map(SimActor::as_link).map(|l| (l.id(), l)).collect();
    // waits_on[a] = full links that a has a vehicle queued for
    let mut waits_on: BTreeMap<LinkId, Vec<LinkId>> = BTreeMap::new();
    for (&id, l) in &links {
        if l.occupancy() < l.storage() {
            continue;
        }
        for up in l.blocked_upstream() {
            waits_on.entry(up).or_default().push(id);
        }
    }
    // iterative DFS with colors
    let mut color: BTreeMap<LinkId, u8> = BTreeMap::new();
    for &start in waits_on.keys() {
        if color.contains_key(&start) {
            continue;
        }
        let mut stack: Vec<(LinkId, usize)> = vec![(start, 0)];
        color.insert(start, 1);
        while let Some((u, i)) = stack.pop() {
            let next = waits_on.get(&u).and_then(|v| v.get(i)).copied();
            let Some(v) = next else {
                color.insert(u, 2);
                continue;
            };
            stack.push((u, i + 1));
            match color.get(&v) {
                None => {
                    color.insert(v, 1);
                    stack.push((v, 0));
                }
                Some(1) => {
                    let from = stack.iter().position(|&(n, _)| n == v).expect("grey nodes are on the stack");
                    return Some(stack[from..].iter().map(|&(n, _)| n).collect());
                }
                _ => {}
            }
        }
    }
    None
}
