//! Vehicle controllers: network-wide congestion maps fed by link status
//! updates, and reroute checks answered against them.

mod router;

use std::sync::Arc;

pub use router::RoutingEngine;

use crate::engine::{Context, SimError};
use crate::model::{Layout, ModelParams, Observation, Payload};
use crate::network::{LinkId, Network};
use crate::routing::freespeed_weights;
use crate::time::{Duration, SimTime};

/// Rerouting protocol parameters, all in seconds except the ratios.
#[derive(Clone, Debug, PartialEq)]
pub struct RerouteParams {
    pub t_lsu: f64,
    pub r_lsu: f64,
    pub t_check: f64,
    pub t_delay: f64,
    pub r_delay: f64,
    /// Zero disables heartbeats and purging.
    pub heartbeat_period: f64,
    /// Silent periods after which a controller forgets a link's congestion.
    pub purge_periods: f64,
}

impl Default for RerouteParams {
    fn default() -> Self {
        RerouteParams {
            t_lsu: 60.0,
            r_lsu: 1.0,
            t_check: 300.0,
            t_delay: 120.0,
            r_delay: 0.2,
            heartbeat_period: 600.0,
            purge_periods: 2.0,
        }
    }
}

impl RerouteParams {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("t_lsu", self.t_lsu),
            ("r_lsu", self.r_lsu),
            ("t_check", self.t_check),
            ("t_delay", self.t_delay),
            ("r_delay", self.r_delay),
            ("heartbeat_period", self.heartbeat_period),
            ("purge_periods", self.purge_periods),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("{name} must be a non-negative number, got {v}"));
            }
        }
        Ok(())
    }
}

/// Whether a link whose reported time was `last` should broadcast `new`.
pub fn should_send_lsu(freespeed_time: f64, last: Duration, new: Duration, p: &RerouteParams) -> bool {
    let threshold = Duration::from_secs_f64(p.t_lsu.min(p.r_lsu * freespeed_time));
    (new - last).abs() >= threshold
}

/// Delay on a path must exceed this before alternatives are searched.
pub fn trigger_threshold(tf_path: Duration, p: &RerouteParams) -> Duration {
    Duration::from_secs_f64(p.t_delay.max(p.r_delay * tf_path.as_secs_f64()))
}

/// An alternative must save more than this to be accepted.
pub fn accept_threshold(tc_path: Duration, p: &RerouteParams) -> Duration {
    Duration::from_secs_f64(p.t_delay.max(p.r_delay * tc_path.as_secs_f64()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    /// Delay below the trigger threshold; no search.
    Keep,
    /// Searched; the best alternative did not save enough.
    Rejected,
    Accept,
    Unreachable,
}

/// Reroute decision for a path with free-flow cost `tf_path` and congested
/// cost `tc_path`. `search` is run only when the delay triggers a search and
/// returns the best alternative's congested cost.
pub fn reroute_decision(
    tf_path: Duration,
    tc_path: Duration,
    p: &RerouteParams,
    search: impl FnOnce() -> Option<Duration>,
) -> Decision {
    if tc_path - tf_path <= trigger_threshold(tf_path, p) {
        return Decision::Keep;
    }
    match search() {
        None => Decision::Unreachable,
        Some(alt) if tc_path - alt > accept_threshold(tc_path, p) => Decision::Accept,
        Some(_) => Decision::Rejected,
    }
}

#[derive(Debug)]
pub struct ControllerStatic {
    pub index: u32,
    pub net: Arc<Network>,
    pub freespeed: Vec<Duration>,
    pub layout: Layout,
    pub params: Arc<ModelParams>,
}

impl ControllerStatic {
    pub fn new(index: u32, net: Arc<Network>, layout: Layout, params: Arc<ModelParams>) -> Self {
        let freespeed = freespeed_weights(&net);
        ControllerStatic { index, net, freespeed, layout, params }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ControllerStats {
    pub updates_received: u64,
    pub checks: u64,
    pub switches: u64,
    pub unreachable: u64,
    pub purged: u64,
}

#[derive(Clone, Debug)]
pub struct ControllerActor {
    stat: Arc<ControllerStatic>,
    /// Last reported congested time and its receipt time, per link.
    congestion: Arc<Vec<Option<(Duration, SimTime)>>>,
    router: RoutingEngine,
    stats: ControllerStats,
}

impl ControllerActor {
    pub fn new(stat: Arc<ControllerStatic>) -> Self {
        let n = stat.net.link_count();
        let router = RoutingEngine::new(stat.freespeed.clone());
        ControllerActor { stat, congestion: Arc::new(vec![None; n]), router, stats: ControllerStats::default() }
    }

    pub fn index(&self) -> u32 {
        self.stat.index
    }

    pub fn stats(&self) -> &ControllerStats {
        &self.stats
    }

    pub fn customizations(&self) -> u64 {
        self.router.customizations()
    }

    /// Weight currently in the congestion map for `link`, falling back to free flow.
    pub fn effective_weight(&self, link: LinkId) -> Duration {
        match self.congestion[link.index()] {
            Some((w, _)) => w,
            None => self.stat.freespeed[link.index()],
        }
    }

    pub fn congestion_map(&self) -> Vec<Duration> {
        (0..self.congestion.len()).map(|i| self.effective_weight(LinkId(i as u32))).collect()
    }

    pub fn handle(&mut self, msg: &Payload, ctx: &mut Context<Payload, Observation>) -> Result<(), SimError> {
        match msg {
            Payload::LinkStatusUpdate { link, traversal, .. } => {
                self.on_update(*link, *traversal, ctx.now());
                Ok(())
            }
            Payload::RerouteCheckRequest { vehicle, link, remainder } => {
                let (decision, old, new) = self.check(*link, remainder, ctx)?;
                let switched = matches!(decision, Decision::Accept);
                ctx.emit(Observation::RerouteDecision {
                    trip: *vehicle,
                    controller: self.stat.index,
                    time: ctx.now(),
                    switched,
                    old_cost: old,
                    new_cost: new.as_ref().map_or(old, |(c, _)| *c),
                    unreachable: decision == Decision::Unreachable,
                });
                let new_path = if switched { new.map(|(_, p)| p) } else { None };
                let now = ctx.now();
                ctx.send(
                    self.stat.layout.link_actor(*link),
                    now,
                    Payload::RerouteCheckResponse { vehicle: *vehicle, new_path },
                )
            }
            other => Err(ctx.fault(format!("controller cannot handle {other:?}"))),
        }
    }

    fn on_update(&mut self, link: LinkId, traversal: Duration, now: SimTime) {
        let Some(tf) = self.stat.freespeed.get(link.index()).copied() else {
            return;
        };
        let w = traversal.max(tf);
        Arc::make_mut(&mut self.congestion)[link.index()] = Some((w, now));
        self.router.update(link, w);
        self.stats.updates_received += 1;
    }

    /// Drops entries not refreshed within the purge horizon.
    fn purge(&mut self, now: SimTime) {
        let p = &self.stat.params.reroute;
        if p.heartbeat_period <= 0.0 {
            return;
        }
        let horizon = Duration::from_secs_f64(p.heartbeat_period * p.purge_periods);
        let stale: Vec<usize> = self
            .congestion
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.filter(|&(_, t)| now - t > horizon).map(|_| i))
            .collect();
        if stale.is_empty() {
            return;
        }
        let map = Arc::make_mut(&mut self.congestion);
        for i in stale {
            map[i] = None;
            self.router.update(LinkId(i as u32), self.stat.freespeed[i]);
            self.stats.purged += 1;
        }
    }

    #[allow(clippy::type_complexity)]
    fn check(
        &mut self,
        link: LinkId,
        remainder: &[LinkId],
        ctx: &mut Context<Payload, Observation>,
    ) -> Result<(Decision, Duration, Option<(Duration, Vec<LinkId>)>), SimError> {
        let net = Arc::clone(&self.stat.net);
        let (Some(first), Some(last)) = (remainder.first(), remainder.last()) else {
            return Err(ctx.fault("reroute check with an empty path remainder".to_string()));
        };
        let at = net.link(link).to;
        if net.link(*first).from != at {
            return Err(
                ctx.fault(format!("reroute check from link {link} whose remainder does not start at its head node"))
            );
        }
        let dest = net.link(*last).to;
        self.stats.checks += 1;
        self.purge(ctx.now());
        let tf: Duration = remainder.iter().map(|l| self.stat.freespeed[l.index()]).sum();
        let tc: Duration = remainder.iter().map(|&l| self.effective_weight(l)).sum();
        let mut found = None;
        let mut customized = false;
        let decision = reroute_decision(tf, tc, &self.stat.params.reroute, || {
            let (route, c) = self.router.query(&net, at, dest);
            customized = c;
            let route = route?;
            let cost = route.cost;
            found = Some((cost, route.links));
            Some(cost)
        });
        if customized {
            ctx.emit(Observation::Customization { controller: self.stat.index, time: ctx.now() });
        }
        match decision {
            Decision::Accept => self.stats.switches += 1,
            Decision::Unreachable => self.stats.unreachable += 1,
            _ => {}
        }
        Ok((decision, tc, found))
    }
}
