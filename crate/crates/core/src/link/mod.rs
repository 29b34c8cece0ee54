//! Link actor.
//!
//! A vehicle entering a link at `T0` gets a congestion-delayed stop-line time
//! `T1 = T0 + ΔT1` from the volume delay function, then joins the FIFO queue of
//! its maneuver. Only the head of each maneuver queue is scheduled: it receives
//! its timing-constrained time `T2` and sends an `EnqueueRequest` to the
//! downstream link for that instant. The downstream link admits it when it has
//! storage left (immediately, or later when a vehicle leaves), answering with an
//! `ArrivedNotice` at `T3`. The upstream link then forwards the vehicle, frees
//! the slot, schedules the next head and possibly admits its own waiters.
//!
//! Each link's occupancy counts admitted vehicles, including those whose
//! `VehicleArrival` is still in flight (`reserved`).

mod timing;
mod vdf;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use crate::control::{should_send_lsu, RerouteParams};
use crate::engine::{ActorId, Context, SimError};
use crate::model::{Layout, Maneuver, ModelParams, Observation, Payload, TripId, Vehicle};
use crate::network::{Link, LinkId, SignalPlan};
use crate::time::{Duration, SimTime};

pub use timing::{timing_constraint, ManeuverClock, ZeroGreen};
pub use vdf::{congestion_delay, FlowWindow, VdfParams};

/// What a link reports to controllers as its congested traversal time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LsuMode {
    /// Current ΔT1 plus the mean ΔT2 + ΔT3 of departures in the flow window.
    Full,
    /// Current ΔT1 only.
    DelayFunction,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkParams {
    pub vdf: VdfParams,
    pub saturation_vph_per_lane: f64,
    pub lsu_mode: LsuMode,
}

impl Default for LinkParams {
    fn default() -> Self {
        LinkParams { vdf: VdfParams::default(), saturation_vph_per_lane: 1800.0, lsu_mode: LsuMode::Full }
    }
}

/// Minimum spacing between transitions of one maneuver.
pub fn headway(lanes: u32, saturation_vph_per_lane: f64) -> Duration {
    Duration::from_secs_f64(3600.0 / (saturation_vph_per_lane * lanes as f64))
}

/// Immutable per-link data shared by all snapshots of the actor.
#[derive(Debug)]
pub struct LinkStatic {
    pub id: LinkId,
    pub length_m: f64,
    pub freespeed_time: f64,
    pub capacity_vph: f64,
    pub storage: u32,
    pub headway: Duration,
    pub signal: Option<SignalPlan>,
    pub home_controller: ActorId,
    pub layout: Layout,
    pub params: Arc<ModelParams>,
}

impl LinkStatic {
    pub fn new(link: &Link, home_partition: u32, layout: Layout, params: Arc<ModelParams>) -> Self {
        LinkStatic {
            id: link.id,
            length_m: link.length_m,
            freespeed_time: link.freespeed_time(),
            capacity_vph: link.capacity_vph,
            storage: link.storage_capacity(),
            headway: headway(link.lanes, params.link.saturation_vph_per_lane),
            signal: link.signal.clone(),
            home_controller: layout.controller_actor(home_partition),
            layout,
            params,
        }
    }

    fn reroute(&self) -> &RerouteParams {
        &self.params.reroute
    }
}

#[derive(Clone, Debug, PartialEq)]
struct OnLink {
    vehicle: Vehicle,
    entered: SimTime,
    t1: SimTime,
    t2: Option<SimTime>,
}

#[derive(Clone, Debug, Default, PartialEq)]
struct ManeuverQueue {
    waiting: VecDeque<TripId>,
    /// Head vehicle whose transition is scheduled or requested.
    scheduled: Option<TripId>,
    clock: ManeuverClock,
}

#[derive(Clone, Debug, PartialEq)]
enum Waiter {
    Upstream { vehicle: TripId, from: LinkId },
    Origin(Box<Vehicle>),
}

#[derive(Clone, Debug)]
pub struct LinkActor {
    stat: Arc<LinkStatic>,
    occupancy: u32,
    reserved: u32,
    vehicles: BTreeMap<TripId, OnLink>,
    queues: BTreeMap<Maneuver, ManeuverQueue>,
    waiters: VecDeque<Waiter>,
    waiting_ids: BTreeSet<TripId>,
    flow: FlowWindow,
    /// (departure time, ΔT2 + ΔT3) of recent departures.
    recent_hold: VecDeque<(SimTime, Duration)>,
    last_reported: Duration,
    last_entry: Option<SimTime>,
    heartbeat_scheduled: bool,
}

impl LinkActor {
    pub fn new(stat: Arc<LinkStatic>) -> Self {
        let last_reported = Duration::from_secs_f64(stat.freespeed_time);
        LinkActor {
            stat,
            occupancy: 0,
            reserved: 0,
            vehicles: BTreeMap::new(),
            queues: BTreeMap::new(),
            waiters: VecDeque::new(),
            waiting_ids: BTreeSet::new(),
            flow: FlowWindow::default(),
            recent_hold: VecDeque::new(),
            last_reported,
            last_entry: None,
            heartbeat_scheduled: false,
        }
    }

    pub fn id(&self) -> LinkId {
        self.stat.id
    }

    pub fn occupancy(&self) -> u32 {
        self.occupancy
    }

    pub fn storage(&self) -> u32 {
        self.stat.storage
    }

    /// Vehicles currently held on the link (admitted and arrived).
    pub fn vehicles_on_link(&self) -> usize {
        self.vehicles.len()
    }

    pub fn waiting_count(&self) -> usize {
        self.waiters.len()
    }

    /// Upstream links with a vehicle waiting for storage here.
    pub fn blocked_upstream(&self) -> Vec<LinkId> {
        self.waiters
            .iter()
            .filter_map(|w| match w {
                Waiter::Upstream { from, .. } => Some(*from),
                Waiter::Origin(_) => None,
            })
            .collect()
    }

    /// Downstream targets of every maneuver queue holding vehicles.
    pub fn occupied_maneuvers(&self) -> Vec<Maneuver> {
        self.queues.iter().filter(|(_, q)| q.scheduled.is_some() || !q.waiting.is_empty()).map(|(m, _)| *m).collect()
    }

    /// The traversal time last broadcast to controllers.
    pub fn last_reported(&self) -> Duration {
        self.last_reported
    }

    /// Occupancy bookkeeping identity: admitted = held + in flight.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.occupancy > self.stat.storage {
            return Err(format!(
                "link {} occupancy {} exceeds storage {}",
                self.id(),
                self.occupancy,
                self.stat.storage
            ));
        }
        if self.occupancy as usize != self.vehicles.len() + self.reserved as usize {
            return Err(format!(
                "link {} occupancy {} != held {} + reserved {}",
                self.id(),
                self.occupancy,
                self.vehicles.len(),
                self.reserved
            ));
        }
        Ok(())
    }

    pub fn handle(&mut self, msg: &Payload, ctx: &mut Context<Payload, Observation>) -> Result<(), SimError> {
        match msg {
            Payload::VehicleArrival { vehicle, from_origin } => self.on_arrival(vehicle, *from_origin, ctx),
            Payload::EnqueueRequest { vehicle, from, .. } => self.on_enqueue_request(*vehicle, *from, ctx),
            Payload::ArrivedNotice { vehicle, .. } => self.on_arrived_notice(*vehicle, ctx),
            Payload::RerouteCheckResponse { vehicle, new_path } => {
                self.on_reroute_response(*vehicle, new_path.as_deref(), ctx)
            }
            Payload::Heartbeat => self.on_heartbeat(ctx),
            other => Err(ctx.fault(format!("link cannot handle {other:?}"))),
        }
    }

    fn on_arrival(
        &mut self,
        vehicle: &Vehicle,
        from_origin: bool,
        ctx: &mut Context<Payload, Observation>,
    ) -> Result<(), SimError> {
        if vehicle.current() != self.id() {
            return Err(ctx.fault(format!("vehicle {} delivered to link {} off its path", vehicle.trip, self.id())));
        }
        if from_origin {
            if self.waiters.is_empty() && self.occupancy < self.stat.storage {
                self.occupancy += 1;
                self.enter(vehicle.clone(), ctx)
            } else {
                self.waiters.push_back(Waiter::Origin(Box::new(vehicle.clone())));
                Ok(())
            }
        } else {
            if self.reserved == 0 {
                return Err(ctx.fault(format!("vehicle {} arrived without an admitted slot", vehicle.trip)));
            }
            self.reserved -= 1;
            self.enter(vehicle.clone(), ctx)
        }
    }

    /// Congestion stage and reroute gate for a vehicle just admitted.
    fn enter(&mut self, mut vehicle: Vehicle, ctx: &mut Context<Payload, Observation>) -> Result<(), SimError> {
        let now = ctx.now();
        let vdf = self.stat.params.link.vdf;
        // flow seen by this vehicle excludes itself
        let q = self.flow.estimate(now, vdf.window);
        let delay = congestion_delay(self.stat.freespeed_time, q, self.stat.capacity_vph, &vdf);
        self.flow.record(now);
        self.last_entry = Some(now);
        ctx.emit(Observation::Entry { trip: vehicle.trip, link: self.id(), time: now });

        let trip = vehicle.trip;
        let check = self.wants_check(&vehicle, now);
        if check {
            vehicle.last_check = Some(now);
            ctx.emit(Observation::RerouteCheck { trip, link: self.id(), time: now });
            ctx.send(
                self.stat.home_controller,
                now,
                Payload::RerouteCheckRequest {
                    vehicle: trip,
                    link: self.id(),
                    remainder: vehicle.remainder().to_vec(),
                },
            )?;
        }
        self.vehicles
            .insert(trip, OnLink { vehicle, entered: now, t1: now + Duration::from_secs_f64(delay), t2: None });
        self.ensure_heartbeat(ctx)?;
        if !check {
            self.join_queue(trip, ctx)?;
        }
        Ok(())
    }

    fn wants_check(&self, v: &Vehicle, now: SimTime) -> bool {
        let interval = Duration::from_secs_f64(self.stat.reroute().t_check);
        v.reroutable && v.remainder().len() >= 2 && v.last_check.is_none_or(|last| now - last > interval)
    }

    fn on_reroute_response(
        &mut self,
        trip: TripId,
        new_path: Option<&[LinkId]>,
        ctx: &mut Context<Payload, Observation>,
    ) -> Result<(), SimError> {
        let Some(on) = self.vehicles.get_mut(&trip) else {
            return Err(ctx.fault(format!("reroute response for unknown vehicle {trip}")));
        };
        if let Some(p) = new_path {
            let pos = on.vehicle.pos;
            on.vehicle.path.truncate(pos + 1);
            on.vehicle.path.extend_from_slice(p);
            on.vehicle.reroutes += 1;
        }
        self.join_queue(trip, ctx)
    }

    fn join_queue(&mut self, trip: TripId, ctx: &mut Context<Payload, Observation>) -> Result<(), SimError> {
        let m = self.vehicles[&trip].vehicle.next_maneuver();
        let q = self.queues.entry(m).or_default();
        q.waiting.push_back(trip);
        self.advance(m, ctx)
    }

    /// Schedules the head of maneuver `m` if nothing is outstanding.
    fn advance(&mut self, m: Maneuver, ctx: &mut Context<Payload, Observation>) -> Result<(), SimError> {
        let Some(q) = self.queues.get_mut(&m) else {
            return Ok(());
        };
        if q.scheduled.is_some() {
            return Ok(());
        }
        let Some(trip) = q.waiting.pop_front() else {
            return Ok(());
        };
        let on = self.vehicles.get_mut(&trip).expect("queued vehicles are held");
        let signal = match (&self.stat.signal, m) {
            (Some(plan), Maneuver::To(next)) => {
                Some((plan, plan.maneuvers.get(&next).map(Vec::as_slice).unwrap_or(&[])))
            }
            _ => None,
        };
        let ready = on.t1.max(ctx.now());
        let t2 = timing_constraint(&mut q.clock, self.stat.headway, signal, ready)
            .map_err(|_| ctx.fault(format!("signal plan gives no green time for maneuver {m:?}")))?;
        on.t2 = Some(t2);
        q.scheduled = Some(trip);
        match m {
            Maneuver::To(next) => ctx.send(
                self.stat.layout.link_actor(next),
                t2,
                Payload::EnqueueRequest { vehicle: trip, from: self.id(), requested: t2 },
            ),
            Maneuver::Exit => ctx.send(ctx.me(), t2, Payload::ArrivedNotice { vehicle: trip, accepted: t2 }),
        }
    }

    fn on_enqueue_request(
        &mut self,
        trip: TripId,
        from: LinkId,
        ctx: &mut Context<Payload, Observation>,
    ) -> Result<(), SimError> {
        if !self.waiting_ids.insert(trip) {
            return Err(ctx.fault(format!("duplicate enqueue request for vehicle {trip}")));
        }
        self.waiters.push_back(Waiter::Upstream { vehicle: trip, from });
        self.admit_waiters(ctx)
    }

    /// Admits queued requests in FIFO order while storage remains.
    fn admit_waiters(&mut self, ctx: &mut Context<Payload, Observation>) -> Result<(), SimError> {
        while self.occupancy < self.stat.storage {
            let Some(w) = self.waiters.pop_front() else {
                break;
            };
            self.occupancy += 1;
            match w {
                Waiter::Upstream { vehicle, from } => {
                    self.waiting_ids.remove(&vehicle);
                    self.reserved += 1;
                    let now = ctx.now();
                    ctx.send(
                        self.stat.layout.link_actor(from),
                        now,
                        Payload::ArrivedNotice { vehicle, accepted: now },
                    )?;
                }
                Waiter::Origin(v) => self.enter(*v, ctx)?,
            }
        }
        Ok(())
    }

    fn on_arrived_notice(&mut self, trip: TripId, ctx: &mut Context<Payload, Observation>) -> Result<(), SimError> {
        let now = ctx.now();
        let Some(mut on) = self.vehicles.remove(&trip) else {
            return Err(ctx.fault(format!("arrived notice for unknown vehicle {trip}")));
        };
        let m = on.vehicle.next_maneuver();
        let q = self.queues.get_mut(&m).filter(|q| q.scheduled == Some(trip));
        let Some(q) = q else {
            return Err(ctx.fault(format!("arrived notice for vehicle {trip}, which has no outstanding request")));
        };
        q.scheduled = None;
        q.clock.observe(now);
        self.occupancy -= 1;

        let t2 = on.t2.expect("scheduled vehicles have T2");
        on.vehicle.distance_m += self.stat.length_m;
        ctx.emit(Observation::Traversal {
            trip,
            link: self.id(),
            next: m,
            entry: on.entered,
            t1: on.t1,
            t2,
            exit: now,
        });
        self.recent_hold.push_back((now, now - on.t1));

        let mut vehicle = on.vehicle;
        match m {
            Maneuver::To(next) => {
                vehicle.pos += 1;
                ctx.send(
                    self.stat.layout.link_actor(next),
                    now,
                    Payload::VehicleArrival { vehicle: Box::new(vehicle), from_origin: false },
                )?;
            }
            Maneuver::Exit => ctx.emit(Observation::TripComplete {
                trip,
                depart: vehicle.depart,
                arrive: now,
                freespeed: vehicle.freespeed,
                distance_m: vehicle.distance_m,
                reroutes: vehicle.reroutes,
                reroutable: vehicle.reroutable,
            }),
        }
        self.advance(m, ctx)?;
        self.admit_waiters(ctx)?;

        let current = self.current_traversal(now);
        if should_send_lsu(self.stat.freespeed_time, self.last_reported, current, self.stat.reroute()) {
            self.last_reported = current;
            self.broadcast(current, false, ctx)?;
        }
        Ok(())
    }

    /// Congested traversal time the link currently expects.
    pub fn current_traversal(&mut self, now: SimTime) -> Duration {
        let vdf = self.stat.params.link.vdf;
        let q = self.flow.estimate(now, vdf.window);
        let base = Duration::from_secs_f64(congestion_delay(self.stat.freespeed_time, q, self.stat.capacity_vph, &vdf));
        match self.stat.params.link.lsu_mode {
            LsuMode::DelayFunction => base,
            LsuMode::Full => {
                let floor = now - vdf.window;
                while self.recent_hold.front().is_some_and(|&(t, _)| t <= floor) {
                    self.recent_hold.pop_front();
                }
                if self.recent_hold.is_empty() {
                    return base;
                }
                let total: i64 = self.recent_hold.iter().map(|(_, d)| d.as_micros()).sum();
                base + Duration::from_micros(total / self.recent_hold.len() as i64)
            }
        }
    }

    fn broadcast(
        &mut self,
        traversal: Duration,
        heartbeat: bool,
        ctx: &mut Context<Payload, Observation>,
    ) -> Result<(), SimError> {
        let now = ctx.now();
        for c in self.stat.layout.controller_actors() {
            ctx.send(c, now, Payload::LinkStatusUpdate { link: self.id(), traversal, heartbeat })?;
        }
        ctx.emit(Observation::StatusBroadcast { link: self.id(), time: now, traversal, heartbeat });
        Ok(())
    }

    fn heartbeat_period(&self) -> Option<Duration> {
        let p = self.stat.reroute().heartbeat_period;
        (p > 0.0).then(|| Duration::from_secs_f64(p))
    }

    fn ensure_heartbeat(&mut self, ctx: &mut Context<Payload, Observation>) -> Result<(), SimError> {
        if self.heartbeat_scheduled {
            return Ok(());
        }
        if let Some(period) = self.heartbeat_period() {
            self.heartbeat_scheduled = true;
            ctx.send(ctx.me(), ctx.now() + period, Payload::Heartbeat)?;
        }
        Ok(())
    }

    fn on_heartbeat(&mut self, ctx: &mut Context<Payload, Observation>) -> Result<(), SimError> {
        let Some(period) = self.heartbeat_period() else {
            return Ok(());
        };
        let now = ctx.now();
        let active = self.occupancy > 0 || self.last_entry.is_some_and(|e| now - e < period);
        if active {
            self.broadcast(self.last_reported, true, ctx)?;
            ctx.send(ctx.me(), now + period, Payload::Heartbeat)?;
        } else {
            self.heartbeat_scheduled = false;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
