//! Event payloads, vehicles and observations shared by the link and
//! controller actors.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::control::{ControllerActor, RerouteParams};
use crate::engine::{Actor, ActorId, Context, Message, SimError};
use crate::link::{LinkActor, LinkParams};
use crate::network::LinkId;
use crate::time::{Duration, SimTime};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TripId(pub u32);

impl fmt::Display for TripId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A movement out of a link: onto a downstream link, or off the network at the
/// trip's destination.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Maneuver {
    To(LinkId),
    Exit,
}

/// A vehicle executing one trip leg. Travels inside events between links.
#[derive(Clone, Debug, PartialEq)]
pub struct Vehicle {
    pub trip: TripId,
    pub depart: SimTime,
    /// Full path from the origin link to the destination link.
    pub path: Vec<LinkId>,
    /// Index into `path` of the link currently occupied.
    pub pos: usize,
    pub reroutable: bool,
    pub last_check: Option<SimTime>,
    pub reroutes: u32,
    /// Free-flow time of the initial route.
    pub freespeed: Duration,
    pub distance_m: f64,
}

impl Vehicle {
    pub fn current(&self) -> LinkId {
        self.path[self.pos]
    }

    /// Links after the current one.
    pub fn remainder(&self) -> &[LinkId] {
        &self.path[self.pos + 1..]
    }

    pub fn next_maneuver(&self) -> Maneuver {
        self.path.get(self.pos + 1).map_or(Maneuver::Exit, |&l| Maneuver::To(l))
    }
}

/// Event payloads. Priorities break ties among events at equal time and depth.
#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    /// Vehicle handed to a link. `from_origin` marks a trip start, which must
    /// still acquire storage on the origin link.
    VehicleArrival {
        vehicle: Box<Vehicle>,
        from_origin: bool,
    },
    EnqueueRequest {
        vehicle: TripId,
        from: LinkId,
        requested: SimTime,
    },
    ArrivedNotice {
        vehicle: TripId,
        accepted: SimTime,
    },
    LinkStatusUpdate {
        link: LinkId,
        traversal: Duration,
        heartbeat: bool,
    },
    Heartbeat,
    RerouteCheckRequest {
        vehicle: TripId,
        link: LinkId,
        remainder: Vec<LinkId>,
    },
    RerouteCheckResponse {
        vehicle: TripId,
        new_path: Option<Vec<LinkId>>,
    },
}

impl Message for Payload {
    fn priority(&self) -> u8 {
        match self {
            Payload::ArrivedNotice { .. } => 0,
            Payload::EnqueueRequest { .. } => 1,
            Payload::VehicleArrival { .. } => 2,
            Payload::LinkStatusUpdate { .. } => 3,
            Payload::Heartbeat => 4,
            Payload::RerouteCheckRequest { .. } => 5,
            Payload::RerouteCheckResponse { .. } => 6,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Payload::VehicleArrival { .. } => "VehicleArrival",
            Payload::EnqueueRequest { .. } => "EnqueueRequest",
            Payload::ArrivedNotice { .. } => "ArrivedNotice",
            Payload::LinkStatusUpdate { .. } => "LinkStatusUpdate",
            Payload::Heartbeat => "Heartbeat",
            Payload::RerouteCheckRequest { .. } => "RerouteCheckRequest",
            Payload::RerouteCheckResponse { .. } => "RerouteCheckResponse",
        }
    }
}

/// Model output, committed together with the event that produced it.
#[derive(Clone, Debug, PartialEq)]
pub enum Observation {
    /// Vehicle admitted onto a link.
    Entry {
        trip: TripId,
        link: LinkId,
        time: SimTime,
    },
    /// Vehicle left a link. `t1` and `t2` are the congestion and timing stage
    /// ends, `exit` the accepted transition time.
    Traversal {
        trip: TripId,
        link: LinkId,
        next: Maneuver,
        entry: SimTime,
        t1: SimTime,
        t2: SimTime,
        exit: SimTime,
    },
    TripComplete {
        trip: TripId,
        depart: SimTime,
        arrive: SimTime,
        freespeed: Duration,
        distance_m: f64,
        reroutes: u32,
        reroutable: bool,
    },
    RerouteCheck {
        trip: TripId,
        link: LinkId,
        time: SimTime,
    },
    RerouteDecision {
        trip: TripId,
        controller: u32,
        time: SimTime,
        switched: bool,
        old_cost: Duration,
        new_cost: Duration,
        unreachable: bool,
    },
    StatusBroadcast {
        link: LinkId,
        time: SimTime,
        traversal: Duration,
        heartbeat: bool,
    },
    Customization {
        controller: u32,
        time: SimTime,
    },
}

/// All tunable model parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelParams {
    pub link: LinkParams,
    pub reroute: RerouteParams,
}

/// Actor id layout: links first, then one controller per partition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub links: u32,
    pub controllers: u32,
}

impl Layout {
    pub fn link_actor(&self, link: LinkId) -> ActorId {
        ActorId(link.0)
    }

    pub fn controller_actor(&self, partition: u32) -> ActorId {
        ActorId(self.links + partition)
    }

    pub fn controller_actors(&self) -> impl Iterator<Item = ActorId> + '_ {
        (0..self.controllers).map(|p| self.controller_actor(p))
    }

    pub fn actor_count(&self) -> usize {
        (self.links + self.controllers) as usize
    }
}

#[derive(Clone, Debug)]
pub enum SimActor {
    Link(LinkActor),
    Controller(ControllerActor),
}

impl SimActor {
    pub fn as_link(&self) -> Option<&LinkActor> {
        match self {
            SimActor::Link(l) => Some(l),
            SimActor::Controller(_) => None,
        }
    }

    pub fn as_controller(&self) -> Option<&ControllerActor> {
        match self {
            SimActor::Controller(c) => Some(c),
            SimActor::Link(_) => None,
        }
    }
}

impl Actor for SimActor {
    type Msg = Payload;
    type Obs = Observation;

    fn handle(&mut self, msg: &Payload, ctx: &mut Context<Payload, Observation>) -> Result<(), SimError> {
        match self {
            SimActor::Link(link) => link.handle(msg, ctx),
            SimActor::Controller(c) => c.handle(msg, ctx),
        }
    }
}
