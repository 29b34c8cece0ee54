//! Mesoscopic traffic simulation on an optimistic parallel discrete event
//! engine, with vehicles that reroute around congestion reported by links.

pub mod audit;
pub mod control;
pub mod demand;
pub mod engine;
pub mod link;
pub mod metrics;
pub mod model;
pub mod network;
pub mod routing;
pub mod scenario;
pub mod time;
