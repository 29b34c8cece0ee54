//! Discrete event kernel.
//!
//! Actors own all model state and only interact through timestamped events.
//! Two executors share the same contract: [`run_sequential`] processes events in
//! strict [`EventKey`] order on one thread, while [`run_parallel`] runs the same
//! actors optimistically across workers and rolls back misspeculated work. The
//! committed per-actor event sequences of both executors are identical.
//!
//! Event keys order lexicographically on `(time, depth, priority, origin, seq)`.
//! `depth` counts zero-delay hops: an event sent for the sender's own timestamp
//! gets `depth + 1`, anything later starts over at zero. Every sent key is thus
//! strictly greater than the key of the event that produced it, so each actor's
//! processed keys increase even when a handler replies instantly with a
//! lower-priority message. `(origin, seq)` identify the sending actor and its
//! private send counter; the counter is part of the saved actor state, which
//! makes keys reproducible under rollback and independent of worker layout.

mod parallel;
mod sequential;

use std::fmt;
use std::io::{self, Write};

use thiserror::Error;

use crate::time::SimTime;

pub use parallel::{run_parallel, ParallelConfig};
pub use sequential::run_sequential;

/// Identifier of an actor in the engine's actor table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActorId(pub u32);

impl fmt::Display for ActorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Origin tag of events injected before the run starts.
pub const EXTERNAL_ORIGIN: u32 = u32::MAX;

/// Total order over all events of a run. No two events share a key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventKey {
    pub time: SimTime,
    pub depth: u32,
    pub priority: u8,
    pub origin: u32,
    pub seq: u64,
}

/// Payload types carried by events.
pub trait Message: Clone + Send + fmt::Debug {
    /// Tie-break rank among events at the same time and depth.
    fn priority(&self) -> u8;
    /// Short name used in the event log.
    fn kind(&self) -> &'static str;
}

#[derive(Clone, Debug)]
pub struct Event<M> {
    pub key: EventKey,
    pub dest: ActorId,
    pub msg: M,
}

impl<M: Message> Event<M> {
    /// Builds the `index`-th externally injected event.
    pub fn initial(index: u64, dest: ActorId, time: SimTime, msg: M) -> Self {
        Event {
            key: EventKey { time, depth: 0, priority: msg.priority(), origin: EXTERNAL_ORIGIN, seq: index },
            dest,
            msg,
        }
    }
}

impl<M> PartialEq for Event<M> {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl<M> Eq for Event<M> {}

impl<M> PartialOrd for Event<M> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<M> Ord for Event<M> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key.cmp(&other.key)
    }
}

/// Simulation entity. Handlers must be deterministic functions of the actor's
/// state and the incoming event; the engine snapshots state by cloning it.
pub trait Actor: Clone + Send {
    type Msg: Message;
    /// Model output records, delivered once the producing event commits.
    type Obs: Clone + Send;

    fn handle(&mut self, msg: &Self::Msg, ctx: &mut Context<Self::Msg, Self::Obs>) -> Result<(), SimError>;
}

/// Handler-side view of the engine: current time, sending and output.
pub struct Context<M, O> {
    key: EventKey,
    me: ActorId,
    next_seq: u64,
    sends: Vec<Event<M>>,
    obs: Vec<O>,
}

impl<M: Message, O> Context<M, O> {
    pub(crate) fn new(key: EventKey, me: ActorId, next_seq: u64) -> Self {
        Context { key, me, next_seq, sends: Vec::new(), obs: Vec::new() }
    }

    pub fn now(&self) -> SimTime {
        self.key.time
    }

    pub fn key(&self) -> &EventKey {
        &self.key
    }

    pub fn me(&self) -> ActorId {
        self.me
    }

    /// Schedules `msg` for `dest` at `time`, which must not precede the current time.
    pub fn send(&mut self, dest: ActorId, time: SimTime, msg: M) -> Result<(), SimError> {
        if time < self.key.time {
            return Err(SimError::SendIntoPast { actor: self.me, now: self.key.time, time });
        }
        let depth = if time == self.key.time { self.key.depth + 1 } else { 0 };
        let key = EventKey { time, depth, priority: msg.priority(), origin: self.me.0, seq: self.next_seq };
        self.next_seq += 1;
        self.sends.push(Event { key, dest, msg });
        Ok(())
    }

    pub fn emit(&mut self, obs: O) {
        self.obs.push(obs);
    }

    /// Builds a model fault tagged with this actor and time.
    pub fn fault(&self, reason: impl Into<String>) -> SimError {
        SimError::Model { actor: self.me, time: self.key.time, reason: reason.into() }
    }

    pub(crate) fn finish(self) -> (u64, Vec<Event<M>>, Vec<O>) {
        (self.next_seq, self.sends, self.obs)
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum SimError {
    #[error("event at {time} addressed to unknown actor {dest}")]
    UnknownActor { dest: ActorId, time: SimTime },
    #[error("actor {actor} at {now} tried to send an event into the past ({time})")]
    SendIntoPast { actor: ActorId, now: SimTime, time: SimTime },
    #[error("actor {actor} at {time}: {reason}")]
    Model { actor: ActorId, time: SimTime, reason: String },
    #[error("parallel engine stalled: {0}")]
    Stalled(String),
    #[error("invalid engine configuration: {0}")]
    Config(String),
}

/// Executed-event accounting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CommitStats {
    pub committed: u64,
    pub rolled_back: u64,
}

impl CommitStats {
    /// committed / (committed + rolled back); 1 when nothing executed.
    pub fn efficiency(&self) -> f64 {
        let total = self.committed + self.rolled_back;
        if total == 0 {
            1.0
        } else {
            self.committed as f64 / total as f64
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LogEntry {
    pub key: EventKey,
    pub dest: ActorId,
    pub kind: &'static str,
}

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    /// Events with `time >= end` are left unprocessed.
    pub end: SimTime,
    pub record_log: bool,
}

impl RunOptions {
    pub fn until(end: SimTime) -> Self {
        RunOptions { end, record_log: false }
    }
}

pub struct RunOutput<A: Actor> {
    /// Final actor states, indexed by actor id.
    pub actors: Vec<A>,
    pub stats: CommitStats,
    /// Committed observations in event-key order.
    pub observations: Vec<A::Obs>,
    /// Committed events in key order, when requested.
    pub log: Option<Vec<LogEntry>>,
    /// Events left unprocessed at the end time.
    pub pending: usize,
}

/// Writes the committed event log as `time_us,priority,seq,dest_actor,payload_kind`.
/// `seq` is the event's rank in the total key order.
pub fn write_event_log<W: Write>(mut out: W, log: &[LogEntry]) -> io::Result<()> {
    writeln!(out, "time_us,priority,seq,dest_actor,payload_kind")?;
    for (rank, e) in log.iter().enumerate() {
        writeln!(out, "{},{},{},{},{}", e.key.time.as_micros(), e.key.priority, rank, e.dest, e.kind)?;
    }
    Ok(())
}

fn check_actor_ids<M>(count: usize, events: &[Event<M>]) -> Result<(), SimError> {
    for e in events {
        if e.dest.0 as usize >= count {
            return Err(SimError::UnknownActor { dest: e.dest, time: e.key.time });
        }
    }
    Ok(())
}
