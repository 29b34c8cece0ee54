//! Optimistic executor.
//!
//! Each worker owns a fixed set of actors and processes its pending events in
//! key order without waiting for the others. A late event (straggler) or an
//! anti-message for an already processed event rolls the affected actor back:
//! saved snapshots are restored, the undone events return to the pending set and
//! every event they sent is cancelled with an anti-message.
//!
//! Global virtual time is computed in synchronous rounds. All workers stop,
//! drain channels until no message is in flight anywhere, then publish the
//! smallest pending key. The minimum over workers is a lower bound on any event
//! that can still be produced, so processed events below it are committed.

use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicBool, AtomicI64, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Barrier, Mutex};
use std::time::{Duration as WallDuration, Instant};

use super::{
    check_actor_ids, Actor, ActorId, CommitStats, Context, Event, EventKey, LogEntry, Message, RunOptions, RunOutput,
    SimError,
};
use crate::time::{Duration, SimTime};

#[derive(Clone, Debug)]
pub struct ParallelConfig {
    pub workers: usize,
    /// Optimism window: workers only run events earlier than GVT + this.
    pub gvt_interval: Duration,
    /// Worker index for each actor id.
    pub assignment: Vec<usize>,
    /// Events a worker may process between GVT rounds.
    pub batch: usize,
    /// Wall-clock budget for draining in-flight messages before declaring a stall.
    pub stall_timeout: WallDuration,
}

impl ParallelConfig {
    pub fn new(workers: usize, gvt_interval: Duration, assignment: Vec<usize>) -> Self {
        ParallelConfig { workers, gvt_interval, assignment, batch: 2048, stall_timeout: WallDuration::from_secs(60) }
    }
}

enum Wire<M> {
    Event(Event<M>),
    Anti { dest: ActorId, key: EventKey },
}

struct Processed<A: Actor> {
    event: Event<A::Msg>,
    before: A,
    before_seq: u64,
    sent: Vec<(ActorId, EventKey)>,
    obs: Vec<A::Obs>,
    fault: Option<SimError>,
}

struct Slot<A: Actor> {
    id: ActorId,
    state: A,
    seq: u64,
    history: Vec<Processed<A>>,
}

struct Shared<M> {
    senders: Vec<Mutex<Sender<Wire<M>>>>,
    in_flight: AtomicI64,
    barrier: Barrier,
    local_min: Vec<Mutex<Option<EventKey>>>,
    failed: AtomicBool,
    stalled: AtomicBool,
}

struct WorkerResult<A: Actor> {
    slots: Vec<(ActorId, A)>,
    committed: Vec<(EventKey, Vec<A::Obs>)>,
    log: Vec<LogEntry>,
    stats: CommitStats,
    fault: Option<(EventKey, SimError)>,
    stall: Option<String>,
    pending: usize,
}

struct Worker<'a, A: Actor> {
    index: usize,
    slots: Vec<Slot<A>>,
    local: &'a [Option<usize>],
    owner: &'a [usize],
    pending: BTreeMap<EventKey, Event<A::Msg>>,
    loopback: VecDeque<Wire<A::Msg>>,
    rx: Receiver<Wire<A::Msg>>,
    shared: &'a Shared<A::Msg>,
    record_log: bool,
    committed: Vec<(EventKey, Vec<A::Obs>)>,
    log: Vec<LogEntry>,
    stats: CommitStats,
    fault: Option<(EventKey, SimError)>,
    broken: Option<String>,
}

impl<'a, A: Actor> Worker<'a, A> {
    fn slot_of(&self, dest: ActorId) -> usize {
        self.local[dest.0 as usize].expect("event routed to the wrong worker")
    }

    fn route(&mut self, wire: Wire<A::Msg>) {
        let dest = match &wire {
            Wire::Event(e) => e.dest,
            Wire::Anti { dest, .. } => *dest,
        };
        let owner = self.owner[dest.0 as usize];
        if owner == self.index {
            self.loopback.push_back(wire);
        } else {
            self.shared.in_flight.fetch_add(1, Ordering::SeqCst);
            let tx = self.shared.senders[owner].lock().expect("sender lock");
            // Receivers live until every worker has passed the final barrier.
            let _ = tx.send(wire);
        }
    }

    fn apply(&mut self, wire: Wire<A::Msg>) {
        self.loopback.push_back(wire);
        while let Some(w) = self.loopback.pop_front() {
            match w {
                Wire::Event(e) => self.deliver(e),
                Wire::Anti { dest, key } => self.annihilate(dest, key),
            }
        }
    }

    fn deliver(&mut self, ev: Event<A::Msg>) {
        let s = self.slot_of(ev.dest);
        if self.slots[s].history.last().is_some_and(|p| p.event.key > ev.key) {
            self.rollback(s, ev.key);
        }
        self.pending.insert(ev.key, ev);
    }

    fn annihilate(&mut self, dest: ActorId, key: EventKey) {
        if self.pending.remove(&key).is_some() {
            return;
        }
        let s = self.slot_of(dest);
        if self.slots[s].history.iter().any(|p| p.event.key == key) {
            self.rollback(s, key);
            self.pending.remove(&key);
        } else if self.broken.is_none() {
            self.broken = Some(format!("anti-message for unknown event {key:?} at actor {dest}"));
        }
    }

    /// Undoes every processed event of slot `s` with key >= `key`.
    fn rollback(&mut self, s: usize, key: EventKey) {
        while self.slots[s].history.last().is_some_and(|p| p.event.key >= key) {
            let p = self.slots[s].history.pop().expect("checked");
            self.slots[s].state = p.before;
            self.slots[s].seq = p.before_seq;
            for (dest, k) in p.sent {
                self.route(Wire::Anti { dest, key: k });
            }
            self.pending.insert(p.event.key, p.event);
            self.stats.rolled_back += 1;
        }
    }

    fn drain(&mut self) {
        while let Ok(w) = self.rx.try_recv() {
            self.apply(w);
            self.shared.in_flight.fetch_sub(1, Ordering::SeqCst);
        }
    }

    /// Processes the smallest pending event earlier than `limit`, if any.
    fn step(&mut self, limit: SimTime) -> bool {
        let Some((&key, _)) = self.pending.first_key_value() else {
            return false;
        };
        if key.time >= limit {
            return false;
        }
        let ev = self.pending.remove(&key).expect("present");
        let s = self.slot_of(ev.dest);
        let slot = &mut self.slots[s];
        let before = slot.state.clone();
        let before_seq = slot.seq;
        let mut ctx = Context::new(ev.key, ev.dest, slot.seq);
        let outcome = slot.state.handle(&ev.msg, &mut ctx);
        let (next_seq, sends, obs) = ctx.finish();
        let mut record = Processed { event: ev, before, before_seq, sent: Vec::new(), obs: Vec::new(), fault: None };
        let outcome = outcome.and_then(|_| check_actor_ids(self.owner.len(), &sends));
        match outcome {
            Ok(()) => {
                slot.seq = next_seq;
                record.obs = obs;
                record.sent = sends.iter().map(|e| (e.dest, e.key)).collect();
                slot.history.push(record);
                for e in sends {
                    self.route(Wire::Event(e));
                }
            }
            Err(err) => {
                // Possibly a misspeculation; only fatal if it commits.
                slot.state = record.before.clone();
                record.fault = Some(err);
                slot.history.push(record);
            }
        }
        while let Some(w) = self.loopback.pop_front() {
            match w {
                Wire::Event(e) => self.deliver(e),
                Wire::Anti { dest, key } => self.annihilate(dest, key),
            }
        }
        true
    }

    fn fossil_collect(&mut self, gvt: Option<EventKey>) {
        let mut newly: Vec<Processed<A>> = Vec::new();
        for slot in &mut self.slots {
            let cut = match gvt {
                Some(g) => slot.history.partition_point(|p| p.event.key < g),
                None => slot.history.len(),
            };
            newly.extend(slot.history.drain(..cut));
        }
        newly.sort_by_key(|p| p.event.key);
        for p in newly {
            if let Some(f) = p.fault {
                if self.fault.as_ref().is_none_or(|(k, _)| p.event.key < *k) {
                    self.fault = Some((p.event.key, f));
                }
                self.shared.failed.store(true, Ordering::SeqCst);
                continue;
            }
            self.stats.committed += 1;
            if self.record_log {
                self.log.push(LogEntry { key: p.event.key, dest: p.event.dest, kind: p.event.msg.kind() });
            }
            if !p.obs.is_empty() {
                self.committed.push((p.event.key, p.obs));
            }
        }
    }

    fn run(mut self, cfg: &ParallelConfig, end: SimTime, first: SimTime) -> WorkerResult<A> {
        let shared = self.shared;
        let mut gvt_time = first;
        loop {
            let limit = end.min(gvt_time.saturating_add(cfg.gvt_interval));
            for _ in 0..cfg.batch {
                self.drain();
                if !self.step(limit) {
                    break;
                }
            }
            shared.barrier.wait();

            let started = Instant::now();
            loop {
                self.drain();
                if shared.in_flight.load(Ordering::SeqCst) == 0 || shared.stalled.load(Ordering::SeqCst) {
                    break;
                }
                if started.elapsed() > cfg.stall_timeout {
                    shared.stalled.store(true, Ordering::SeqCst);
                    self.broken.get_or_insert_with(|| {
                        format!(
                            "worker {} gave up draining: {} messages in flight, {} events pending locally",
                            self.index,
                            shared.in_flight.load(Ordering::SeqCst),
                            self.pending.len()
                        )
                    });
                    break;
                }
                std::thread::yield_now();
            }
            if self.broken.is_some() {
                shared.stalled.store(true, Ordering::SeqCst);
            }
            shared.barrier.wait();
            if shared.stalled.load(Ordering::SeqCst) {
                break;
            }

            *shared.local_min[self.index].lock().expect("gvt slot") = self.pending.first_key_value().map(|(k, _)| *k);
            shared.barrier.wait();
            let gvt = shared.local_min.iter().filter_map(|m| *m.lock().expect("gvt slot")).min();
            self.fossil_collect(gvt);
            shared.barrier.wait();

            if shared.failed.load(Ordering::SeqCst) {
                break;
            }
            match gvt {
                Some(g) if g.time < end => gvt_time = g.time,
                _ => break,
            }
        }
        WorkerResult {
            pending: self.pending.len() + self.slots.iter().map(|s| s.history.len()).sum::<usize>(),
            slots: self.slots.into_iter().map(|s| (s.id, s.state)).collect(),
            committed: self.committed,
            log: self.log,
            stats: self.stats,
            fault: self.fault,
            stall: self.broken,
        }
    }
}

/// Optimistic multi-worker executor. Produces the same committed event
/// sequence per actor as [`run_sequential`](super::run_sequential).
pub fn run_parallel<A: Actor>(
    actors: Vec<A>,
    initial: Vec<Event<A::Msg>>,
    opts: &RunOptions,
    cfg: &ParallelConfig,
) -> Result<RunOutput<A>, SimError> {
    if cfg.workers == 0 {
        return Err(SimError::Config("at least one worker is required".into()));
    }
    if cfg.assignment.len() != actors.len() {
        return Err(SimError::Config(format!(
            "assignment covers {} actors, expected {}",
            cfg.assignment.len(),
            actors.len()
        )));
    }
    if let Some(w) = cfg.assignment.iter().find(|&&w| w >= cfg.workers) {
        return Err(SimError::Config(format!("actor assigned to worker {w} of {}", cfg.workers)));
    }
    if cfg.gvt_interval <= Duration::ZERO || cfg.batch == 0 {
        return Err(SimError::Config("gvt interval and batch size must be positive".into()));
    }
    check_actor_ids(actors.len(), &initial)?;

    let n = actors.len();
    let mut local = vec![None; n];
    let mut per_worker: Vec<Vec<Slot<A>>> = (0..cfg.workers).map(|_| Vec::new()).collect();
    for (i, state) in actors.into_iter().enumerate() {
        let w = cfg.assignment[i];
        local[i] = Some(per_worker[w].len());
        per_worker[w].push(Slot { id: ActorId(i as u32), state, seq: 0, history: Vec::new() });
    }
    // Each worker resolves slot indices only for actors it owns.
    let locals: Vec<Vec<Option<usize>>> = (0..cfg.workers)
        .map(|w| (0..n).map(|i| if cfg.assignment[i] == w { local[i] } else { None }).collect())
        .collect();

    let first = initial.iter().map(|e| e.key.time).min().unwrap_or(SimTime::ZERO);
    let mut seeds: Vec<BTreeMap<EventKey, Event<A::Msg>>> = (0..cfg.workers).map(|_| BTreeMap::new()).collect();
    for e in initial {
        seeds[cfg.assignment[e.dest.0 as usize]].insert(e.key, e);
    }

    let mut txs = Vec::new();
    let mut rxs = Vec::new();
    for _ in 0..cfg.workers {
        let (tx, rx) = channel();
        txs.push(Mutex::new(tx));
        rxs.push(rx);
    }
    let shared = Shared {
        senders: txs,
        in_flight: AtomicI64::new(0),
        barrier: Barrier::new(cfg.workers),
        local_min: (0..cfg.workers).map(|_| Mutex::new(None)).collect(),
        failed: AtomicBool::new(false),
        stalled: AtomicBool::new(false),
    };

    let results: Vec<WorkerResult<A>> = std::thread::scope(|scope| {
        let handles: Vec<_> = per_worker
            .into_iter()
            .zip(rxs)
            .zip(seeds)
            .zip(locals.iter())
            .enumerate()
            .map(|(index, (((slots, rx), pending), local))| {
                let worker = Worker {
                    index,
                    slots,
                    local,
                    owner: &cfg.assignment,
                    pending,
                    loopback: VecDeque::new(),
                    rx,
                    shared: &shared,
                    record_log: opts.record_log,
                    committed: Vec::new(),
                    log: Vec::new(),
                    stats: CommitStats::default(),
                    fault: None,
                    broken: None,
                };
                scope.spawn(move || worker.run(cfg, opts.end, first))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });

    let mut stats = CommitStats::default();
    let mut fault: Option<(EventKey, SimError)> = None;
    let mut stall = Vec::new();
    let mut states: Vec<Option<A>> = (0..n).map(|_| None).collect();
    let mut committed = Vec::new();
    let mut log = Vec::new();
    let mut pending = 0;
    for r in results {
        stats.committed += r.stats.committed;
        stats.rolled_back += r.stats.rolled_back;
        if let Some((k, e)) = r.fault {
            if fault.as_ref().is_none_or(|(fk, _)| k < *fk) {
                fault = Some((k, e));
            }
        }
        stall.extend(r.stall);
        for (id, a) in r.slots {
            states[id.0 as usize] = Some(a);
        }
        committed.extend(r.committed);
        log.extend(r.log);
        pending += r.pending;
    }
    if !stall.is_empty() {
        return Err(SimError::Stalled(stall.join("; ")));
    }
    if let Some((_, e)) = fault {
        return Err(e);
    }
    committed.sort_by_key(|(k, _)| *k);
    log.sort_by_key(|e| e.key);
    Ok(RunOutput {
        actors: states.into_iter().map(|s| s.expect("every actor returned")).collect(),
        stats,
        observations: committed.into_iter().flat_map(|(_, o)| o).collect(),
        log: opts.record_log.then_some(log),
        pending,
    })
}
