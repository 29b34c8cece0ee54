use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{check_actor_ids, Actor, CommitStats, Context, Event, LogEntry, Message, RunOptions, RunOutput, SimError};

/// Reference executor: one global queue, events handled in strict key order.
pub fn run_sequential<A: Actor>(
    mut actors: Vec<A>,
    initial: Vec<Event<A::Msg>>,
    opts: &RunOptions,
) -> Result<RunOutput<A>, SimError> {
    check_actor_ids(actors.len(), &initial)?;
    let mut seqs = vec![0u64; actors.len()];
    let mut queue: BinaryHeap<Reverse<Event<A::Msg>>> = initial.into_iter().map(Reverse).collect();
    let mut observations = Vec::new();
    let mut log = opts.record_log.then(Vec::new);
    let mut stats = CommitStats::default();

    while let Some(Reverse(ev)) = queue.peek() {
        if ev.key.time >= opts.end {
            break;
        }
        let Reverse(ev) = queue.pop().expect("peeked");
        let idx = ev.dest.0 as usize;
        let mut ctx = Context::new(ev.key, ev.dest, seqs[idx]);
        actors[idx].handle(&ev.msg, &mut ctx)?;
        let (next_seq, sends, obs) = ctx.finish();
        check_actor_ids(actors.len(), &sends)?;
        seqs[idx] = next_seq;
        queue.extend(sends.into_iter().map(Reverse));
        observations.extend(obs);
        if let Some(log) = log.as_mut() {
            log.push(LogEntry { key: ev.key, dest: ev.dest, kind: ev.msg.kind() });
        }
        stats.committed += 1;
    }

    Ok(RunOutput { actors, stats, observations, log, pending: queue.len() })
}
