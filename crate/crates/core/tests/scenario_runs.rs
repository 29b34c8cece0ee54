use std::collections::BTreeMap;

use metrosim_core::audit::audit_run;
use metrosim_core::demand::{commute_legs, random_legs, TripLeg};
use metrosim_core::engine::{ActorId, EventKey, LogEntry};
use metrosim_core::metrics::accumulate;
use metrosim_core::model::{ModelParams, Observation};
use metrosim_core::network::{make_grid, GridProfile, NodeId};
use metrosim_core::scenario::{EngineMode, Scenario};
use metrosim_core::time::{Duration, SimTime};

const END: SimTime = SimTime::from_secs(172_800);

fn corner(r0: u32, c0: u32) -> Vec<NodeId> {
    vec![NodeId(r0 * 10 + c0), NodeId(r0 * 10 + c0 + 1), NodeId((r0 + 1) * 10 + c0), NodeId((r0 + 1) * 10 + c0 + 1)]
}

fn commute(penetration: f64) -> Scenario {
    let net = make_grid(10, 10, 200.0, GridProfile::ArterialRing).unwrap();
    let legs = commute_legs(&corner(0, 0), &corner(8, 8), 1000, Duration::from_secs(600), 1);
    Scenario::new(net, &legs, penetration, 1, 4, ModelParams::default()).unwrap()
}

fn trip_log(obs: &[Observation]) -> Vec<Observation> {
    obs.iter().filter(|o| matches!(o, Observation::TripComplete { .. })).cloned().collect()
}

fn per_actor(log: &[LogEntry]) -> BTreeMap<ActorId, Vec<EventKey>> {
    let mut m: BTreeMap<ActorId, Vec<EventKey>> = BTreeMap::new();
    for e in log {
        m.entry(e.dest).or_default().push(e.key);
    }
    m
}

#[test]
fn commute_fixture_is_congested_and_clean() {
    let s = commute(0.5);
    let out = s.run(&EngineMode::Sequential, END, true).unwrap();
    assert!(audit_run(&s, &out.observations, &out.actors).is_empty());
    let m = accumulate(&s, &out.observations, out.stats, END);
    assert_eq!(m.completed, 1000);
    assert!(m.lsus > 0 && m.reroutes > 0);
    // the average trip loses several minutes to congestion
    assert!(m.vhd_h / 1000.0 > 60.0 / 3600.0);
}

#[test]
fn log_replay_recounts_committed_events() {
    let s = commute(0.5);
    let out = s.run(&EngineMode::Sequential, END, true).unwrap();
    let log = out.log.unwrap();
    assert_eq!(log.len() as u64, out.stats.committed);
    assert!(log.windows(2).all(|w| w[0].key < w[1].key));
    assert!(log.iter().all(|e| e.key.time < END));
}

#[test]
fn workers_commit_the_sequential_history() {
    let s = commute(0.5);
    let seq = s.run(&EngineMode::Sequential, END, true).unwrap();
    for workers in [2, 4] {
        let mode = EngineMode::Parallel { workers, gvt_interval: Duration::from_secs(1) };
        let par = s.run(&mode, END, true).unwrap();
        assert_eq!(trip_log(&par.observations), trip_log(&seq.observations), "workers = {workers}");
        assert_eq!(par.observations, seq.observations);
        assert_eq!(per_actor(par.log.as_ref().unwrap()), per_actor(seq.log.as_ref().unwrap()));
        assert_eq!(par.stats.committed, seq.stats.committed);
        let eff = par.stats.efficiency();
        assert!(eff > 0.0 && eff <= 1.0);
    }
}

#[test]
fn repeated_runs_are_identical() {
    let a = commute(0.5).run(&EngineMode::Sequential, END, true).unwrap();
    let b = commute(0.5).run(&EngineMode::Sequential, END, true).unwrap();
    assert_eq!(a.observations, b.observations);
    assert_eq!(a.log, b.log);
}

#[test]
fn random_demand_on_both_profiles_passes_audits() {
    for profile in [GridProfile::Uniform, GridProfile::ArterialRing] {
        for block in [50.0, 200.0] {
            let net = make_grid(6, 6, block, profile).unwrap();
            let legs = random_legs(&net, 400, Duration::from_secs(600), 3);
            let s = Scenario::new(net, &legs, 1.0, 3, 2, ModelParams::default()).unwrap();
            let out = s.run(&EngineMode::Sequential, END, false).unwrap();
            let v = audit_run(&s, &out.observations, &out.actors);
            assert!(v.is_empty(), "{profile} {block} m: {}", v[0]);
        }
    }
}

#[test]
fn unreachable_legs_are_counted_as_dropped() {
    use metrosim_core::network::{Link, LinkId, Network, Node};
    // 0 -> 1 -> 2 with no way back
    let nodes = (0..3).map(|i| Node { id: NodeId(i), x: i as f64 * 100.0, y: 0.0, pop_weight: 1.0 }).collect();
    let link = |i: u32| Link {
        id: LinkId(i),
        from: NodeId(i),
        to: NodeId(i + 1),
        length_m: 100.0,
        lanes: 1,
        freespeed_mps: 10.0,
        capacity_vph: 600.0,
        fclass: 5,
        signalized: false,
        signal: None,
    };
    let net = Network::new(nodes, vec![link(0), link(1)]).unwrap();
    let leg = |id: u32, o: u32, d: u32| TripLeg {
        id: metrosim_core::model::TripId(id),
        origin: NodeId(o),
        dest: NodeId(d),
        depart: SimTime::from_secs(id as i64),
        reroutable: metrosim_core::demand::RerouteFlag::Auto,
    };
    let legs = vec![leg(0, 0, 2), leg(1, 2, 0), leg(2, 1, 2)];
    let s = Scenario::new(net, &legs, 0.0, 1, 1, ModelParams::default()).unwrap();
    let out = s.run(&EngineMode::Sequential, END, false).unwrap();
    assert!(audit_run(&s, &out.observations, &out.actors).is_empty());
    let m = accumulate(&s, &out.observations, out.stats, END);
    assert_eq!((m.loaded, m.dropped, m.completed, m.unfinished), (3, 1, 2, 0));
    assert_eq!(m.loaded, m.completed + m.unfinished + m.dropped);
}
