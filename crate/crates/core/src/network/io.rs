use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GreenWindow, Link, LinkId, Network, NetworkError, Node, NodeId, Partition, SignalPlan};
use crate::time::Duration;

#[derive(Debug, Serialize, Deserialize)]
struct NodeRow {
    id: u32,
    x: f64,
    y: f64,
    pop_weight: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct LinkRow {
    id: u32,
    from: u32,
    to: u32,
    length_m: f64,
    lanes: u32,
    freespeed_mps: f64,
    capacity_vph: f64,
    fclass: u8,
    signalized: u8,
}

#[derive(Debug, Serialize, Deserialize)]
struct SignalRow {
    link_id: u32,
    cycle_s: f64,
    maneuver_to_link: u32,
    green_offset_s: f64,
    green_dur_s: f64,
    slots: u32,
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> NetworkError + '_ {
    move |source| NetworkError::Csv { path: path.to_path_buf(), source }
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, NetworkError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_err(path))?;
    rdr.deserialize().collect::<Result<Vec<T>, _>>().map_err(csv_err(path))
}

/// Loads `nodes_path` (`id,x,y,pop_weight`) and `links_path`
/// (`id,from,to,length_m,lanes,freespeed_mps,capacity_vph,fclass,signalized`).
/// Rows may appear in any order but ids must be dense.
pub fn load_network(nodes_path: &Path, links_path: &Path) -> Result<Network, NetworkError> {
    let mut node_rows: Vec<NodeRow> = read_rows(nodes_path)?;
    node_rows.sort_by_key(|r| r.id);
    let nodes =
        node_rows.into_iter().map(|r| Node { id: NodeId(r.id), x: r.x, y: r.y, pop_weight: r.pop_weight }).collect();

    let mut link_rows: Vec<LinkRow> = read_rows(links_path)?;
    link_rows.sort_by_key(|r| r.id);
    let links = link_rows
        .into_iter()
        .map(|r| Link {
            id: LinkId(r.id),
            from: NodeId(r.from),
            to: NodeId(r.to),
            length_m: r.length_m,
            lanes: r.lanes,
            freespeed_mps: r.freespeed_mps,
            capacity_vph: r.capacity_vph,
            fclass: r.fclass,
            signalized: r.signalized != 0,
            signal: None,
        })
        .collect();
    Network::new(nodes, links)
}

/// Reads `link_id,cycle_s,maneuver_to_link,green_offset_s,green_dur_s,slots`.
pub fn load_signal_plans(path: &Path) -> Result<BTreeMap<LinkId, SignalPlan>, NetworkError> {
    let rows: Vec<SignalRow> = read_rows(path)?;
    let mut plans: BTreeMap<LinkId, SignalPlan> = BTreeMap::new();
    for (i, r) in rows.into_iter().enumerate() {
        let row = i + 2;
        let cycle = Duration::from_secs_f64(r.cycle_s);
        let plan = plans.entry(LinkId(r.link_id)).or_insert_with(|| SignalPlan { cycle, maneuvers: BTreeMap::new() });
        if plan.cycle != cycle {
            return Err(NetworkError::InvalidSignal {
                row,
                reason: "cycle length differs between rows of one link".into(),
            });
        }
        let window = GreenWindow {
            offset: Duration::from_secs_f64(r.green_offset_s),
            duration: Duration::from_secs_f64(r.green_dur_s),
            slots: r.slots,
        };
        let windows = plan.maneuvers.entry(LinkId(r.maneuver_to_link)).or_default();
        windows.push(window);
        windows.sort_by_key(|w| w.offset);
    }
    for plan in plans.values() {
        plan.validate().map_err(|reason| NetworkError::InvalidSignal { row: 0, reason })?;
    }
    Ok(plans)
}

pub fn save_network(net: &Network, nodes_path: &Path, links_path: &Path) -> Result<(), NetworkError> {
    let mut w = csv::Writer::from_path(nodes_path).map_err(csv_err(nodes_path))?;
    for n in net.nodes() {
        w.serialize(NodeRow { id: n.id.0, x: n.x, y: n.y, pop_weight: n.pop_weight }).map_err(csv_err(nodes_path))?;
    }
    w.flush().map_err(|source| NetworkError::Io { path: nodes_path.to_path_buf(), source })?;

    let mut w = csv::Writer::from_path(links_path).map_err(csv_err(links_path))?;
    for l in net.links() {
        w.serialize(LinkRow {
            id: l.id.0,
            from: l.from.0,
            to: l.to.0,
            length_m: l.length_m,
            lanes: l.lanes,
            freespeed_mps: l.freespeed_mps,
            capacity_vph: l.capacity_vph,
            fclass: l.fclass,
            signalized: l.signalized as u8,
        })
        .map_err(csv_err(links_path))?;
    }
    w.flush().map_err(|source| NetworkError::Io { path: links_path.to_path_buf(), source })
}

/// Writes `link_id,part`.
pub fn save_partition(partition: &Partition, path: &Path) -> Result<(), NetworkError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["link_id", "part"]).map_err(csv_err(path))?;
    for (i, p) in partition.parts().iter().enumerate() {
        w.write_record([i.to_string(), p.to_string()]).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| NetworkError::Io { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{make_grid, GridProfile};
    use std::fs;

    #[test]
    fn smallest_file_pair_loads() {
        let dir = tempfile::tempdir().unwrap();
        let (np, lp) = (dir.path().join("n.csv"), dir.path().join("l.csv"));
        fs::write(&np, "id,x,y,pop_weight\n1,100,0,1\n0,0,0,2\n").unwrap();
        fs::write(
            &lp,
            "id,from,to,length_m,lanes,freespeed_mps,capacity_vph,fclass,signalized\n0,0,1,250,1,12.5,900,5,0\n",
        )
        .unwrap();
        let net = load_network(&np, &lp).unwrap();
        assert_eq!(net.node_count(), 2);
        assert_eq!(net.link(LinkId(0)).freespeed_time(), 20.0);
    }

    #[test]
    fn dangling_node_names_the_link() {
        let dir = tempfile::tempdir().unwrap();
        let (np, lp) = (dir.path().join("n.csv"), dir.path().join("l.csv"));
        fs::write(&np, "id,x,y,pop_weight\n0,0,0,1\n1,1,0,1\n").unwrap();
        fs::write(&lp, "id,from,to,length_m,lanes,freespeed_mps,capacity_vph,fclass,signalized\n0,0,1,10,1,10,900,5,0\n1,1,7,10,1,10,900,5,0\n").unwrap();
        let err = load_network(&np, &lp).unwrap_err();
        assert!(matches!(err, NetworkError::DanglingNode { link: LinkId(1), node: NodeId(7) }));
        assert!(err.to_string().contains("link 1"));
    }

    #[test]
    fn grid_round_trips_exactly() {
        let net = make_grid(10, 10, 187.3, GridProfile::ArterialRing).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (np, lp) = (dir.path().join("n.csv"), dir.path().join("l.csv"));
        save_network(&net, &np, &lp).unwrap();
        let back = load_network(&np, &lp).unwrap();
        assert_eq!(back.node_count(), net.node_count());
        for (a, b) in net.links().iter().zip(back.links()) {
            assert_eq!(a.length_m.to_bits(), b.length_m.to_bits());
            assert_eq!(a.freespeed_mps.to_bits(), b.freespeed_mps.to_bits());
            assert_eq!(a.capacity_vph.to_bits(), b.capacity_vph.to_bits());
            assert_eq!(
                (a.from, a.to, a.lanes, a.fclass, a.signalized),
                (b.from, b.to, b.lanes, b.fclass, b.signalized)
            );
        }
        for (a, b) in net.nodes().iter().zip(back.nodes()) {
            assert_eq!(
                (a.x.to_bits(), a.y.to_bits(), a.pop_weight.to_bits()),
                (b.x.to_bits(), b.y.to_bits(), b.pop_weight.to_bits())
            );
        }
        assert_eq!(back, net);
    }

    #[test]
    fn signal_plans_parse() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        fs::write(
            &p,
            "link_id,cycle_s,maneuver_to_link,green_offset_s,green_dur_s,slots\n0,60,3,30,10,4\n0,60,3,0,10,2\n",
        )
        .unwrap();
        let plans = load_signal_plans(&p).unwrap();
        let ws = &plans[&LinkId(0)].maneuvers[&LinkId(3)];
        assert_eq!(ws[0].offset, Duration::ZERO);
        assert_eq!(ws[1].slots, 4);
    }
}
