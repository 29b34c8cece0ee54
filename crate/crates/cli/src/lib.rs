//! Commands behind the `metrosim` binary.

pub mod config;

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use metrosim_core::audit::{audit_run, Violation};
use metrosim_core::demand::{
    commute_legs, expand_zones, load_membership, load_trips, load_zone_demand, random_legs, save_trips, TripLeg,
};
use metrosim_core::engine::{write_event_log, RunOutput, SimError};
use metrosim_core::metrics::{
    accumulate, compare_bins, diff_traversals, link_bins, load_bin_counts, write_diff, write_link_bins,
    write_reroute_log, write_summary, write_trip_log, RunMetrics, SeriesComparison,
};
use metrosim_core::model::SimActor;
use metrosim_core::network::{
    load_network, load_signal_plans, make_grid, save_network, save_partition, GridProfile, LinkId, Network, NodeId,
};
use metrosim_core::scenario::{find_gridlock, Scenario, ScenarioError};
use metrosim_core::time::Duration;

pub use config::{ConfigError, GridSpec, RunConfig, TripSource};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_AUDIT: i32 = 2;
pub const EXIT_GRIDLOCK: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, config or input files.
    Usage(String),
    /// A model invariant failed during or after the run.
    Audit(String),
    Gridlock(Vec<LinkId>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Audit(_) => EXIT_AUDIT,
            CliError::Gridlock(_) => EXIT_GRIDLOCK,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Audit(m) => f.write_str(m),
            CliError::Gridlock(cycle) => {
                let ids: Vec<String> = cycle.iter().map(|l| l.to_string()).collect();
                write!(f, "gridlock: full links waiting on each other in a cycle: {}", ids.join(" -> "))
            }
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.0)
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Sim(s) => s.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(m) => CliError::Usage(m),
            other => CliError::Audit(other.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Usage(format!("{}: {e}", path.display()))
}

fn usage(e: impl fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

/// Network and trips described by a config.
pub fn build_scenario(cfg: &RunConfig) -> Result<Scenario, CliError> {
    cfg.validate()?;
    let net = match &cfg.grid {
        Some(g) => make_grid(g.rows, g.cols, cfg.grid_block_m, cfg.grid_profile).map_err(usage)?,
        None => {
            let (nodes, links) = (cfg.nodes.as_ref().expect("validated"), cfg.links.as_ref().expect("validated"));
            load_network(nodes, links).map_err(usage)?
        }
    };
    let net = match &cfg.signals {
        Some(p) => net.with_signals(load_signal_plans(p).map_err(usage)?).map_err(usage)?,
        None => net,
    };
    let legs = match cfg.trips.as_ref().expect("validated") {
        TripSource::File(p) => load_trips(p, &net).map_err(usage)?,
        TripSource::Generated(n) => random_legs(&net, *n, Duration::from_secs_f64(cfg.grid_horizon_s), cfg.seed),
        TripSource::Commute(n) => {
            corner_commute(cfg.grid.as_ref().expect("validated"), *n, cfg.grid_horizon_s, cfg.seed)
        }
    };
    Ok(Scenario::new(net, &legs, cfg.penetration, cfg.seed, cfg.partitions, cfg.params.clone())?)
}

/// Legs from the 2x2 block of nodes around node 0 to the block in the
/// opposite corner.
pub fn corner_commute(grid: &GridSpec, count: usize, horizon_s: f64, seed: u64) -> Vec<TripLeg> {
    let block = |r0: usize, c0: usize| -> Vec<NodeId> {
        [(0, 0), (0, 1), (1, 0), (1, 1)]
            .iter()
            .map(|(dr, dc)| NodeId(((r0 + dr) * grid.cols + c0 + dc) as u32))
            .collect()
    };
    let origins = block(0, 0);
    let dests = block(grid.rows - 2, grid.cols - 2);
    commute_legs(&origins, &dests, count, Duration::from_secs_f64(horizon_s), seed)
}

pub struct RunReport {
    pub metrics: RunMetrics,
    pub violations: Vec<Violation>,
    pub gridlock: Option<Vec<LinkId>>,
    pub runtime_s: f64,
    pub summary: Vec<(String, String)>,
}

impl RunReport {
    /// The run's outcome as an error, if it had one.
    pub fn outcome(&self) -> Result<(), CliError> {
        if let Some(v) = self.violations.first() {
            return Err(CliError::Audit(format!("{} invariant violations; first: {v}", self.violations.len())));
        }
        if let Some(cycle) = &self.gridlock {
            return Err(CliError::Gridlock(cycle.clone()));
        }
        Ok(())
    }
}

/// Runs a config, audits the result and writes outputs when `out` is set.
pub fn execute(cfg: &RunConfig) -> Result<RunReport, CliError> {
    let scenario = build_scenario(cfg)?;
    let started = Instant::now();
    let output = scenario.run(&cfg.mode, cfg.end(), cfg.event_log)?;
    let runtime_s = started.elapsed().as_secs_f64();
    let metrics = accumulate(&scenario, &output.observations, output.stats, cfg.end());
    let violations = audit_run(&scenario, &output.observations, &output.actors);
    let gridlock = if metrics.unfinished > 0 { find_gridlock(&output.actors) } else { None };

    let mut summary: Vec<(String, String)> = cfg.echo().into_iter().map(|(k, v)| (format!("config.{k}"), v)).collect();
    summary.extend(metrics.summary());
    summary.push(("audit_violations".into(), violations.len().to_string()));
    summary.push(("gridlock".into(), gridlock.is_some().to_string()));
    for v in violations.iter().take(20) {
        log::error!("{v}");
    }
    if let Some(dir) = &cfg.out {
        write_outputs(dir, &scenario, &output, &metrics, &summary)?;
    }
    Ok(RunReport { metrics, violations, gridlock, runtime_s, summary })
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn write_outputs(
    dir: &Path,
    scenario: &Scenario,
    output: &RunOutput<SimActor>,
    metrics: &RunMetrics,
    summary: &[(String, String)],
) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let write = |name: &str, f: &dyn Fn(&mut BufWriter<File>) -> std::io::Result<()>| -> Result<(), CliError> {
        let path = dir.join(name);
        let mut w = create(&path)?;
        f(&mut w).and_then(|_| w.flush()).map_err(io_err(&path))
    };
    write("summary.txt", &|w| write_summary(w, summary))?;
    write("trips.csv", &|w| write_trip_log(w, &metrics.trips))?;
    write("link_bins.csv", &|w| write_link_bins(w, &link_bins(&scenario.net, &output.observations)))?;
    write("reroute_log.csv", &|w| write_reroute_log(w, &output.observations))?;
    if let Some(log) = &output.log {
        write("event_log.csv", &|w| write_event_log(w, log))?;
    }
    save_partition(&scenario.partition, &dir.join("partition.csv")).map_err(usage)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Penetration,
    TLsu,
    TCheck,
    TDelay,
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "penetration" => Ok(Axis::Penetration),
            "t_lsu" => Ok(Axis::TLsu),
            "t_check" => Ok(Axis::TCheck),
            "t_delay" => Ok(Axis::TDelay),
            _ => Err(format!("unknown sweep axis {s:?} (expected penetration, t_lsu, t_check or t_delay)")),
        }
    }
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Penetration => "penetration",
            Axis::TLsu => "t_lsu",
            Axis::TCheck => "t_check",
            Axis::TDelay => "t_delay",
        }
    }

    /// Applies `v`, with the ratio parameter following the absolute threshold
    /// when `linked`: r_lsu = t_lsu / 60 and r_delay = t_delay / 600.
    pub fn apply(self, cfg: &mut RunConfig, v: f64, linked: bool) {
        let r = &mut cfg.params.reroute;
        match self {
            Axis::Penetration => cfg.penetration = v,
            Axis::TLsu => {
                r.t_lsu = v;
                if linked {
                    r.r_lsu = v / 60.0;
                }
            }
            Axis::TCheck => r.t_check = v,
            Axis::TDelay => {
                r.t_delay = v;
                if linked {
                    r.r_delay = v / 600.0;
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub axis_value: f64,
    pub vhd_h: f64,
    pub vmt: f64,
    pub reroutes: u64,
    pub lsus: u64,
    pub checks: u64,
    pub runtime_s: f64,
}

impl SweepRow {
    fn from_report(v: f64, r: &RunReport) -> Self {
        SweepRow {
            axis_value: v,
            vhd_h: r.metrics.vhd_h,
            vmt: r.metrics.vmt_mi,
            reroutes: r.metrics.reroutes,
            lsus: r.metrics.lsus,
            checks: r.metrics.checks,
            runtime_s: r.runtime_s,
        }
    }
}

fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<(), CliError> {
    let mut w = create(path)?;
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "axis_value,vhd_h,vmt,reroutes,lsus,checks,runtime_s")?;
        for r in rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.axis_value, r.vhd_h, r.vmt, r.reroutes, r.lsus, r.checks, r.runtime_s
            )?;
        }
        w.flush()
    };
    body().map_err(io_err(path))
}

/// One run per value. With `out` set in `base`, each run writes to
/// `<out>/<axis>_<value>/` and the combined table goes to `<out>/sweep.csv`,
/// rewritten after every run so a failure keeps the rows before it.
pub fn sweep(
    base: &RunConfig,
    axis: Axis,
    values: &[f64],
    linked: bool,
    jobs: usize,
) -> Result<Vec<SweepRow>, CliError> {
    if values.is_empty() {
        return Err(CliError::Usage("sweep needs at least one value".into()));
    }
    let configs: Vec<RunConfig> = values
        .iter()
        .map(|&v| {
            let mut c = base.clone();
            axis.apply(&mut c, v, linked);
            c.out = base.out.as_ref().map(|o| o.join(format!("{}_{v}", axis.name())));
            c
        })
        .collect();
    let table = base.out.as_ref().map(|o| o.join("sweep.csv"));
    if let Some(o) = &base.out {
        fs::create_dir_all(o).map_err(io_err(o))?;
    }
    let mut rows = Vec::new();
    for chunk in configs.chunks(jobs.max(1)).zip(values.chunks(jobs.max(1))) {
        let (cfgs, vals) = chunk;
        let reports: Vec<Result<RunReport, CliError>> = std::thread::scope(|s| {
            let handles: Vec<_> = cfgs.iter().map(|c| s.spawn(move || execute(c))).collect();
            handles.into_iter().map(|h| h.join().expect("sweep run panicked")).collect()
        });
        for (v, r) in vals.iter().zip(reports) {
            let r = r?;
            let outcome = r.outcome();
            rows.push(SweepRow::from_report(*v, &r));
            if let Some(t) = &table {
                write_sweep(t, &rows)?;
            }
            outcome?;
        }
    }
    Ok(rows)
}

/// Writes `nodes.csv` and `links.csv` of a grid into `dir`.
pub fn make_grid_files(spec: &GridSpec, block_m: f64, profile: GridProfile, dir: &Path) -> Result<Network, CliError> {
    let net = make_grid(spec.rows, spec.cols, block_m, profile).map_err(usage)?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    save_network(&net, &dir.join("nodes.csv"), &dir.join("links.csv")).map_err(usage)?;
    Ok(net)
}

pub fn write_random_trips(net: &Network, count: usize, horizon_s: f64, seed: u64, path: &Path) -> Result<(), CliError> {
    let legs = random_legs(net, count, Duration::from_secs_f64(horizon_s), seed);
    save_trips(&legs, path).map_err(usage)
}

pub struct ZoneInputs<'a> {
    pub nodes: &'a Path,
    pub links: &'a Path,
    pub demand: &'a Path,
    pub membership: &'a Path,
}

/// Expands zone demand to node-level trips with flags left to the penetration rate.
pub fn expand_zone_file(inputs: &ZoneInputs<'_>, seed: u64, out: &Path) -> Result<usize, CliError> {
    let net = load_network(inputs.nodes, inputs.links).map_err(usage)?;
    let demand = load_zone_demand(inputs.demand).map_err(usage)?;
    let membership = load_membership(inputs.membership, &net).map_err(usage)?;
    let legs = expand_zones(&demand, &membership, &net, seed).map_err(usage)?;
    save_trips(&legs, out).map_err(usage)?;
    Ok(legs.len())
}

pub fn compare_files(sim: &Path, reference: &Path) -> Result<SeriesComparison, CliError> {
    let s = load_bin_counts(sim).map_err(usage)?;
    let r = load_bin_counts(reference).map_err(usage)?;
    compare_bins(&s, &r).map_err(usage)
}

pub fn diff_files(a: &Path, b: &Path, out: &Path) -> Result<usize, CliError> {
    let rows = diff_traversals(&load_bin_counts(a).map_err(usage)?, &load_bin_counts(b).map_err(usage)?);
    let mut w = create(out)?;
    write_diff(&mut w, &rows).and_then(|_| w.flush()).map_err(io_err(out))?;
    Ok(rows.len())
}
