use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use metrosim_cli::{
    compare_files, corner_commute, diff_files, execute, expand_zone_file, make_grid_files, sweep, write_random_trips,
    Axis, CliError, GridSpec, RunConfig, ZoneInputs,
};
use metrosim_core::demand::save_trips;
use metrosim_core::network::GridProfile;

/// Mesoscopic traffic simulation with dynamic rerouting.
#[derive(Parser)]
#[command(name = "metrosim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its outputs.
    Run(RunArgs),
    /// Run once per value of one parameter and tabulate the results.
    Sweep(SweepArgs),
    /// Write a synthetic grid network, optionally with random trips.
    MakeGrid(MakeGridArgs),
    /// Expand zone-to-zone demand into node-level trips.
    ExpandZones(ExpandArgs),
    /// R-squared and relative error of simulated link counts against a reference.
    Compare {
        /// Simulated `link_id,bin_start_s,count` CSV (a run's link_bins.csv).
        #[arg(long)]
        sim: PathBuf,
        /// Reference `link_id,bin_start_s,count` CSV.
        #[arg(long)]
        reference: PathBuf,
    },
    /// Per-link traversal count change from run A to run B.
    Diff {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Output `link_id,count_a,count_b,delta` CSV.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Config file of `key = value` lines; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set t_check=600`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Generated grid network, e.g. `10x10`.
    #[arg(long)]
    grid: Option<String>,
    /// Nodes CSV (`id,x,y,pop_weight`).
    #[arg(long)]
    nodes: Option<String>,
    /// Links CSV (`id,from,to,length_m,lanes,freespeed_mps,capacity_vph,fclass,signalized`).
    #[arg(long)]
    links: Option<String>,
    /// Signal plan CSV.
    #[arg(long)]
    signals: Option<String>,
    /// Trips CSV, or a count of random trips to generate.
    #[arg(long)]
    trips: Option<String>,
    /// Fraction of `auto` trip legs allowed to reroute.
    #[arg(long)]
    penetration: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// `sequential` or `parallel`.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    partitions: Option<String>,
    /// Simulation end time in seconds.
    #[arg(long)]
    end: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// Also write the committed event log.
    #[arg(long)]
    event_log: bool,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let flags = [
            ("grid", &self.grid),
            ("nodes", &self.nodes),
            ("links", &self.links),
            ("signals", &self.signals),
            ("trips", &self.trips),
            ("penetration", &self.penetration),
            ("seed", &self.seed),
            ("mode", &self.mode),
            ("workers", &self.workers),
            ("partitions", &self.partitions),
            ("end_s", &self.end),
            ("out", &self.out),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, v)?;
            }
        }
        for o in &self.overrides {
            let (k, v) =
                o.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {o:?}")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if self.event_log {
            cfg.event_log = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// penetration, t_lsu, t_check or t_delay.
    #[arg(long)]
    axis: Axis,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    /// Keep r_lsu / r_delay fixed instead of t_lsu/60 and t_delay/600.
    #[arg(long)]
    unlinked: bool,
    /// Runs to execute concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct MakeGridArgs {
    /// Grid size, e.g. `10x10`.
    #[arg(long)]
    grid: String,
    #[arg(long, default_value_t = 200.0)]
    block_m: f64,
    /// `uniform` or `arterial-ring`.
    #[arg(long, default_value = "arterial-ring")]
    profile: GridProfile,
    /// Directory for nodes.csv and links.csv (and trips.csv).
    #[arg(long)]
    out_dir: PathBuf,
    /// Also write this many random trips.
    #[arg(long)]
    trips: Option<usize>,
    /// Draw the trips between opposite 2x2 corner blocks instead.
    #[arg(long)]
    commute: bool,
    /// Departures are spread over [0, horizon) seconds.
    #[arg(long, default_value_t = 3600.0)]
    horizon: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct ExpandArgs {
    #[arg(long)]
    nodes: PathBuf,
    #[arg(long)]
    links: PathBuf,
    /// `o_zone,d_zone,depart_s,count` CSV.
    #[arg(long)]
    demand: PathBuf,
    /// `zone,node` CSV.
    #[arg(long)]
    membership: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output trips CSV.
    #[arg(long)]
    out: PathBuf,
}

fn print_pairs(pairs: &[(String, String)]) {
    for (k, v) in pairs {
        println!("{k} = {v}");
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run(args) => {
            let cfg = args.resolve()?;
            let report = execute(&cfg)?;
            print_pairs(&report.summary);
            println!("runtime_s = {}", report.runtime_s);
            report.outcome()
        }
        Command::Sweep(args) => {
            let cfg = args.run.resolve()?;
            let rows = sweep(&cfg, args.axis, &args.values, !args.unlinked, args.jobs)?;
            println!("axis_value,vhd_h,vmt,reroutes,lsus,checks,runtime_s");
            for r in rows {
                println!(
                    "{},{},{},{},{},{},{}",
                    r.axis_value, r.vhd_h, r.vmt, r.reroutes, r.lsus, r.checks, r.runtime_s
                );
            }
            Ok(())
        }
        Command::MakeGrid(a) => {
            let spec: GridSpec = a.grid.parse()?;
            let net = make_grid_files(&spec, a.block_m, a.profile, &a.out_dir)?;
            if let Some(n) = a.trips {
                let path = a.out_dir.join("trips.csv");
                if a.commute {
                    save_trips(&corner_commute(&spec, n, a.horizon, a.seed), &path)
                        .map_err(|e| CliError::Usage(e.to_string()))?;
                } else {
                    write_random_trips(&net, n, a.horizon, a.seed, &path)?;
                }
            }
            println!("nodes = {}\nlinks = {}", net.node_count(), net.link_count());
            Ok(())
        }
        Command::ExpandZones(a) => {
            let inputs = ZoneInputs { nodes: &a.nodes, links: &a.links, demand: &a.demand, membership: &a.membership };
            let n = expand_zone_file(&inputs, a.seed, &a.out)?;
            println!("trips = {n}");
            Ok(())
        }
        Command::Compare { sim, reference } => {
            let c = compare_files(&sim, &reference)?;
            let missing = |v: Option<f64>| v.map_or("missing".to_string(), |x| x.to_string());
            println!("bins = {}\nr2 = {}\nrelative_error = {}", c.n, missing(c.r2), missing(c.relative_error));
            Ok(())
        }
        Command::Diff { a, b, out } => {
            let n = diff_files(&a, &b, &out)?;
            println!("links = {n}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(metrosim_cli::EXIT_USAGE as u8) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
