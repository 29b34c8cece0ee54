//! Flat `key = value` run configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use metrosim_core::link::LsuMode;
use metrosim_core::model::ModelParams;
use metrosim_core::network::GridProfile;
use metrosim_core::scenario::EngineMode;
use metrosim_core::time::{Duration, SimTime};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Where the trips come from.
#[derive(Clone, Debug, PartialEq)]
pub enum TripSource {
    File(PathBuf),
    /// Random legs between eligible nodes, departing within `grid_horizon_s`.
    Generated(usize),
    /// `commute:N` legs from the 2x2 corner block at node 0 to the opposite
    /// corner block of a generated grid.
    Commute(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
}

impl FromStr for GridSpec {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        let bad = || ConfigError(format!("grid must look like 10x10, got {s:?}"));
        let (r, c) = s.split_once(['x', 'X']).ok_or_else(bad)?;
        Ok(GridSpec { rows: r.trim().parse().map_err(|_| bad())?, cols: c.trim().parse().map_err(|_| bad())? })
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub nodes: Option<PathBuf>,
    pub links: Option<PathBuf>,
    pub signals: Option<PathBuf>,
    pub grid: Option<GridSpec>,
    pub grid_block_m: f64,
    pub grid_profile: GridProfile,
    pub grid_horizon_s: f64,
    pub trips: Option<TripSource>,
    pub penetration: f64,
    pub seed: u64,
    pub partitions: usize,
    pub mode: EngineMode,
    pub end_s: f64,
    pub out: Option<PathBuf>,
    pub event_log: bool,
    pub params: ModelParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            nodes: None,
            links: None,
            signals: None,
            grid: None,
            grid_block_m: 200.0,
            grid_profile: GridProfile::ArterialRing,
            grid_horizon_s: 3600.0,
            trips: None,
            penetration: 0.0,
            seed: 1,
            partitions: 4,
            mode: EngineMode::Sequential,
            end_s: 172_800.0,
            out: None,
            event_log: false,
            params: ModelParams::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" => Ok(false),
        _ => Err(ConfigError(format!("{key}: expected true or false, got {value:?}"))),
    }
}

fn opt_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or(String::new(), |p| p.display().to_string())
}

impl RunConfig {
    /// Reads a config file. Blank lines and lines starting with `#` are skipped.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let mut cfg = RunConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("{}:{}: expected key = value", path.display(), i + 1)))?;
            cfg.set(k.trim(), v.trim()).map_err(|e| ConfigError(format!("{}:{}: {e}", path.display(), i + 1)))?;
        }
        Ok(cfg)
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "nodes" => self.nodes = (!value.is_empty()).then(|| value.into()),
            "links" => self.links = (!value.is_empty()).then(|| value.into()),
            "signals" => self.signals = (!value.is_empty()).then(|| value.into()),
            "grid" => self.grid = if value.is_empty() { None } else { Some(value.parse()?) },
            "grid_block_m" => self.grid_block_m = parse(key, value)?,
            "grid_profile" => {
                self.grid_profile =
                    value.parse().map_err(|_| ConfigError(format!("{key}: unknown profile {value:?}")))?
            }
            "grid_horizon_s" => self.grid_horizon_s = parse(key, value)?,
            "trips" => {
                self.trips = if value.is_empty() {
                    None
                } else if let Ok(n) = value.parse::<usize>() {
                    Some(TripSource::Generated(n))
                } else if let Some(n) = value.strip_prefix("commute:") {
                    Some(TripSource::Commute(parse(key, n)?))
                } else {
                    Some(TripSource::File(value.into()))
                }
            }
            "penetration" => self.penetration = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "partitions" => self.partitions = parse(key, value)?,
            "mode" => {
                self.mode = match value {
                    "sequential" => EngineMode::Sequential,
                    "parallel" => {
                        EngineMode::Parallel { workers: self.workers().max(2), gvt_interval: self.gvt_interval() }
                    }
                    _ => return Err(ConfigError(format!("{key}: expected sequential or parallel, got {value:?}"))),
                }
            }
            "workers" => {
                let workers: usize = parse(key, value)?;
                if let EngineMode::Parallel { workers: w, .. } = &mut self.mode {
                    *w = workers;
                } else {
                    self.mode = EngineMode::Parallel { workers, gvt_interval: self.gvt_interval() };
                    if workers == 1 {
                        self.mode = EngineMode::Sequential;
                    }
                }
            }
            "gvt_interval_s" => {
                let g = Duration::from_secs_f64(parse(key, value)?);
                if let EngineMode::Parallel { gvt_interval, .. } = &mut self.mode {
                    *gvt_interval = g;
                }
            }
            "end_s" => self.end_s = parse(key, value)?,
            "out" => self.out = (!value.is_empty()).then(|| value.into()),
            "event_log" => self.event_log = parse_bool(key, value)?,
            "t_lsu" => self.params.reroute.t_lsu = parse(key, value)?,
            "r_lsu" => self.params.reroute.r_lsu = parse(key, value)?,
            "t_check" => self.params.reroute.t_check = parse(key, value)?,
            "t_delay" => self.params.reroute.t_delay = parse(key, value)?,
            "r_delay" => self.params.reroute.r_delay = parse(key, value)?,
            "heartbeat_s" => self.params.reroute.heartbeat_period = parse(key, value)?,
            "purge_periods" => self.params.reroute.purge_periods = parse(key, value)?,
            "vdf_alpha" => self.params.link.vdf.alpha = parse(key, value)?,
            "vdf_beta" => self.params.link.vdf.beta = parse(key, value)?,
            "vdf_window_s" => self.params.link.vdf.window = Duration::from_secs_f64(parse(key, value)?),
            "saturation_vph_per_lane" => self.params.link.saturation_vph_per_lane = parse(key, value)?,
            "lsu_mode" => {
                self.params.link.lsu_mode = match value {
                    "full" => LsuMode::Full,
                    "vdf" => LsuMode::DelayFunction,
                    _ => return Err(ConfigError(format!("{key}: expected full or vdf, got {value:?}"))),
                }
            }
            _ => return Err(ConfigError(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    fn workers(&self) -> usize {
        match self.mode {
            EngineMode::Parallel { workers, .. } => workers,
            EngineMode::Sequential => 1,
        }
    }

    fn gvt_interval(&self) -> Duration {
        match self.mode {
            EngineMode::Parallel { gvt_interval, .. } => gvt_interval,
            EngineMode::Sequential => Duration::from_secs(1),
        }
    }

    pub fn end(&self) -> SimTime {
        SimTime::from_secs_f64(self.end_s)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.penetration) {
            return Err(ConfigError(format!("penetration must lie in [0, 1], got {}", self.penetration)));
        }
        if self.grid.is_none() && (self.nodes.is_none() || self.links.is_none()) {
            return Err(ConfigError("either grid or both nodes and links must be given".into()));
        }
        match &self.trips {
            None => return Err(ConfigError("trips must be given".into())),
            Some(TripSource::Generated(_)) if self.grid.is_none() && self.nodes.is_none() => {
                return Err(ConfigError("generated trips need a network".into()))
            }
            Some(TripSource::Commute(_)) if self.grid.is_none() => {
                return Err(ConfigError("commute trips need a generated grid".into()))
            }
            _ => {}
        }
        for p in [&self.nodes, &self.links, &self.signals].into_iter().flatten() {
            if !p.exists() {
                return Err(ConfigError(format!("{} does not exist", p.display())));
            }
        }
        if let Some(TripSource::File(p)) = &self.trips {
            if !p.exists() {
                return Err(ConfigError(format!("{} does not exist", p.display())));
            }
        }
        if self.partitions == 0 {
            return Err(ConfigError("partitions must be at least 1".into()));
        }
        if let EngineMode::Parallel { workers, gvt_interval } = self.mode {
            if workers == 0 || gvt_interval <= Duration::ZERO {
                return Err(ConfigError("parallel mode needs workers >= 1 and a positive gvt_interval_s".into()));
            }
        }
        self.params.reroute.validate().map_err(ConfigError)
    }

    /// Every key with its resolved value, in a fixed order.
    pub fn echo(&self) -> Vec<(String, String)> {
        let p = &self.params;
        let (mode, workers, gvt) = match self.mode {
            EngineMode::Sequential => ("sequential", 1, 0.0),
            EngineMode::Parallel { workers, gvt_interval } => ("parallel", workers, gvt_interval.as_secs_f64()),
        };
        let trips = match &self.trips {
            None => String::new(),
            Some(TripSource::File(p)) => p.display().to_string(),
            Some(TripSource::Generated(n)) => n.to_string(),
            Some(TripSource::Commute(n)) => format!("commute:{n}"),
        };
        let kv = |k: &str, v: String| (k.to_string(), v);
        vec![
            kv("nodes", opt_path(&self.nodes)),
            kv("links", opt_path(&self.links)),
            kv("signals", opt_path(&self.signals)),
            kv("grid", self.grid.as_ref().map_or(String::new(), |g| g.to_string())),
            kv("grid_block_m", self.grid_block_m.to_string()),
            kv("grid_profile", self.grid_profile.to_string()),
            kv("grid_horizon_s", self.grid_horizon_s.to_string()),
            kv("trips", trips),
            kv("penetration", self.penetration.to_string()),
            kv("seed", self.seed.to_string()),
            kv("partitions", self.partitions.to_string()),
            kv("mode", mode.to_string()),
            kv("workers", workers.to_string()),
            kv("gvt_interval_s", gvt.to_string()),
            kv("end_s", self.end_s.to_string()),
            kv("event_log", self.event_log.to_string()),
            kv("t_lsu", p.reroute.t_lsu.to_string()),
            kv("r_lsu", p.reroute.r_lsu.to_string()),
            kv("t_check", p.reroute.t_check.to_string()),
            kv("t_delay", p.reroute.t_delay.to_string()),
            kv("r_delay", p.reroute.r_delay.to_string()),
            kv("heartbeat_s", p.reroute.heartbeat_period.to_string()),
            kv("purge_periods", p.reroute.purge_periods.to_string()),
            kv("vdf_alpha", p.link.vdf.alpha.to_string()),
            kv("vdf_beta", p.link.vdf.beta.to_string()),
            kv("vdf_window_s", p.link.vdf.window.as_secs_f64().to_string()),
            kv("saturation_vph_per_lane", p.link.saturation_vph_per_lane.to_string()),
            kv(
                "lsu_mode",
                match p.link.lsu_mode {
                    LsuMode::Full => "full".into(),
                    LsuMode::DelayFunction => "vdf".into(),
                },
            ),
        ]
    }
}
