//! Scenario documents: TOML, versioned by a top-level `schema = 1`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cbf::PerturbationScheme;
use crate::controller::ControllerConfig;
use crate::error::ConfigError;
use crate::estimator::EstimatorConfig;
use crate::fov::FovParams;
use crate::planner::SstParams;
use crate::world::{MapSpec, OccupancyGrid};
use crate::agents::{EvaderModel, PursuerState};

pub const SCHEMA_VERSION: u32 = 1;

/// The three ablation arms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    PlannerOnly,
    ControllerOnly,
    Full,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::PlannerOnly, Mode::ControllerOnly, Mode::Full];

    pub fn label(self) -> &'static str {
        match self {
            Mode::PlannerOnly => "Planner only",
            Mode::ControllerOnly => "Controller only",
            Mode::Full => "Full system",
        }
    }

    pub fn uses_planner(self) -> bool {
        matches!(self, Mode::PlannerOnly | Mode::Full)
    }

    pub fn uses_controller(self) -> bool {
        matches!(self, Mode::ControllerOnly | Mode::Full)
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "planner_only" => Ok(Mode::PlannerOnly),
            "controller_only" => Ok(Mode::ControllerOnly),
            "full" => Ok(Mode::Full),
            _ => Err(format!("unknown mode `{s}` (planner_only, controller_only, full)")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::PlannerOnly => "planner_only",
            Mode::ControllerOnly => "controller_only",
            Mode::Full => "full",
        })
    }
}

/// When to ask the planner for a new trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplanPolicy {
    /// Replan after this many seconds regardless.
    pub period: f64,
    /// Replan once the evader has been out of view this long.
    pub lost_after: f64,
    /// Minimum spacing between requests.
    pub cooldown: f64,
    /// Deterministic mode: seconds between request and injection.
    pub latency: f64,
}

impl Default for ReplanPolicy {
    fn default() -> Self {
        Self {
            period: 2.0,
            lost_after: 0.5,
            cooldown: 0.5,
            latency: 0.1,
        }
    }
}

/// Range sensor feeding the safety barrier.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingConfig {
    pub lidar_rays: usize,
    pub lidar_range: f64,
    /// Returns used as safety-gradient vertices.
    pub n_nearest: usize,
}

impl Default for SensingConfig {
    fn default() -> Self {
        Self {
            lidar_rays: 360,
            lidar_range: 10.0,
            n_nearest: 3,
        }
    }
}

/// Finite-difference settings for the visibility gradient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CbfConfig {
    pub eps_pos: f64,
    pub eps_theta: f64,
    pub smooth_tol: f64,
    pub nullspace_samples: usize,
}

impl Default for CbfConfig {
    fn default() -> Self {
        Self {
            eps_pos: 0.05,
            eps_theta: 0.05,
            smooth_tol: 0.1,
            nullspace_samples: 4,
        }
    }
}

impl CbfConfig {
    pub fn scheme(&self) -> PerturbationScheme {
        PerturbationScheme {
            nullspace_samples: self.nullspace_samples,
            smooth_tol: self.smooth_tol,
            ..PerturbationScheme::axis(self.eps_pos, self.eps_theta)
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: u32,
    #[serde(default)]
    pub name: String,
    /// Generator expression or `file:<path>`.
    pub map: String,
    pub fov: FovParams,
    pub controller: ControllerConfig,
    #[serde(default)]
    pub planner: SstParams,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    pub evader: EvaderModel,
    /// `[x, y, theta]`.
    pub pursuer_start: [f64; 3],
    pub mode: Mode,
    pub control_rate: f64,
    pub run_duration: f64,
    #[serde(default)]
    pub seed: u64,
    /// Iteration-budgeted planning injected at fixed ticks; wall time unused.
    #[serde(default = "yes")]
    pub deterministic: bool,
    /// Seed the track with the evader's start position at `t = 0`.
    #[serde(default = "yes")]
    pub evader_cue: bool,
    #[serde(default)]
    pub replan: ReplanPolicy,
    #[serde(default)]
    pub sensing: SensingConfig,
    #[serde(default)]
    pub cbf: CbfConfig,
    /// Directory relative map paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ScenarioConfig {
    /// Parse a scenario document and apply `key.path=value` overrides.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        let mut cfg = decode(&table)?;
        for ov in overrides {
            let (key, value) = ov.split_once('=').ok_or_else(|| ConfigError::Override(ov.clone()))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Override(ov.clone()));
            }
            set_dotted(&mut table, key, parse_value(value.trim())).map_err(|_| ConfigError::UnknownKey(key.into()))?;
            cfg = decode(&table).map_err(|e| match e {
                ConfigError::Parse(msg) if msg.contains("unknown field") || msg.contains("unknown variant") => {
                    ConfigError::UnknownKey(key.into())
                }
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text, overrides)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serialises")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema != SCHEMA_VERSION {
            return Err(ConfigError::Schema(self.schema));
        }
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.control_rate > 0.0) {
            return bad("control_rate must be positive".into());
        }
        if !(self.run_duration > 0.0) {
            return bad("run_duration must be positive".into());
        }
        self.fov.validate().map_err(ConfigError::Invalid)?;
        self.controller.validate().map_err(ConfigError::Invalid)?;
        self.planner.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.evader.validate().map_err(ConfigError::Invalid)?;
        self.cbf.scheme().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.sensing.n_nearest == 0 || self.sensing.lidar_rays == 0 {
            return bad("sensing needs at least one ray and one nearest return".into());
        }
        if !(self.estimator.r > 0.0 && self.estimator.q >= 0.0) {
            return bad("estimator noise must be positive".into());
        }
        self.map.parse::<MapSpec>()?;
        Ok(())
    }

    pub fn map_spec(&self) -> Result<MapSpec, ConfigError> {
        Ok(self.map.parse()?)
    }

    pub fn build_map(&self) -> Result<OccupancyGrid, ConfigError> {
        Ok(self.map_spec()?.build(&self.base_dir)?)
    }

    pub fn start_state(&self) -> PursuerState {
        PursuerState::new(self.pursuer_start[0], self.pursuer_start[1], self.pursuer_start[2])
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.control_rate
    }

    pub fn n_ticks(&self) -> usize {
        (self.run_duration * self.control_rate).round() as usize
    }
}

fn decode(table: &toml::Table) -> Result<ScenarioConfig, ConfigError> {
    let cfg: ScenarioConfig = table
        .clone()
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    if cfg.schema != SCHEMA_VERSION {
        return Err(ConfigError::Schema(cfg.schema));
    }
    Ok(cfg)
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), ()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts.pop().ok_or(())?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or(())?;
    }
    cur.insert(leaf.to_string(), value);
    Ok(())
}

/// Desk-scale pillar scenario: a 1:10 rescale of the CARLA arena.
pub const DESK_PILLARS: &str = include_str!("../../../../scenarios/desk_pillars.toml");
