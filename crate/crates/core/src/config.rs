//! Sectioned TOML configuration: `[sim] [reward] [agent] [train] [eval]`.
//!
//! Every field has a default, so an empty file is a valid configuration.
//! The `NAVFORGE_SEED` environment variable overrides the training and
//! evaluation seeds.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::AgentConfig;
use crate::percept::ObsScaling;
use crate::rewards::{RewardSpec, RewardVariant};
use crate::simcore::SimConfig;
use crate::worldmap::GridMap;

pub const SEED_ENV: &str = "NAVFORGE_SEED";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalingKind {
    #[default]
    Raw,
    /// LiDAR divided by the sensor range, relative goal by the map diagonal.
    Unit,
}

/// Reward engine choice plus optional overrides of its constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSection {
    pub variant: RewardVariant,
    pub arrival: Option<f64>,
    pub collision: Option<f64>,
    pub timeout: Option<f64>,
    pub l1: Option<usize>,
    pub l2: Option<usize>,
    pub r_l_cap: Option<f64>,
    pub safety_distance: Option<f64>,
}

impl Default for RewardSection {
    fn default() -> Self {
        Self {
            variant: RewardVariant::Proposed,
            arrival: None,
            collision: None,
            timeout: None,
            l1: None,
            l2: None,
            r_l_cap: None,
            safety_distance: None,
        }
    }
}

impl RewardSection {
    pub fn spec(&self) -> RewardSpec {
        let mut s = RewardSpec::new(self.variant);
        if let Some(v) = self.arrival {
            s.constants.arrival = v;
        }
        if let Some(v) = self.collision {
            s.constants.collision = v;
        }
        if self.timeout.is_some() {
            s.constants.timeout = self.timeout;
        }
        s.l1 = self.l1.unwrap_or(s.l1);
        s.l2 = self.l2.unwrap_or(s.l2);
        s.r_l_cap = self.r_l_cap.unwrap_or(s.r_l_cap);
        s.safety_distance = self.safety_distance.unwrap_or(s.safety_distance);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub episodes: u64,
    pub episode_timeout: usize,
    pub map_rotation_period: u64,
    /// Bundled map ids or `.gridmap` paths.
    pub maps: Vec<String>,
    pub seed: u64,
    pub checkpoint_period: u64,
    pub log_window: usize,
    /// Minimum start-goal distance for resampled episodes, meters.
    pub min_start_goal: f64,
    /// Clearance of sampled start and goal cells from obstacles, meters.
    pub spawn_clearance: f64,
    /// Fixed start/goal roster file, cycled by episode, instead of resampling.
    pub roster: Option<String>,
    pub max_hours: Option<f64>,
    pub obs_scaling: ScalingKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 20_000,
            episode_timeout: 500,
            map_rotation_period: 500,
            maps: vec!["train-12".into(), "train-20".into(), "train-40".into()],
            seed: 0,
            checkpoint_period: 1000,
            log_window: 100,
            min_start_goal: 2.0,
            spawn_clearance: 0.4,
            roster: None,
            max_hours: None,
            obs_scaling: ScalingKind::Raw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub checkpoint: Option<String>,
    pub map: Option<String>,
    pub roster: Option<String>,
    pub trials: usize,
    pub deterministic_policy: bool,
    pub seed: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            checkpoint: None,
            map: None,
            roster: None,
            trials: 500,
            deterministic_policy: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub sim: SimConfig,
    pub reward: RewardSection,
    pub agent: AgentConfig,
    pub train: TrainConfig,
    pub eval: EvalSection,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads, parses, applies the seed override and validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.apply_seed_override(std::env::var(SEED_ENV).ok().as_deref())?;
        Ok(cfg)
    }

    /// Applies a `NAVFORGE_SEED` value, if any.
    pub fn apply_seed_override(&mut self, value: Option<&str>) -> Result<(), ConfigError> {
        if let Some(v) = value {
            let seed = v.trim().parse::<u64>().map_err(|_| {
                ConfigError::Invalid(format!("{SEED_ENV}={v:?} is not an unsigned integer"))
            })?;
            self.train.seed = seed;
            self.eval.seed = seed;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.sim.validate().map_err(ConfigError::Invalid)?;
        self.agent.validate().map_err(ConfigError::Invalid)?;
        self.reward
            .spec()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let t = &self.train;
        if t.episodes == 0
            || t.episode_timeout == 0
            || t.map_rotation_period == 0
            || t.checkpoint_period == 0
        {
            return Err(ConfigError::Invalid(
                "train: counters must be positive".into(),
            ));
        }
        if t.log_window == 0 {
            return Err(ConfigError::Invalid(
                "train: log_window must be >= 1".into(),
            ));
        }
        if t.maps.is_empty() && t.roster.is_none() {
            return Err(ConfigError::Invalid("train: map list is empty".into()));
        }
        if !(t.min_start_goal >= 0.0 && t.spawn_clearance >= 0.0) {
            return Err(ConfigError::Invalid(
                "train: distances must be non-negative".into(),
            ));
        }
        if matches!(t.max_hours, Some(h) if !(h > 0.0)) {
            return Err(ConfigError::Invalid(
                "train: max_hours must be positive".into(),
            ));
        }
        if self.eval.trials == 0 {
            return Err(ConfigError::Invalid("eval: trials must be >= 1".into()));
        }
        Ok(())
    }

    /// Observation scaling on `map`; unit scaling depends on the map diagonal.
    pub fn obs_scaling(&self, map: &GridMap) -> ObsScaling {
        match self.train.obs_scaling {
            ScalingKind::Raw => ObsScaling::Raw,
            ScalingKind::Unit => ObsScaling::Unit {
                max_range: self.sim.max_range,
                goal_scale: map.diagonal_m(),
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
