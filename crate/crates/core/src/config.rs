//! Versioned global configuration file. Every section is optional and
//! falls back to its defaults; unknown keys anywhere are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abstraction::AbstractionConfig;
use crate::arbitration::VlmClientConfig;
use crate::planning::{GroundingConfig, PrimitiveCatalog, TrackerConfig};
use crate::sim::autonomy::AutonomyConfig;
use crate::sim::episode::{SimConfig, SimulatorParams};
use crate::sim::PerceptionConfig;
use crate::uncertainty::UncertaintyConfig;
use crate::vehicle::VehicleParams;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("config schema_version {found} is not supported (expected {CONFIG_SCHEMA_VERSION})")]
    Version { found: u32 },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Directory for event logs, results and reports.
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub simulator: SimulatorParams,
    #[serde(default)]
    pub vehicle: VehicleParams,
    #[serde(default)]
    pub abstraction: AbstractionConfig,
    #[serde(default)]
    pub uncertainty: UncertaintyConfig,
    #[serde(default)]
    pub autonomy: AutonomyConfig,
    #[serde(default)]
    pub perception: PerceptionConfig,
    #[serde(default)]
    pub primitives: PrimitiveCatalog,
    /// PID gains of the path tracker.
    #[serde(default)]
    pub tracker: TrackerConfig,
    #[serde(default)]
    pub grounding: GroundingConfig,
    #[serde(default)]
    pub vlm: VlmClientConfig,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            output: OutputConfig::default(),
            simulator: sim.simulator,
            vehicle: sim.vehicle,
            abstraction: sim.abstraction,
            uncertainty: sim.uncertainty,
            autonomy: sim.autonomy,
            perception: sim.perception,
            primitives: sim.primitives,
            tracker: sim.tracker,
            grounding: sim.grounding,
            vlm: VlmClientConfig::default(),
        }
    }
}

impl GlobalConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: GlobalConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(ConfigError::Version {
                found: self.schema_version,
            });
        }
        self.sim().validate().map_err(ConfigError::Invalid)?;
        self.vlm.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn sim(&self) -> SimConfig {
        SimConfig {
            simulator: self.simulator.clone(),
            vehicle: self.vehicle.clone(),
            abstraction: self.abstraction.clone(),
            uncertainty: self.uncertainty.clone(),
            autonomy: self.autonomy.clone(),
            perception: self.perception.clone(),
            primitives: self.primitives.clone(),
            tracker: self.tracker.clone(),
            grounding: self.grounding.clone(),
        }
    }

    /// Every key with its default value.
    pub fn defaults_toml() -> String {
        toml::to_string_pretty(&GlobalConfig::default()).expect("defaults serialize")
    }
}
