//! Service configuration, read from `twin.toml` in the data directory or an
//! explicit file. `CHAINTWIN_DATA_DIR` and `CHAINTWIN_BIND` override the
//! data directory and bind address.

use std::fs;
use std::path::{Path, PathBuf};

use chaintwin_core::feedback::CalibrationConfig;
use chaintwin_core::ingestion::PipelineConfig;
use chaintwin_core::simulation::CostModel;
use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};

pub const CONFIG_FILE: &str = "twin.toml";
pub const ENV_DATA_DIR: &str = "CHAINTWIN_DATA_DIR";
pub const ENV_BIND: &str = "CHAINTWIN_BIND";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub data_dir: PathBuf,
    pub bind: String,
    /// Batches waiting for the ingestion consumer before POST /events
    /// answers 503.
    pub queue_bound: usize,
    /// Bearer token required on every request when set.
    pub api_token: Option<String>,
    /// Optional second token that may only read.
    pub read_token: Option<String>,
    pub ingest: PipelineConfig,
    pub calibration: CalibrationConfig,
    /// Run falsification after every feedback cycle.
    pub falsify_each_cycle: bool,
    /// Open predictions expire this many ticks after their target.
    pub prediction_lateness: u64,
    pub cost: CostModel,
    pub budgets: Budgets,
    pub run_alerts: RunAlerts,
}

/// Limits of synchronous work; larger runs go to the background.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budgets {
    pub sync_max_horizon: u64,
    pub sync_max_nodes: usize,
    pub whatif_ms: u64,
    pub ingest_events_per_sec: f64,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            sync_max_horizon: 10_000,
            sync_max_nodes: 1_000,
            whatif_ms: 2_000,
            ingest_events_per_sec: 1_300.0,
        }
    }
}

/// A completed run whose service level falls below the threshold raises a
/// critical `unmet_demand` alert.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunAlerts {
    pub service_level_below: f64,
}

impl Default for RunAlerts {
    fn default() -> Self {
        Self {
            service_level_below: 1.0,
        }
    }
}

impl Default for Config {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("twin-data"),
            bind: "127.0.0.1:7878".into(),
            queue_bound: 64,
            api_token: None,
            read_token: None,
            ingest: PipelineConfig::default(),
            calibration: CalibrationConfig::default(),
            falsify_each_cycle: true,
            prediction_lateness: 10,
            cost: CostModel::default(),
            budgets: Budgets::default(),
            run_alerts: RunAlerts::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| EngineError::Malformed(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    /// Reads `path`, or the defaults when it does not exist.
    pub fn read(path: &Path) -> Result<Self> {
        match fs::read_to_string(path) {
            Ok(text) => Self::from_toml(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(EngineError::io(format!("reading {}", path.display()), e)),
        }
    }

    /// Resolves the effective configuration. Precedence for the data
    /// directory: explicit argument, environment, config file.
    pub fn resolve(config_file: Option<&Path>, data_dir: Option<&Path>, bind: Option<&str>) -> Result<Self> {
        let env_dir = std::env::var_os(ENV_DATA_DIR).map(PathBuf::from);
        let dir = data_dir.map(Path::to_path_buf).or(env_dir);
        let mut config = match (config_file, &dir) {
            (Some(file), _) => Self::read(file)?,
            (None, Some(dir)) => Self::read(&dir.join(CONFIG_FILE))?,
            (None, None) => Self::read(&Config::default().data_dir.join(CONFIG_FILE))?,
        };
        if let Some(dir) = dir {
            config.data_dir = dir;
        }
        if let Ok(b) = std::env::var(ENV_BIND) {
            config.bind = b;
        }
        if let Some(b) = bind {
            config.bind = b.to_string();
        }
        Ok(config)
    }
}
