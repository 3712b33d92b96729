//! Per-subcommand config files. Unknown keys are rejected; relative paths are
//! resolved against the directory holding the config file.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::latent::{RolloutSettings, RolloutSetup};
use crate::mpm::SimConfig;
use crate::render::SensorConfig;
use crate::train::{DatasetSpec, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub sim: SimConfig,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenDataConfig {
    pub dataset: DatasetSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRunConfig {
    /// Directory written by `gen-data`.
    pub dataset: PathBuf,
    pub train: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutConfig {
    pub setup: RolloutSetup,
    pub checkpoint: PathBuf,
    #[serde(default)]
    pub settings: RolloutSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderConfig {
    pub trajectory: PathBuf,
    /// Elastomer the trajectory was produced from; fixes the rest surface.
    pub sim: SimConfig,
    #[serde(default)]
    pub seed: u64,
    pub sensor: SensorConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryEval {
    pub reference: PathBuf,
    pub prediction: PathBuf,
    pub sim: SimConfig,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepthEval {
    pub reference: PathBuf,
    pub prediction: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationVariant {
    pub name: String,
    pub checkpoint: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationConfig {
    pub setup: RolloutSetup,
    /// Fine ground-truth trajectory of the same press.
    pub reference: PathBuf,
    #[serde(default)]
    pub settings: RolloutSettings,
    /// Table rows in order, typically `full`, `no_physics`, `no_multiscale`, `r16`.
    pub variants: Vec<AblationVariant>,
    /// Frames to roll out; defaults to the whole press.
    #[serde(default)]
    pub frames: Option<usize>,
}

/// At least one block must be present; `--ablate` runs only `ablation`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default)]
    pub trajectories: Option<TrajectoryEval>,
    #[serde(default)]
    pub depth: Option<DepthEval>,
    #[serde(default)]
    pub ablation: Option<AblationConfig>,
}

/// Reads and strictly parses a config; parse errors carry line and column.
pub(crate) fn load<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Config(format!(
            "{}:{}:{}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

/// `p` relative to the config's directory unless absolute.
pub(crate) fn resolve(config_path: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config_path.parent().unwrap_or(Path::new(".")).join(p)
    }
}

/// Resolves `p` and checks that it exists.
pub(crate) fn existing(config_path: &Path, p: &Path, what: &str) -> Result<PathBuf, CliError> {
    let full = resolve(config_path, p);
    if full.exists() {
        Ok(full)
    } else {
        Err(CliError::Io(format!("{what} {} does not exist", full.display())))
    }
}
