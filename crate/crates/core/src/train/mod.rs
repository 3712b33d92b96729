//! Offline pipeline: paired fine/coarse press data, autoencoder losses, Adam and the
//! training loop.

pub mod adam;
pub mod dataset;
pub mod loss;
pub mod pairs;
pub mod trainer;

pub use adam::{AdamConfig, AdamState};
pub use dataset::{generate_dataset, Dataset, DatasetSpec, DatasetSummary, ScenarioData, ScenarioMeta, ScenarioSpec};
pub use loss::{batch_loss, consistency_loss, reconstruction_loss, AeGrads, ConsistencyBatch, LossBreakdown, LossWeights};
pub use pairs::TrainingSet;
pub use trainer::{train, EpochLog, TrainConfig, TrainReport};

use thiserror::Error;

use crate::mpm::MpmError;
use crate::rom::RomError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training setup: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },
    #[error("gradient contains non-finite values; step rejected")]
    NonFiniteGradient,
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error(transparent)]
    Mpm(#[from] MpmError),
    #[error(transparent)]
    Rom(#[from] RomError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TrainError {
    pub fn is_numerical(&self) -> bool {
        match self {
            TrainError::Diverged { .. } | TrainError::NonFiniteGradient => true,
            TrainError::Mpm(e) => e.is_numerical(),
            TrainError::Rom(e) => matches!(e, RomError::CorruptParameters),
            _ => false,
        }
    }
}
