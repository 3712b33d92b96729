//! Online reduced-order stepping: each frame minimizes an inertia-plus-potential
//! objective over the latent code with L-BFGS while a coarse MPM solver runs in
//! lockstep and supplies the indenter.

pub mod lbfgs;
pub mod objective;
pub mod rollout;

pub use lbfgs::{lbfgs_minimize, LbfgsResult, LbfgsSettings};
pub use objective::{default_energy_scale, inertial_target, latent_objective, objective_or_infinity, LatentEvaluation, LatentObjectiveContext};
pub use rollout::{rollout, write_rollout, FrameReport, RolloutOutput, RolloutSettings, RolloutSetup, WarmStart};

use thiserror::Error;

use crate::mpm::MpmError;
use crate::rom::RomError;

#[derive(Debug, Error)]
pub enum LatentError {
    #[error("invalid latent setup: {0}")]
    Config(String),
    #[error("{what}: expected length {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("decoded state is inverted: {0}")]
    Inverted(MpmError),
    #[error("objective is not finite at the starting point")]
    NonFiniteStart,
    #[error(transparent)]
    Mpm(MpmError),
    #[error(transparent)]
    Rom(#[from] RomError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<MpmError> for LatentError {
    fn from(e: MpmError) -> Self {
        match e {
            MpmError::Inverted { .. } => LatentError::Inverted(e),
            other => LatentError::Mpm(other),
        }
    }
}

impl LatentError {
    pub fn is_numerical(&self) -> bool {
        match self {
            LatentError::Inverted(_) | LatentError::NonFiniteStart => true,
            LatentError::Mpm(e) => e.is_numerical(),
            LatentError::Rom(e) => matches!(e, RomError::CorruptParameters),
            _ => false,
        }
    }
}
