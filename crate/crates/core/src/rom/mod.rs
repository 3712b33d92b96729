//! Autoencoder over flattened high-resolution elastomer states.

pub mod autoencoder;
pub mod checkpoint;
pub mod encoding;
pub mod mlp;

pub use autoencoder::{Autoencoder, AutoencoderArch};
pub use checkpoint::Checkpoint;
pub use encoding::{DeformationFields, NormStats, CHANNELS};
pub use mlp::{Mlp, MlpCache, Want};

use thiserror::Error;

/// Floating-point type a network can run in: `f32` for training, `f64` for
/// gradient checks and latent optimization.
pub trait Real: ndarray::NdFloat {
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Error)]
pub enum RomError {
    #[error("{what}: expected length {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("backward pass without a matching forward cache")]
    MissingCache,
    #[error("network produced non-finite values; parameters are corrupt")]
    CorruptParameters,
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
