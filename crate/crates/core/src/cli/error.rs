use thiserror::Error;

use crate::latent::LatentError;
use crate::mpm::MpmError;
use crate::render::RenderError;
use crate::rom::RomError;
use crate::train::TrainError;

/// Failure of a subcommand, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    /// 2 for configuration errors, 3 for numerical failures, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub(crate) fn io(context: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{context}: {e}"))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<MpmError> for CliError {
    fn from(e: MpmError) -> Self {
        let msg = e.to_string();
        match e {
            MpmError::InvalidConfig(_) | MpmError::CflViolation { .. } => CliError::Config(msg),
            MpmError::Inverted { .. } | MpmError::OutOfDomain { .. } => CliError::Numerical(msg),
            MpmError::Format(_) | MpmError::Io(_) => CliError::Io(msg),
        }
    }
}

impl From<RomError> for CliError {
    fn from(e: RomError) -> Self {
        let msg = e.to_string();
        match e {
            RomError::ShapeMismatch { .. } | RomError::Architecture(_) => CliError::Config(msg),
            RomError::MissingCache | RomError::CorruptParameters => CliError::Numerical(msg),
            RomError::Format(_) | RomError::Version { .. } | RomError::Json(_) | RomError::Io(_) => CliError::Io(msg),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Mpm(e) => e.into(),
            TrainError::Rom(e) => e.into(),
            TrainError::Config(_) => CliError::Config(e.to_string()),
            TrainError::Diverged { .. } | TrainError::NonFiniteGradient => CliError::Numerical(e.to_string()),
            TrainError::Dataset(_) | TrainError::Json(_) | TrainError::Io(_) => CliError::Io(e.to_string()),
        }
    }
}

impl From<LatentError> for CliError {
    fn from(e: LatentError) -> Self {
        match e {
            LatentError::Mpm(e) => e.into(),
            LatentError::Rom(e) => e.into(),
            LatentError::Config(_) | LatentError::LengthMismatch { .. } => CliError::Config(e.to_string()),
            LatentError::Inverted(_) | LatentError::NonFiniteStart => CliError::Numerical(e.to_string()),
            LatentError::Json(_) | LatentError::Io(_) => CliError::Io(e.to_string()),
        }
    }
}

impl From<RenderError> for CliError {
    fn from(e: RenderError) -> Self {
        let msg = e.to_string();
        match e {
            RenderError::Config(_) | RenderError::DimensionMismatch { .. } => CliError::Config(msg),
            RenderError::EmptySurface
            | RenderError::EmptyPointSet
            | RenderError::TotalInternalReflection
            | RenderError::GrazingRay
            | RenderError::AllInvalid(_)
            | RenderError::NoOverlap => CliError::Numerical(msg),
            RenderError::Format(_) | RenderError::Png(_) | RenderError::Json(_) | RenderError::Io(_) => CliError::Io(msg),
        }
    }
}
