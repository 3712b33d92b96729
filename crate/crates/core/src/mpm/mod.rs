//! Explicit MLS/APIC material point method for a hyperelastic elastomer pressed by a
//! rigid indenter.

pub mod config;
pub mod energy;
pub mod grid;
pub mod indenter;
pub mod io;
pub mod kernel;
pub mod material;
pub mod resample;
pub mod scenario;
pub mod state;
pub mod transfer;

pub use config::{BoundaryConditions, PressSchedule, SimConfig, WallKind};
pub use grid::{Grid, Region};
pub use indenter::{Indenter, IndenterShape, IndenterState, Pose, SdfGrid};
pub use material::MaterialParams;
pub use resample::GridResampler;
pub use scenario::{run_press_frames, run_press_scenario, run_press_scenario_with, Trajectory};
pub use state::{FullState, ParticleState};
pub use transfer::{g2p, grid_update, p2g, step, ExecMode, Solver};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MpmError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("inverted deformation gradient (det = {det:e}) at particle {particle:?}, step {step:?}")]
    Inverted {
        particle: Option<usize>,
        step: Option<usize>,
        det: f64,
    },
    #[error("time step {dt:e} s exceeds the CFL limit {limit:e} s")]
    CflViolation { dt: f64, limit: f64 },
    #[error("particle {particle} left the valid grid interior at {position:?}")]
    OutOfDomain { particle: usize, position: [f64; 3] },
    #[error("malformed trajectory file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl MpmError {
    pub(crate) fn at_particle(self, index: usize) -> Self {
        match self {
            MpmError::Inverted { step, det, .. } => MpmError::Inverted {
                particle: Some(index),
                step,
                det,
            },
            other => other,
        }
    }

    pub(crate) fn at_step(self, index: usize) -> Self {
        match self {
            MpmError::Inverted { particle, det, .. } => MpmError::Inverted {
                particle,
                step: Some(index),
                det,
            },
            other => other,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            MpmError::Inverted { .. } | MpmError::OutOfDomain { .. } | MpmError::CflViolation { .. }
        )
    }
}
