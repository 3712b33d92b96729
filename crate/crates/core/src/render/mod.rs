//! Tactile image formation: surface extraction, refraction-aware depth projection
//! and the evaluation metrics.

pub mod depth;
pub mod metrics;
pub mod optics;
pub mod spatial;
pub mod surface;

pub use depth::{read_depth_map, render_depth_map, write_depth_map, DepthMap, DepthModel, RenderDiagnostics, SensorConfig};
pub use metrics::{chamfer_l2, chamfer_l2_mm, image_metrics, masked_ssim, normalized_metrics, ImageMetrics, PSNR_CAP};
pub use optics::{apparent_depth, refract_direction};
pub use surface::{extract_surface, SurfaceSelector, SurfaceSet};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("invalid sensor configuration: {0}")]
    Config(String),
    #[error("surface set is empty")]
    EmptySurface,
    #[error("point set is empty")]
    EmptyPointSet,
    #[error("total internal reflection")]
    TotalInternalReflection,
    #[error("ray is parallel to the sensor plane")]
    GrazingRay,
    #[error("no pixel received a valid depth: {0:?}")]
    AllInvalid(RenderDiagnostics),
    #[error("depth maps differ in size: {pred:?} vs {reference:?}")]
    DimensionMismatch {
        pred: (usize, usize),
        reference: (usize, usize),
    },
    #[error("depth maps share no valid pixel")]
    NoOverlap,
    #[error("malformed depth map: {0}")]
    Format(String),
    #[error("png encoding failed: {0}")]
    Png(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
