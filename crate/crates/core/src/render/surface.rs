use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use super::spatial::PointIndex;
use super::RenderError;

/// Neighbors used by the local plane fit.
pub const NORMAL_NEIGHBORS: usize = 12;

/// Surface particles chosen once from the rest configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceSelector {
    pub indices: Vec<usize>,
    /// For each surface point, positions in `indices` of its nearest surface
    /// neighbors at rest (itself included).
    neighbors: Vec<Vec<usize>>,
}

/// Surface points of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceSet {
    pub indices: Vec<usize>,
    pub positions: Vec<Vector3<f64>>,
    pub normals: Vec<Vector3<f64>>,
}

impl SurfaceSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

impl SurfaceSelector {
    /// Particles whose rest position lies within `spacing` of the top face `top_z`.
    pub fn new(rest: &[Vector3<f64>], top_z: f64, spacing: f64) -> Result<Self, RenderError> {
        let indices: Vec<usize> = (0..rest.len()).filter(|&i| rest[i].z >= top_z - spacing).collect();
        if indices.is_empty() {
            return Err(RenderError::EmptySurface);
        }
        let pts: Vec<Vector3<f64>> = indices.iter().map(|&i| rest[i]).collect();
        let index = PointIndex::new(&pts);
        let neighbors = pts
            .iter()
            .map(|p| index.knn(p, NORMAL_NEIGHBORS).into_iter().map(|(j, _)| j).collect())
            .collect();
        Ok(SurfaceSelector { indices, neighbors })
    }

    pub fn extract(&self, positions: &[Vector3<f64>]) -> SurfaceSet {
        let pts: Vec<Vector3<f64>> = self.indices.iter().map(|&i| positions[i]).collect();
        let normals = self.neighbors.iter().map(|nb| plane_normal(nb.iter().map(|&j| pts[j]))).collect();
        SurfaceSet {
            indices: self.indices.clone(),
            positions: pts,
            normals,
        }
    }
}

/// Convenience wrapper building the selector and extracting in one go.
pub fn extract_surface(
    positions: &[Vector3<f64>],
    rest: &[Vector3<f64>],
    top_z: f64,
    spacing: f64,
) -> Result<SurfaceSet, RenderError> {
    Ok(SurfaceSelector::new(rest, top_z, spacing)?.extract(positions))
}

/// Least-squares plane normal, oriented towards +z.
fn plane_normal(points: impl Iterator<Item = Vector3<f64>> + Clone) -> Vector3<f64> {
    let n = points.clone().count() as f64;
    let centroid: Vector3<f64> = points.clone().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let k = eig.eigenvalues.imin();
    let mut normal: Vector3<f64> = eig.eigenvectors.column(k).into_owned();
    if normal.z < 0.0 {
        normal = -normal;
    }
    normal.normalize()
}
