//! Transfer of per-particle fields between particle sets through a background grid.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};

use super::grid::Grid;
use super::kernel::Stencil;
use super::MpmError;

/// Linear map from source-particle values to target points. Source values are
/// splatted to the grid with mass-weighted B-spline weights and gathered at each
/// target with the same kernel, normalized by the gathered node mass:
/// `u(y) = Σ_g w_g(y) Σ_p w_g(x_p) m_p u_p / Σ_g w_g(y) M_g`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridResampler {
    /// Per target, `(source particle, weight)` with weights summing to 1.
    rows: Vec<Vec<(usize, f64)>>,
    sources: usize,
}

impl GridResampler {
    pub fn new(
        grid: &Grid,
        source: &[Vector3<f64>],
        source_mass: &[f64],
        target: &[Vector3<f64>],
    ) -> Result<Self, MpmError> {
        let mut node_particles: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
        for (p, x) in source.iter().enumerate() {
            let s = Stencil::new(x, &grid.origin, grid.dx, grid.dims).ok_or(MpmError::OutOfDomain {
                particle: p,
                position: [x.x, x.y, x.z],
            })?;
            s.for_each_node(|ijk, w, _| {
                node_particles.entry(grid.index(ijk)).or_default().push((p, w * source_mass[p]));
            });
        }
        let mut rows = Vec::with_capacity(target.len());
        for (i, y) in target.iter().enumerate() {
            let s = Stencil::new(y, &grid.origin, grid.dx, grid.dims).ok_or(MpmError::OutOfDomain {
                particle: i,
                position: [y.x, y.y, y.z],
            })?;
            let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
            let mut total = 0.0;
            s.for_each_node(|ijk, w, _| {
                if let Some(list) = node_particles.get(&grid.index(ijk)) {
                    for &(p, wm) in list {
                        *acc.entry(p).or_insert(0.0) += w * wm;
                        total += w * wm;
                    }
                }
            });
            if !(total > 0.0) {
                return Err(MpmError::InvalidConfig(format!(
                    "target point {i} at {:?} has no source mass within its stencil",
                    [y.x, y.y, y.z]
                )));
            }
            rows.push(acc.into_iter().map(|(p, w)| (p, w / total)).collect());
        }
        Ok(GridResampler {
            rows,
            sources: source.len(),
        })
    }

    pub fn target_count(&self) -> usize {
        self.rows.len()
    }

    pub fn source_count(&self) -> usize {
        self.sources
    }

    pub fn apply_vectors(&self, field: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        self.apply(field, Vector3::zeros())
    }

    pub fn apply_matrices(&self, field: &[Matrix3<f64>]) -> Vec<Matrix3<f64>> {
        self.apply(field, Matrix3::zeros())
    }

    fn apply<T>(&self, field: &[T], zero: T) -> Vec<T>
    where
        T: Copy + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        assert_eq!(field.len(), self.sources, "field length differs from the source count");
        self.rows
            .iter()
            .map(|row| row.iter().fold(zero, |acc, &(p, w)| acc + field[p] * w))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_constant_fields() {
        let grid = Grid::new([12, 12, 12], 1.0, Vector3::zeros());
        let source: Vec<Vector3<f64>> = (0..6)
            .flat_map(|k| (0..6).flat_map(move |j| (0..6).map(move |i| Vector3::new(3.0 + i as f64, 3.0 + j as f64, 3.0 + k as f64))))
            .collect();
        let mass = vec![1.0; source.len()];
        let target = vec![Vector3::new(5.3, 5.7, 6.1), Vector3::new(4.2, 6.6, 5.5)];
        let r = GridResampler::new(&grid, &source, &mass, &target).unwrap();
        let c = r.apply_vectors(&vec![Vector3::new(1.0, -2.0, 0.5); source.len()]);
        for v in c {
            assert!((v - Vector3::new(1.0, -2.0, 0.5)).norm() < 1e-12);
        }
    }
}
