//! Normalized training pairs assembled from a dataset.

use nalgebra::Vector3;
use ndarray::{Array2, ArrayView2, Axis};

use super::dataset::Dataset;
use super::TrainError;
use crate::mpm::{Grid, GridResampler, SimConfig};
use crate::rom::{NormStats, CHANNELS};

/// Per-particle consistency targets: coarse velocity (3) then coarse `F`
/// row-major (9), transferred to fine rest positions.
pub const TARGET_CHANNELS: usize = 12;

/// One row per fine frame of the selected scenarios.
pub struct TrainingSet {
    /// Normalized fine states.
    pub q: Array2<f32>,
    /// Consistency targets in physical units.
    pub targets: Array2<f32>,
    /// Row of the previous frame of the same scenario.
    pub prev: Vec<Option<usize>>,
    pub scenario: Vec<usize>,
    pub frame: Vec<usize>,
    /// Frame interval of each row's scenario, s.
    pub dt: Vec<f64>,
}

/// Coarse-to-fine transfer for a dataset: the coarse grid of `coarse`, coarse rest
/// particles as sources and fine rest particles as targets.
pub fn coarse_to_fine(
    coarse: &SimConfig,
    coarse_rest: &[Vector3<f64>],
    fine_rest: &[Vector3<f64>],
) -> Result<GridResampler, TrainError> {
    let grid = Grid::for_config(coarse);
    let mass = vec![1.0; coarse_rest.len()];
    Ok(GridResampler::new(&grid, coarse_rest, &mass, fine_rest)?)
}

impl TrainingSet {
    pub fn build(dataset: &Dataset, ids: &[usize], stats: &NormStats) -> Result<Self, TrainError> {
        let first = dataset
            .scenarios
            .first()
            .ok_or_else(|| TrainError::Dataset("empty dataset".into()))?;
        let fine_rest = first.fine.frames[0].x.clone();
        let n = fine_rest.len();
        let mut rows = 0;
        for &id in ids {
            rows += dataset
                .scenario(id)
                .ok_or_else(|| TrainError::Dataset(format!("unknown scenario {id}")))?
                .fine
                .frames
                .len();
        }
        let mut set = TrainingSet {
            q: Array2::zeros((rows, CHANNELS * n)),
            targets: Array2::zeros((rows, TARGET_CHANNELS * n)),
            prev: Vec::with_capacity(rows),
            scenario: Vec::with_capacity(rows),
            frame: Vec::with_capacity(rows),
            dt: Vec::with_capacity(rows),
        };
        let mut row = 0;
        for &id in ids {
            let s = dataset.scenario(id).expect("checked above");
            let coarse_rest = &s.coarse.frames[0].x;
            let transfer = coarse_to_fine(&s.meta.coarse, coarse_rest, &fine_rest)?;
            for k in 0..s.fine.frames.len() {
                let q = stats.normalize::<f32>(&s.fine_fields(k).flatten());
                set.q.row_mut(row).assign(&q);
                let c = &s.coarse.frames[k];
                let v = transfer.apply_vectors(&c.v);
                let f = transfer.apply_matrices(&c.f);
                let mut t = set.targets.row_mut(row);
                for p in 0..n {
                    let o = TARGET_CHANNELS * p;
                    for a in 0..3 {
                        t[o + a] = v[p][a] as f32;
                    }
                    for i in 0..3 {
                        for j in 0..3 {
                            t[o + 3 + 3 * i + j] = f[p][(i, j)] as f32;
                        }
                    }
                }
                set.prev.push((k > 0).then(|| row - 1));
                set.scenario.push(id);
                set.frame.push(k);
                set.dt.push(s.fine.frame_interval);
                row += 1;
            }
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.q.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.q.nrows() == 0
    }

    pub fn particle_count(&self) -> usize {
        self.q.ncols() / CHANNELS
    }

    pub fn rows(&self, idx: &[usize]) -> Array2<f32> {
        self.q.select(Axis(0), idx)
    }

    pub fn target_rows(&self, idx: &[usize]) -> Array2<f32> {
        self.targets.select(Axis(0), idx)
    }

    pub fn states(&self) -> ArrayView2<'_, f32> {
        self.q.view()
    }

    /// Mean Euclidean norm of the normalized states.
    pub fn mean_norm(&self) -> f64 {
        let total: f64 = self
            .q
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt())
            .sum();
        total / self.len().max(1) as f64
    }
}
