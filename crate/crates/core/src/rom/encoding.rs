//! Flattening of per-particle fields into network vectors.
//!
//! Each particle contributes 12 channels: displacement from its rest position
//! `(ux, uy, uz)` followed by the deformation gradient in row-major order.

use nalgebra::{Matrix3, Vector3};
use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use super::{Real, RomError};

pub const CHANNELS: usize = 12;

/// Per-particle displacement and deformation gradient of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformationFields {
    pub displacement: Vec<Vector3<f64>>,
    pub f: Vec<Matrix3<f64>>,
}

impl DeformationFields {
    pub fn from_positions(x: &[Vector3<f64>], rest: &[Vector3<f64>], f: &[Matrix3<f64>]) -> Self {
        DeformationFields {
            displacement: x.iter().zip(rest).map(|(x, r)| x - r).collect(),
            f: f.to_vec(),
        }
    }

    pub fn at_rest(n: usize) -> Self {
        DeformationFields {
            displacement: vec![Vector3::zeros(); n],
            f: vec![Matrix3::identity(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.displacement.len()
    }

    pub fn is_empty(&self) -> bool {
        self.displacement.is_empty()
    }

    pub fn positions(&self, rest: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        self.displacement.iter().zip(rest).map(|(u, r)| r + u).collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(CHANNELS * self.len());
        for (u, f) in self.displacement.iter().zip(&self.f) {
            out.extend(u.iter());
            for i in 0..3 {
                for j in 0..3 {
                    out.push(f[(i, j)]);
                }
            }
        }
        out
    }

    pub fn unflatten(flat: &[f64]) -> Result<Self, RomError> {
        if !flat.len().is_multiple_of(CHANNELS) {
            return Err(RomError::ShapeMismatch {
                what: "flattened state",
                expected: CHANNELS * (flat.len() / CHANNELS + 1),
                got: flat.len(),
            });
        }
        let (displacement, f) = flat
            .chunks_exact(CHANNELS)
            .map(|c| (Vector3::new(c[0], c[1], c[2]), Matrix3::from_row_slice(&c[3..])))
            .unzip();
        Ok(DeformationFields { displacement, f })
    }
}

/// Per-channel standardization `(v − mean) / scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormStats {
    pub mean: [f64; CHANNELS],
    pub scale: [f64; CHANNELS],
}

impl Default for NormStats {
    fn default() -> Self {
        NormStats {
            mean: [0.0; CHANNELS],
            scale: [1.0; CHANNELS],
        }
    }
}

impl NormStats {
    /// Mean and standard deviation of each channel over all particles of all
    /// samples. Constant channels get unit scale.
    pub fn from_samples<'a>(samples: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut sum = [0.0; CHANNELS];
        let mut sum_sq = [0.0; CHANNELS];
        let mut count = 0usize;
        let mut cached: Vec<&[f64]> = Vec::new();
        for s in samples {
            for chunk in s.chunks_exact(CHANNELS) {
                for c in 0..CHANNELS {
                    sum[c] += chunk[c];
                }
                count += 1;
            }
            cached.push(s);
        }
        if count == 0 {
            return NormStats::default();
        }
        let mut mean = [0.0; CHANNELS];
        for c in 0..CHANNELS {
            mean[c] = sum[c] / count as f64;
        }
        for s in cached {
            for chunk in s.chunks_exact(CHANNELS) {
                for c in 0..CHANNELS {
                    sum_sq[c] += (chunk[c] - mean[c]).powi(2);
                }
            }
        }
        let mut scale = [1.0; CHANNELS];
        for c in 0..CHANNELS {
            let std = (sum_sq[c] / count as f64).sqrt();
            if std > 1e-12 {
                scale[c] = std;
            }
        }
        NormStats { mean, scale }
    }

    pub fn normalize<A: Real>(&self, raw: &[f64]) -> Array1<A> {
        Array1::from_iter(
            raw.iter()
                .enumerate()
                .map(|(i, v)| A::of((v - self.mean[i % CHANNELS]) / self.scale[i % CHANNELS])),
        )
    }

    pub fn denormalize<A: Real>(&self, q: ArrayView1<A>) -> Vec<f64> {
        q.iter()
            .enumerate()
            .map(|(i, v)| v.as_f64() * self.scale[i % CHANNELS] + self.mean[i % CHANNELS])
            .collect()
    }

    pub fn validate(&self) -> Result<(), RomError> {
        if self.scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(RomError::Format("normalization scales must be positive and finite".into()));
        }
        Ok(())
    }
}
