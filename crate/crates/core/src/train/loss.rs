//! Training losses with parameter gradients.
//!
//! All terms share one forward pass over the current frames stacked with their
//! predecessors; each term adds its output gradient and a single reverse pass
//! through decoder and encoder yields the parameter gradients.

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::pairs::TARGET_CHANNELS;
use super::TrainError;
use crate::rom::{Autoencoder, NormStats, Real, Want, CHANNELS};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    #[serde(default = "one")]
    pub rec: f64,
    #[serde(default = "default_v")]
    pub v: f64,
    #[serde(default = "default_f")]
    pub f: f64,
    /// Weight of the decimated-subset reconstruction term relative to the full one.
    #[serde(default = "one")]
    pub multiscale: f64,
}

fn one() -> f64 {
    1.0
}

fn default_v() -> f64 {
    0.4
}

fn default_f() -> f64 {
    0.6
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            rec: 1.0,
            v: 0.4,
            f: 0.6,
            multiscale: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), TrainError> {
        if [self.rec, self.v, self.f, self.multiscale].iter().any(|w| !(*w >= 0.0)) {
            return Err(TrainError::Config("loss weights must be >= 0".into()));
        }
        Ok(())
    }
}

/// Unweighted loss terms, each averaged over its rows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub rec: f64,
    pub multiscale: f64,
    pub cons_v: f64,
    pub cons_f: f64,
}

impl LossBreakdown {
    pub fn total(&self, w: &LossWeights) -> f64 {
        w.rec * (self.rec + w.multiscale * self.multiscale) + w.v * self.cons_v + w.f * self.cons_f
    }
}

/// Gradients with respect to the encoder and decoder parameter vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct AeGrads<A> {
    pub encoder: Array1<A>,
    pub decoder: Array1<A>,
}

/// Predecessor frames and coarse targets for the consistency term. Entry `j`
/// pairs batch row `rows[j]` with `prev` row `j`.
pub struct ConsistencyBatch<'a, A> {
    pub prev: ArrayView2<'a, A>,
    pub rows: &'a [usize],
    /// Target velocity and `F` per fine particle, see [`TARGET_CHANNELS`].
    pub targets: ArrayView2<'a, A>,
    pub stats: &'a NormStats,
    /// Frame interval of each pair, s.
    pub dt: &'a [f64],
}

/// Mean over the batch of `‖g(f(q)) − q‖²` in normalized coordinates.
pub fn reconstruction_loss<A: Real>(model: &Autoencoder<A>, q: ArrayView2<A>) -> Result<(f64, AeGrads<A>), TrainError> {
    let w = LossWeights {
        rec: 1.0,
        v: 0.0,
        f: 0.0,
        multiscale: 0.0,
    };
    let (b, g) = batch_loss(model, q, None, None, &w)?;
    Ok((b.rec, g))
}

/// `λ_v · mean Σ_p ‖v̂_p − v_p‖² + λ_F · mean Σ_p ‖F̂_p − F_p‖²` where `v̂` is the
/// finite difference of decoded positions over consecutive frames.
pub fn consistency_loss<A: Real>(
    model: &Autoencoder<A>,
    q: ArrayView2<A>,
    cons: ConsistencyBatch<'_, A>,
    weights: &LossWeights,
) -> Result<(f64, AeGrads<A>), TrainError> {
    let w = LossWeights {
        rec: 0.0,
        multiscale: 0.0,
        ..*weights
    };
    let (b, g) = batch_loss(model, q, None, Some(cons), &w)?;
    Ok((b.total(&w), g))
}

/// Every term at once. `subset` lists the particles of the decimated resolution;
/// `None` disables the multi-scale term.
pub fn batch_loss<A: Real>(
    model: &Autoencoder<A>,
    q: ArrayView2<A>,
    subset: Option<&[usize]>,
    cons: Option<ConsistencyBatch<'_, A>>,
    weights: &LossWeights,
) -> Result<(LossBreakdown, AeGrads<A>), TrainError> {
    let batch = q.nrows();
    if batch == 0 {
        return Err(TrainError::Config("empty batch".into()));
    }
    let d = q.ncols();
    let n = d / CHANNELS;
    let input = match &cons {
        Some(c) => {
            if c.rows.len() != c.prev.nrows() || c.targets.nrows() != c.prev.nrows() || c.dt.len() != c.prev.nrows() {
                return Err(TrainError::Config("consistency batch parts disagree in length".into()));
            }
            if c.targets.ncols() != TARGET_CHANNELS * n || c.rows.iter().any(|&r| r >= batch) {
                return Err(TrainError::Config("consistency targets do not match the batch".into()));
            }
            concatenate(Axis(0), &[q.view(), c.prev.view()]).map_err(|e| TrainError::Config(e.to_string()))?
        }
        None => q.to_owned(),
    };
    let (z, enc_cache) = model.encoder.forward_cached(input.view())?;
    let (qhat, dec_cache) = model.decoder.forward_cached(z.view())?;
    let mut dq = Array2::<A>::zeros(qhat.dim());
    let mut out = LossBreakdown::default();

    let inv_b = 1.0 / batch as f64;
    if weights.rec > 0.0 {
        let scale = A::of(2.0 * weights.rec * inv_b);
        for r in 0..batch {
            let mut acc = 0.0;
            let (pred, target) = (qhat.row(r), q.row(r));
            let mut g = dq.row_mut(r);
            for c in 0..d {
                let e = pred[c] - target[c];
                acc += e.as_f64() * e.as_f64();
                g[c] += scale * e;
            }
            out.rec += acc * inv_b;
        }
    }
    if let Some(sub) = subset.filter(|_| weights.rec * weights.multiscale > 0.0) {
        if sub.is_empty() || sub.iter().any(|&p| p >= n) {
            return Err(TrainError::Config("multi-scale subset is empty or out of range".into()));
        }
        let ratio = n as f64 / sub.len() as f64;
        let scale = A::of(2.0 * weights.rec * weights.multiscale * ratio * inv_b);
        for r in 0..batch {
            let mut acc = 0.0;
            for &p in sub {
                for c in CHANNELS * p..CHANNELS * (p + 1) {
                    let e = qhat[(r, c)] - q[(r, c)];
                    acc += e.as_f64() * e.as_f64();
                    dq[(r, c)] += scale * e;
                }
            }
            out.multiscale += ratio * acc * inv_b;
        }
    }
    if let Some(c) = &cons {
        let pairs = c.rows.len();
        if pairs > 0 && (weights.v > 0.0 || weights.f > 0.0) {
            let inv_p = 1.0 / pairs as f64;
            for (j, &r) in c.rows.iter().enumerate() {
                let pr = batch + j;
                let inv_dt = 1.0 / c.dt[j];
                let (mut sv, mut sf) = (0.0, 0.0);
                for p in 0..n {
                    let o = CHANNELS * p;
                    let t = TARGET_CHANNELS * p;
                    for a in 0..3 {
                        let scale = c.stats.scale[a];
                        let du = (qhat[(r, o + a)] - qhat[(pr, o + a)]).as_f64() * scale;
                        let e = du * inv_dt - c.targets[(j, t + a)].as_f64();
                        sv += e * e;
                        let g = A::of(2.0 * weights.v * inv_p * e * scale * inv_dt);
                        dq[(r, o + a)] += g;
                        dq[(pr, o + a)] -= g;
                    }
                    for k in 3..CHANNELS {
                        let f = qhat[(r, o + k)].as_f64() * c.stats.scale[k] + c.stats.mean[k];
                        let e = f - c.targets[(j, t + k)].as_f64();
                        sf += e * e;
                        dq[(r, o + k)] += A::of(2.0 * weights.f * inv_p * e * c.stats.scale[k]);
                    }
                }
                out.cons_v += sv * inv_p;
                out.cons_f += sf * inv_p;
            }
        }
    }
    let total = out.total(weights);
    if !total.is_finite() {
        return Err(TrainError::Diverged { epoch: 0 });
    }
    let dec = model.decoder.backward(
        &dec_cache,
        dq.view(),
        Want {
            params: true,
            input: true,
        },
    )?;
    let dz = dec.input.expect("input gradient requested");
    let enc = model.encoder.backward(
        &enc_cache,
        dz.view(),
        Want {
            params: true,
            input: false,
        },
    )?;
    Ok((
        out,
        AeGrads {
            encoder: enc.params.expect("parameter gradient requested"),
            decoder: dec.params.expect("parameter gradient requested"),
        },
    ))
}

/// Particles whose lattice indices are all even: the 2× decimated resolution.
pub fn decimated_particles(lattice: [usize; 3]) -> Vec<usize> {
    let mut out = Vec::new();
    for k in (0..lattice[2]).step_by(2) {
        for j in (0..lattice[1]).step_by(2) {
            for i in (0..lattice[0]).step_by(2) {
                out.push((k * lattice[1] + j) * lattice[0] + i);
            }
        }
    }
    out
}
