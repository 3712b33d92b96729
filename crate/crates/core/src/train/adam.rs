use ndarray::{Array1, ArrayView1, ArrayViewMut1, Zip};
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::rom::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment buffers for a list of parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<A> {
    pub config: AdamConfig,
    pub m: Vec<Array1<A>>,
    pub v: Vec<Array1<A>>,
    pub step: u64,
}

impl<A: Real> AdamState<A> {
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        AdamState {
            config,
            m: sizes.iter().map(|&n| Array1::zeros(n)).collect(),
            v: sizes.iter().map(|&n| Array1::zeros(n)).collect(),
            step: 0,
        }
    }

    /// Bias-corrected update of every tensor. Non-finite gradients reject the whole
    /// step and leave parameters and moments untouched.
    pub fn update(&mut self, params: &mut [ArrayViewMut1<A>], grads: &[ArrayView1<A>]) -> Result<(), TrainError> {
        if params.len() != self.m.len()
            || grads.len() != self.m.len()
            || params.iter().zip(grads).zip(&self.m).any(|((p, g), m)| p.len() != m.len() || g.len() != m.len())
        {
            return Err(TrainError::Config("parameter and gradient shapes differ from the optimizer state".into()));
        }
        if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(TrainError::NonFiniteGradient);
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let lr = A::of(c.lr);
        let (b1, b2) = (A::of(c.beta1), A::of(c.beta2));
        let (c1, c2) = (A::of(1.0 - c.beta1.powi(t)), A::of(1.0 - c.beta2.powi(t)));
        let eps = A::of(c.eps);
        let one = A::one();
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let mhat = *m / c1;
                let vhat = *v / c2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            });
        }
        Ok(())
    }
}
