use std::collections::VecDeque;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::LatentError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LbfgsSettings {
    pub max_iters: usize,
    /// Stop once the gradient norm falls below this.
    pub grad_tolerance: f64,
    pub history: usize,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsSettings {
    fn default() -> Self {
        LbfgsSettings {
            max_iters: 10,
            grad_tolerance: 1e-5,
            history: 8,
            c1: 1e-4,
            backtrack: 0.5,
            max_backtracks: 30,
        }
    }
}

impl LbfgsSettings {
    pub fn validate(&self) -> Result<(), LatentError> {
        if self.max_iters == 0 || self.history == 0 {
            return Err(LatentError::Config("max_iters and history must be >= 1".into()));
        }
        if !(self.grad_tolerance > 0.0) {
            return Err(LatentError::Config("grad_tolerance must be positive".into()));
        }
        if !(self.c1 > 0.0 && self.c1 < 1.0 && self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(LatentError::Config("c1 and backtrack must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsResult {
    pub z: DVector<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    /// The line search failed along steepest descent; `z` is the best iterate.
    pub stalled: bool,
    pub evaluations: usize,
    /// Objective at the start and after every accepted step.
    pub trace: Vec<f64>,
}

/// Minimizes `f`, which returns the value and gradient at a point. A non-finite
/// value marks an infeasible point and is rejected by the line search.
pub fn lbfgs_minimize<F>(z0: &DVector<f64>, settings: &LbfgsSettings, mut f: F) -> Result<LbfgsResult, LatentError>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>), LatentError>,
{
    settings.validate()?;
    let (mut value, mut grad) = f(z0)?;
    let mut evaluations = 1;
    if !value.is_finite() {
        return Err(LatentError::NonFiniteStart);
    }
    let mut z = z0.clone();
    let mut pairs: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::with_capacity(settings.history);
    let mut trace = vec![value];
    let mut iterations = 0;
    let mut stalled = false;
    while iterations < settings.max_iters && grad.norm() >= settings.grad_tolerance {
        let mut direction = two_loop(&grad, &pairs);
        if grad.dot(&direction) >= 0.0 {
            pairs.clear();
            direction = steepest(&grad);
        }
        let accepted = match line_search(&z, value, &grad, &direction, settings, &mut f, &mut evaluations)? {
            Some(step) => Some(step),
            None if !pairs.is_empty() => {
                pairs.clear();
                let d = steepest(&grad);
                line_search(&z, value, &grad, &d, settings, &mut f, &mut evaluations)?
            }
            None => None,
        };
        let Some((z_new, v_new, g_new)) = accepted else {
            stalled = true;
            break;
        };
        let s = &z_new - &z;
        let y = &g_new - &grad;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if pairs.len() == settings.history {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        z = z_new;
        value = v_new;
        grad = g_new;
        trace.push(value);
        iterations += 1;
    }
    Ok(LbfgsResult {
        grad_norm: grad.norm(),
        z,
        value,
        iterations,
        stalled,
        evaluations,
        trace,
    })
}

fn steepest(grad: &DVector<f64>) -> DVector<f64> {
    -grad * (1.0 / grad.norm()).min(1.0)
}

fn two_loop(grad: &DVector<f64>, pairs: &VecDeque<(DVector<f64>, DVector<f64>, f64)>) -> DVector<f64> {
    let Some((s_last, y_last, _)) = pairs.back() else {
        return steepest(grad);
    };
    let mut q = grad.clone();
    let mut alpha = vec![0.0; pairs.len()];
    for (i, (s, y, rho)) in pairs.iter().enumerate().rev() {
        alpha[i] = rho * s.dot(&q);
        q.axpy(-alpha[i], y, 1.0);
    }
    let gamma = s_last.dot(y_last) / y_last.norm_squared();
    let mut r = q * gamma;
    for (i, (s, y, rho)) in pairs.iter().enumerate() {
        let beta = rho * y.dot(&r);
        r.axpy(alpha[i] - beta, s, 1.0);
    }
    -r
}

type Accepted = (DVector<f64>, f64, DVector<f64>);

fn line_search<F>(
    z: &DVector<f64>,
    value: f64,
    grad: &DVector<f64>,
    direction: &DVector<f64>,
    settings: &LbfgsSettings,
    f: &mut F,
    evaluations: &mut usize,
) -> Result<Option<Accepted>, LatentError>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>), LatentError>,
{
    let slope = grad.dot(direction);
    let mut t = 1.0;
    for _ in 0..=settings.max_backtracks {
        let trial = z + direction * t;
        let (v, g) = f(&trial)?;
        *evaluations += 1;
        if v.is_finite() && v <= value + settings.c1 * t * slope {
            return Ok(Some((trial, v, g)));
        }
        t *= settings.backtrack;
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_infeasible_start() {
        let z0 = DVector::from_element(2, 0.0);
        let r = lbfgs_minimize(&z0, &LbfgsSettings::default(), |_| Ok((f64::INFINITY, DVector::zeros(2))));
        assert!(matches!(r, Err(LatentError::NonFiniteStart)));
    }

    #[test]
    fn stalls_on_a_wall_of_infeasibility() {
        // Linear objective whose every move is infeasible.
        let z0 = DVector::from_element(2, 0.0);
        let r = lbfgs_minimize(&z0, &LbfgsSettings::default(), |z| {
            let v = if z.norm() > 0.0 { f64::INFINITY } else { 0.0 };
            Ok((v, DVector::from_element(2, 1.0)))
        })
        .unwrap();
        assert!(r.stalled);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.z, z0);
    }
}
