use nalgebra::{DVector, Matrix3, Vector3};
use ndarray::Array1;

use super::LatentError;
use crate::mpm::energy::{potential_energy, EnergyBreakdown};
use crate::mpm::{Pose, SimConfig};
use crate::rom::{Autoencoder, NormStats, CHANNELS};

/// Predictor of a force-free step in the flattened 12-channel layout: the
/// displacement block advances by `dt·v + dt²·g`, the `F` block is copied.
pub fn inertial_target(
    q: &[f64],
    v: &[Vector3<f64>],
    dt: f64,
    gravity: &Vector3<f64>,
) -> Result<Vec<f64>, LatentError> {
    if q.len() != CHANNELS * v.len() {
        return Err(LatentError::LengthMismatch {
            what: "state vs velocity",
            expected: CHANNELS * v.len(),
            got: q.len(),
        });
    }
    let mut out = q.to_vec();
    let shift_g = gravity * (dt * dt);
    for (p, v) in v.iter().enumerate() {
        for a in 0..3 {
            out[CHANNELS * p + a] += dt * v[a] + shift_g[a];
        }
    }
    Ok(out)
}

/// Energy unit of the latent objective: `E·V·10⁻⁶`, the elastic energy of the
/// whole gel at a reference strain of 10⁻³.
pub fn default_energy_scale(config: &SimConfig) -> f64 {
    config.material.young_modulus() * config.elastomer_extents.iter().product::<f64>() * 1e-6
}

/// Everything the per-frame objective needs besides `z`.
pub struct LatentObjectiveContext<'a> {
    /// Raw (unnormalized) inertial target, 12 channels per fine particle.
    pub q_inertial: Vec<f64>,
    /// Particle masses, kg.
    pub mass: &'a [f64],
    pub volume0: &'a [f64],
    pub rest: &'a [Vector3<f64>],
    /// Step, s. `f64::INFINITY` drops the inertia term.
    pub dt: f64,
    /// Material, indenter, contact and gravity settings.
    pub config: &'a SimConfig,
    pub pose: Pose,
    pub model: &'a Autoencoder<f64>,
    pub stats: &'a NormStats,
    pub energy_scale: f64,
}

impl LatentObjectiveContext<'_> {
    pub fn validate(&self) -> Result<(), LatentError> {
        let n = self.rest.len();
        let check = |what, got: usize, expected: usize| {
            if got == expected {
                Ok(())
            } else {
                Err(LatentError::LengthMismatch { what, expected, got })
            }
        };
        check("inertial target", self.q_inertial.len(), CHANNELS * n)?;
        check("masses", self.mass.len(), n)?;
        check("volumes", self.volume0.len(), n)?;
        check("decoder output", self.model.arch.output_dim, CHANNELS * n)?;
        if self.mass.iter().any(|m| !(*m > 0.0)) {
            return Err(LatentError::Config("masses must be positive".into()));
        }
        if !(self.dt > 0.0 && self.energy_scale > 0.0) {
            return Err(LatentError::Config("dt and energy scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentEvaluation {
    /// Objective in units of the energy scale.
    pub value: f64,
    pub gradient: DVector<f64>,
    /// `(1/2Δt²)‖x − x_in‖²_M`, J.
    pub inertia: f64,
    pub potential: EnergyBreakdown,
    /// Decoded positions and deformation gradients.
    pub positions: Vec<Vector3<f64>>,
    pub f: Vec<Matrix3<f64>>,
}

/// `J(z) = [(1/2Δt²)‖x(z) − x_in‖²_M + P(x(z), F(z))] / E_s` with its gradient
/// through the decoder. An inverted decoded `F` is an error.
pub fn latent_objective(z: &DVector<f64>, ctx: &LatentObjectiveContext<'_>) -> Result<LatentEvaluation, LatentError> {
    let zl = Array1::from_iter(z.iter().copied());
    let (qn, pullback) = ctx.model.decode_with_pullback(zl.view())?;
    let raw = ctx.stats.denormalize(qn.view());
    let n = ctx.rest.len();
    let mut positions = Vec::with_capacity(n);
    let mut fs = Vec::with_capacity(n);
    for p in 0..n {
        let o = CHANNELS * p;
        positions.push(ctx.rest[p] + Vector3::new(raw[o], raw[o + 1], raw[o + 2]));
        fs.push(Matrix3::from_fn(|i, j| raw[o + 3 + 3 * i + j]));
    }
    let energy = potential_energy(&positions, &fs, ctx.mass, ctx.volume0, ctx.config, &ctx.pose)?;
    let inv_dt2 = 1.0 / (ctx.dt * ctx.dt);
    let inv_scale = 1.0 / ctx.energy_scale;
    let mut inertia = 0.0;
    let mut dq = Array1::<f64>::zeros(CHANNELS * n);
    for p in 0..n {
        let o = CHANNELS * p;
        for a in 0..3 {
            let d = raw[o + a] - ctx.q_inertial[o + a];
            inertia += 0.5 * inv_dt2 * ctx.mass[p] * d * d;
            dq[o + a] = (ctx.mass[p] * inv_dt2 * d + energy.grad_x[p][a]) * inv_scale * ctx.stats.scale[a];
        }
        let gf = &energy.grad_f[p];
        for i in 0..3 {
            for j in 0..3 {
                let c = 3 + 3 * i + j;
                dq[o + c] = gf[(i, j)] * inv_scale * ctx.stats.scale[c];
            }
        }
    }
    let gz = pullback.latent_gradient(dq.view())?;
    Ok(LatentEvaluation {
        value: (inertia + energy.breakdown.total()) * inv_scale,
        gradient: DVector::from_iterator(gz.len(), gz.iter().copied()),
        inertia,
        potential: energy.breakdown,
        positions,
        f: fs,
    })
}

/// Objective adaptor for [`super::lbfgs_minimize`]: inverted states become `+∞`.
pub fn objective_or_infinity(z: &DVector<f64>, ctx: &LatentObjectiveContext<'_>) -> Result<(f64, DVector<f64>), LatentError> {
    match latent_objective(z, ctx) {
        Ok(e) => Ok((e.value, e.gradient)),
        Err(LatentError::Inverted(_)) => Ok((f64::INFINITY, DVector::zeros(z.len()))),
        Err(e) => Err(e),
    }
}
