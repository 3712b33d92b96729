//! Potential energy of a particle configuration and its gradients.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use super::config::SimConfig;
use super::indenter::{Indenter, Pose};
use super::material::{energy_and_stress, MaterialParams};
use super::MpmError;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyBreakdown {
    pub elastic: f64,
    pub contact: f64,
    pub gravity: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.elastic + self.contact + self.gravity
    }
}

/// `Σ V_p Ψ(F_p)` and `∂/∂F_p = V_p P(F_p)`.
pub fn elastic_energy(
    f: &[Matrix3<f64>],
    volume0: &[f64],
    material: &MaterialParams,
) -> Result<(f64, Vec<Matrix3<f64>>), MpmError> {
    let parts: Vec<Result<(f64, Matrix3<f64>), MpmError>> = f
        .par_iter()
        .zip(volume0.par_iter())
        .map(|(f, v)| energy_and_stress(f, material).map(|(psi, p)| (v * psi, p * *v)))
        .collect();
    let mut energy = 0.0;
    let mut grad = Vec::with_capacity(parts.len());
    for (i, r) in parts.into_iter().enumerate() {
        let (e, g) = r.map_err(|e| e.at_particle(i))?;
        energy += e;
        grad.push(g);
    }
    Ok((energy, grad))
}

/// Penalty `½ k Σ V_p min(φ(x_p) − s, 0)²` and its position gradient, where `s` is
/// the contact skin used by the grid projection.
pub fn contact_energy(
    x: &[Vector3<f64>],
    volume0: &[f64],
    indenter: &Indenter,
    pose: &Pose,
    stiffness: f64,
    skin: f64,
) -> (f64, Vec<Vector3<f64>>) {
    let parts: Vec<(f64, Vector3<f64>)> = x
        .par_iter()
        .zip(volume0.par_iter())
        .map(|(x, v)| {
            let phi = indenter.signed_distance(pose, x) - skin;
            if phi >= 0.0 {
                return (0.0, Vector3::zeros());
            }
            let k = stiffness * v;
            (0.5 * k * phi * phi, indenter.sdf_gradient(pose, x) * (k * phi))
        })
        .collect();
    let energy = parts.iter().map(|p| p.0).sum();
    (energy, parts.into_iter().map(|p| p.1).collect())
}

/// `−Σ m_p g·x_p` and its gradient.
pub fn gravity_energy(x: &[Vector3<f64>], mass: &[f64], g: &Vector3<f64>) -> (f64, Vec<Vector3<f64>>) {
    let energy = x.iter().zip(mass).map(|(x, m)| -m * g.dot(x)).sum();
    (energy, mass.iter().map(|m| -g * *m).collect())
}

/// Energy of a configuration described by positions and deformation gradients,
/// with gradients with respect to both.
pub struct PotentialEnergy {
    pub breakdown: EnergyBreakdown,
    pub grad_x: Vec<Vector3<f64>>,
    pub grad_f: Vec<Matrix3<f64>>,
}

pub fn potential_energy(
    x: &[Vector3<f64>],
    f: &[Matrix3<f64>],
    mass: &[f64],
    volume0: &[f64],
    config: &SimConfig,
    pose: &Pose,
) -> Result<PotentialEnergy, MpmError> {
    let (elastic, grad_f) = elastic_energy(f, volume0, &config.material)?;
    let (contact, gc) = contact_energy(
        x,
        volume0,
        &config.indenter,
        pose,
        config.contact_stiffness,
        config.contact_skin(),
    );
    let (gravity, gg) = gravity_energy(x, mass, &Vector3::from(config.gravity));
    let grad_x = gc.into_iter().zip(gg).map(|(a, b)| a + b).collect();
    Ok(PotentialEnergy {
        breakdown: EnergyBreakdown {
            elastic,
            contact,
            gravity,
        },
        grad_x,
        grad_f,
    })
}
