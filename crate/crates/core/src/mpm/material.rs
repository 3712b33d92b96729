//! Fixed-corotated hyperelasticity.
//!
//! Energy density `Ψ(F) = μ‖F − R‖² + λ/2 (J − 1)²` with `R` the rotation of the
//! polar decomposition `F = RS` and `J = det F`.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::MpmError;

/// Elastomer material. The Lamé parameters are derived once from `E` and `ν`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMaterial", into = "RawMaterial")]
pub struct MaterialParams {
    young_modulus: f64,
    poisson_ratio: f64,
    density: f64,
    lame_mu: f64,
    lame_lambda: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMaterial {
    young_modulus: f64,
    poisson_ratio: f64,
    density: f64,
}

impl TryFrom<RawMaterial> for MaterialParams {
    type Error = MpmError;

    fn try_from(raw: RawMaterial) -> Result<Self, Self::Error> {
        MaterialParams::new(raw.young_modulus, raw.poisson_ratio, raw.density)
    }
}

impl From<MaterialParams> for RawMaterial {
    fn from(m: MaterialParams) -> Self {
        RawMaterial {
            young_modulus: m.young_modulus,
            poisson_ratio: m.poisson_ratio,
            density: m.density,
        }
    }
}

impl Default for MaterialParams {
    /// Silicone elastomer: `E = 1.19e5 Pa`, `ν = 0.43`. The density (1070 kg/m³)
    /// is a typical value for cured silicone and should be calibrated per gel.
    fn default() -> Self {
        MaterialParams::new(1.19e5, 0.43, 1070.0).expect("default material is valid")
    }
}

impl MaterialParams {
    pub fn new(young_modulus: f64, poisson_ratio: f64, density: f64) -> Result<Self, MpmError> {
        if !(young_modulus > 0.0 && young_modulus.is_finite()) {
            return Err(MpmError::InvalidConfig(format!(
                "young_modulus must be positive, got {young_modulus}"
            )));
        }
        if !(0.0..0.5).contains(&poisson_ratio) {
            return Err(MpmError::InvalidConfig(format!(
                "poisson_ratio must lie in [0, 0.5), got {poisson_ratio}"
            )));
        }
        if !(density > 0.0 && density.is_finite()) {
            return Err(MpmError::InvalidConfig(format!(
                "density must be positive, got {density}"
            )));
        }
        let lame_mu = young_modulus / (2.0 * (1.0 + poisson_ratio));
        let lame_lambda =
            young_modulus * poisson_ratio / ((1.0 + poisson_ratio) * (1.0 - 2.0 * poisson_ratio));
        Ok(MaterialParams {
            young_modulus,
            poisson_ratio,
            density,
            lame_mu,
            lame_lambda,
        })
    }

    pub fn young_modulus(&self) -> f64 {
        self.young_modulus
    }

    pub fn poisson_ratio(&self) -> f64 {
        self.poisson_ratio
    }

    pub fn density(&self) -> f64 {
        self.density
    }

    pub fn lame_mu(&self) -> f64 {
        self.lame_mu
    }

    pub fn lame_lambda(&self) -> f64 {
        self.lame_lambda
    }

    /// P-wave speed `sqrt((λ + 2μ)/ρ)`, used by the CFL bound.
    pub fn sound_speed(&self) -> f64 {
        ((self.lame_lambda + 2.0 * self.lame_mu) / self.density).sqrt()
    }
}

/// Rotation factor of the polar decomposition `F = RS`, with `det R = +1` when
/// `det F > 0`.
///
/// Newton iteration `R ← (R + R^{-T}) / 2` from `R = F`; falls back to an SVD when
/// the iteration stalls (near-singular or reflected `F`).
pub fn polar_rotation(f: &Matrix3<f64>) -> Matrix3<f64> {
    if f.determinant() > 0.0 {
        let mut r = *f;
        for _ in 0..40 {
            let Some(inv) = r.try_inverse() else { break };
            let next = (r + inv.transpose()) * 0.5;
            let delta = (next - r).abs().max();
            r = next;
            if delta <= 1e-15 {
                return r;
            }
        }
    }
    polar_rotation_svd(f)
}

fn polar_rotation_svd(f: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = f.svd(true, true);
    let mut u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        // Flip the column paired with the smallest singular value.
        let (min_idx, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
        for row in 0..3 {
            u[(row, min_idx)] = -u[(row, min_idx)];
        }
        r = u * v_t;
    }
    r
}

/// Cofactor matrix `J F^{-T}`, well defined for any `F`.
pub fn cofactor(f: &Matrix3<f64>) -> Matrix3<f64> {
    Matrix3::new(
        f[(1, 1)] * f[(2, 2)] - f[(1, 2)] * f[(2, 1)],
        f[(1, 2)] * f[(2, 0)] - f[(1, 0)] * f[(2, 2)],
        f[(1, 0)] * f[(2, 1)] - f[(1, 1)] * f[(2, 0)],
        f[(0, 2)] * f[(2, 1)] - f[(0, 1)] * f[(2, 2)],
        f[(0, 0)] * f[(2, 2)] - f[(0, 2)] * f[(2, 0)],
        f[(0, 1)] * f[(2, 0)] - f[(0, 0)] * f[(2, 1)],
        f[(0, 1)] * f[(1, 2)] - f[(0, 2)] * f[(1, 1)],
        f[(0, 2)] * f[(1, 0)] - f[(0, 0)] * f[(1, 2)],
        f[(0, 0)] * f[(1, 1)] - f[(0, 1)] * f[(1, 0)],
    )
}

fn check_inversion(f: &Matrix3<f64>) -> Result<f64, MpmError> {
    let j = f.determinant();
    if j > 0.0 && j.is_finite() {
        Ok(j)
    } else {
        Err(MpmError::Inverted {
            particle: None,
            step: None,
            det: j,
        })
    }
}

/// Fixed-corotated energy density `Ψ(F)` in J/m³.
pub fn energy_density(f: &Matrix3<f64>, material: &MaterialParams) -> Result<f64, MpmError> {
    let j = check_inversion(f)?;
    let r = polar_rotation(f);
    Ok(material.lame_mu * (f - r).norm_squared()
        + 0.5 * material.lame_lambda * (j - 1.0) * (j - 1.0))
}

/// First Piola–Kirchhoff stress `P = 2μ(F − R) + λ(J − 1) J F^{-T}`.
pub fn pk1_stress(f: &Matrix3<f64>, material: &MaterialParams) -> Result<Matrix3<f64>, MpmError> {
    let j = check_inversion(f)?;
    let r = polar_rotation(f);
    Ok((f - r) * (2.0 * material.lame_mu) + cofactor(f) * (material.lame_lambda * (j - 1.0)))
}

/// Energy density and stress in one polar decomposition.
pub fn energy_and_stress(
    f: &Matrix3<f64>,
    material: &MaterialParams,
) -> Result<(f64, Matrix3<f64>), MpmError> {
    let j = check_inversion(f)?;
    let r = polar_rotation(f);
    let diff = f - r;
    let psi = material.lame_mu * diff.norm_squared()
        + 0.5 * material.lame_lambda * (j - 1.0) * (j - 1.0);
    let p = diff * (2.0 * material.lame_mu) + cofactor(f) * (material.lame_lambda * (j - 1.0));
    Ok((psi, p))
}
