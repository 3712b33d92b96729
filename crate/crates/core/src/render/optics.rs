use nalgebra::Vector3;

use super::RenderError;

/// Snell refraction of the unit direction `d_in` at an interface with unit normal
/// `n0` and index ratio `eta`. The normal is flipped to face the incoming ray.
pub fn refract_direction(d_in: &Vector3<f64>, n0: &Vector3<f64>, eta: f64) -> Result<Vector3<f64>, RenderError> {
    let mut n = *n0;
    let mut c1 = -n.dot(d_in);
    if c1 < 0.0 {
        n = -n;
        c1 = -c1;
    }
    let k = 1.0 - eta * eta * (1.0 - c1 * c1);
    if k < 0.0 {
        return Err(RenderError::TotalInternalReflection);
    }
    let c2 = k.sqrt();
    Ok((d_in * eta + n * (eta * c1 - c2)).normalize())
}

/// Apparent depth `⟨n_s, x⟩ + (z_s − ⟨n_s, x⟩) / ⟨n_s, d⟩`.
pub fn apparent_depth(x: &Vector3<f64>, d: &Vector3<f64>, n_s: &Vector3<f64>, z_s: f64) -> Result<f64, RenderError> {
    let along = n_s.dot(d);
    if along.abs() < 1e-9 {
        return Err(RenderError::GrazingRay);
    }
    let h = n_s.dot(x);
    Ok(h + (z_s - h) / along)
}
