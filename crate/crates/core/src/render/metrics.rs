//! Point-set and image comparison metrics.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;

use super::depth::DepthMap;
use super::spatial::PointIndex;
use super::RenderError;

/// Symmetric Chamfer-L2: mean squared nearest-neighbor distance from `a` to `b`
/// plus the same from `b` to `a`, in squared input units.
pub fn chamfer_l2(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> Result<f64, RenderError> {
    if a.is_empty() || b.is_empty() {
        return Err(RenderError::EmptyPointSet);
    }
    Ok(one_sided(a, b) + one_sided(b, a))
}

/// [`chamfer_l2`] of point sets given in meters, reported in mm².
pub fn chamfer_l2_mm(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> Result<f64, RenderError> {
    Ok(chamfer_l2(a, b)? * 1e6)
}

fn one_sided(from: &[Vector3<f64>], to: &[Vector3<f64>]) -> f64 {
    let index = PointIndex::new(to);
    let d: Vec<f64> = from.par_iter().map(|p| index.nearest(p).1).collect();
    d.iter().sum::<f64>() / from.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ImageMetrics {
    pub ssim: f64,
    pub mae: f64,
    pub psnr: f64,
}

/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 99.0;

pub const SSIM_RADIUS: usize = 5;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

/// SSIM, MAE and PSNR over pixels valid in both maps, after mapping both to
/// `[0, 1]` with their shared min/max.
pub fn image_metrics(pred: &DepthMap, reference: &DepthMap) -> Result<ImageMetrics, RenderError> {
    if pred.width != reference.width || pred.height != reference.height {
        return Err(RenderError::DimensionMismatch {
            pred: (pred.width, pred.height),
            reference: (reference.width, reference.height),
        });
    }
    let mask: Vec<bool> = pred.valid.iter().zip(&reference.valid).map(|(a, b)| *a && *b).collect();
    let count = mask.iter().filter(|m| **m).count();
    if count == 0 {
        return Err(RenderError::NoOverlap);
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
        for v in [pred.values[i], reference.values[i]] {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let range = if hi > lo { hi - lo } else { 1.0 };
    let norm = |m: &DepthMap| -> Vec<f64> {
        m.values
            .iter()
            .zip(&mask)
            .map(|(v, ok)| if *ok { (v - lo) / range } else { 0.0 })
            .collect()
    };
    let x = norm(pred);
    let y = norm(reference);
    normalized_metrics(&x, &y, &mask, pred.width, pred.height)
}

/// SSIM, MAE and PSNR of two images already in `[0, 1]`, over `mask`.
pub fn normalized_metrics(x: &[f64], y: &[f64], mask: &[bool], w: usize, h: usize) -> Result<ImageMetrics, RenderError> {
    if x.len() != w * h || y.len() != w * h || mask.len() != w * h {
        return Err(RenderError::DimensionMismatch {
            pred: (x.len(), 1),
            reference: (y.len(), 1),
        });
    }
    let count = mask.iter().filter(|m| **m).count();
    if count == 0 {
        return Err(RenderError::NoOverlap);
    }
    let mut abs = 0.0;
    let mut sq = 0.0;
    for i in (0..mask.len()).filter(|&i| mask[i]) {
        let d = x[i] - y[i];
        abs += d.abs();
        sq += d * d;
    }
    let mae = abs / count as f64;
    let mse = sq / count as f64;
    let psnr = if mse == 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
    };
    let ssim = masked_ssim(x, y, mask, w, h);
    Ok(ImageMetrics { ssim, mae, psnr })
}

/// Mean SSIM over masked pixels with an 11×11 Gaussian window truncated to the
/// mask and renormalized.
pub fn masked_ssim(x: &[f64], y: &[f64], mask: &[bool], w: usize, h: usize) -> f64 {
    let r = SSIM_RADIUS as isize;
    let kernel: Vec<f64> = (-r..=r)
        .map(|d| (-(d * d) as f64 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let (c1, c2) = (K1 * K1, K2 * K2);
    let centers: Vec<usize> = (0..w * h).filter(|&i| mask[i]).collect();
    let values: Vec<f64> = centers
        .par_iter()
        .map(|&i| {
            let (u, v) = ((i % w) as isize, (i / w) as isize);
            let (mut sw, mut mx, mut my) = (0.0, 0.0, 0.0);
            let (mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0);
            for dv in -r..=r {
                let pv = v + dv;
                if pv < 0 || pv >= h as isize {
                    continue;
                }
                for du in -r..=r {
                    let pu = u + du;
                    if pu < 0 || pu >= w as isize {
                        continue;
                    }
                    let j = pv as usize * w + pu as usize;
                    if !mask[j] {
                        continue;
                    }
                    let k = kernel[(du + r) as usize] * kernel[(dv + r) as usize];
                    sw += k;
                    mx += k * x[j];
                    my += k * y[j];
                    xx += k * x[j] * x[j];
                    yy += k * y[j] * y[j];
                    xy += k * x[j] * y[j];
                }
            }
            let (mx, my) = (mx / sw, my / sw);
            let vx = xx / sw - mx * mx;
            let vy = yy / sw - my * my;
            let cov = xy / sw - mx * my;
            ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
        })
        .collect();
    values.iter().sum::<f64>() / values.len() as f64
}
