//! Depth-map rasterization and its on-disk format.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::optics::{apparent_depth, refract_direction};
use super::surface::SurfaceSet;
use super::RenderError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthModel {
    /// `⟨n_s, x⟩ + (z_s − ⟨n_s, x⟩) / ⟨n_s, d⟩` with the refracted direction `d`.
    #[default]
    Refracted,
    /// `⟨n_s, x⟩`.
    Orthographic,
}

/// Sensor plane, optics and raster. The camera sits on the sensor plane and looks
/// along `normal`; pixel `(u, v)` covers `origin + [u, u+1)·pitch·e1 + [v, v+1)·pitch·e2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub normal: [f64; 3],
    /// Signed offset of the sensor plane along `normal`, m.
    pub offset: f64,
    /// Gel–air interface normal; defaults to `normal`.
    #[serde(default)]
    pub interface_normal: Option<[f64; 3]>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    pub width: usize,
    pub height: usize,
    /// Pixel size, m.
    pub pitch: f64,
    /// Pixel-grid corner, m.
    pub origin: [f64; 3],
    /// Pinhole distance behind the image center, m. `None` is orthographic.
    #[serde(default)]
    pub focal_length: Option<f64>,
    #[serde(default)]
    pub depth_model: DepthModel,
    /// Splat half-width in pixels.
    #[serde(default = "default_splat")]
    pub splat_radius: usize,
}

fn default_eta() -> f64 {
    1.0 / 1.4
}

fn default_splat() -> usize {
    1
}

impl SensorConfig {
    /// Sensor with `width × height` pixels centered on `center` in a plane `z = plane_z`.
    pub fn covering(center: [f64; 2], width: usize, height: usize, pitch: f64, plane_z: f64) -> Self {
        SensorConfig {
            normal: [0.0, 0.0, 1.0],
            offset: plane_z,
            interface_normal: None,
            eta: default_eta(),
            width,
            height,
            pitch,
            origin: [
                center[0] - 0.5 * width as f64 * pitch,
                center[1] - 0.5 * height as f64 * pitch,
                plane_z,
            ],
            focal_length: None,
            depth_model: DepthModel::default(),
            splat_radius: default_splat(),
        }
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        let unit = |v: [f64; 3]| (Vector3::from(v).norm() - 1.0).abs() <= 1e-12;
        if !unit(self.normal) || !self.interface_normal.is_none_or(unit) {
            return Err(RenderError::Config("normals must have unit length".into()));
        }
        if !(self.eta > 0.0) || !(self.pitch > 0.0) || self.width == 0 || self.height == 0 {
            return Err(RenderError::Config("eta, pitch and image size must be positive".into()));
        }
        if self.focal_length.is_some_and(|f| !(f > 0.0)) {
            return Err(RenderError::Config("focal_length must be positive".into()));
        }
        Ok(())
    }

    pub fn normal(&self) -> Vector3<f64> {
        Vector3::from(self.normal)
    }

    pub fn interface_normal(&self) -> Vector3<f64> {
        Vector3::from(self.interface_normal.unwrap_or(self.normal))
    }

    /// In-plane pixel axes.
    pub fn axes(&self) -> (Vector3<f64>, Vector3<f64>) {
        let n = self.normal();
        let seed = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let e1 = (seed - n * n.dot(&seed)).normalize();
        (e1, n.cross(&e1))
    }

    fn camera_center(&self) -> Option<Vector3<f64>> {
        let (e1, e2) = self.axes();
        let pitch = self.pitch;
        self.focal_length.map(|f| {
            Vector3::from(self.origin) + e1 * (0.5 * self.width as f64 * pitch) + e2 * (0.5 * self.height as f64 * pitch)
                - self.normal() * f
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    /// Row-major apparent depths, m. Invalid pixels hold NaN.
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
    pub sensor: SensorConfig,
}

impl DepthMap {
    pub fn at(&self, u: usize, v: usize) -> Option<f64> {
        let i = v * self.width + u;
        self.valid[i].then(|| self.values[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Range of valid values.
    pub fn min_max(&self) -> Option<(f64, f64)> {
        self.values
            .iter()
            .zip(&self.valid)
            .filter(|(_, ok)| **ok)
            .fold(None, |acc, (&v, _)| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
    }
}

/// Why a surface point did not land in the image.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct RenderDiagnostics {
    pub points: usize,
    pub outside: usize,
    pub total_internal_reflection: usize,
    pub grazing: usize,
}

pub fn render_depth_map(surface: &SurfaceSet, sensor: &SensorConfig) -> Result<DepthMap, RenderError> {
    sensor.validate()?;
    if surface.is_empty() {
        return Err(RenderError::EmptySurface);
    }
    let (w, h) = (sensor.width, sensor.height);
    let n_s = sensor.normal();
    let n_0 = sensor.interface_normal();
    let (e1, e2) = sensor.axes();
    let origin = Vector3::from(sensor.origin);
    let camera = sensor.camera_center();
    let mut depth = vec![f64::INFINITY; w * h];
    let mut diag = RenderDiagnostics {
        points: surface.len(),
        ..Default::default()
    };
    let r = sensor.splat_radius as isize;
    for x in &surface.positions {
        let (view, hit) = match camera {
            None => (n_s, *x),
            Some(c) => {
                let ray = x - c;
                let along = n_s.dot(&ray);
                if along.abs() < 1e-12 {
                    diag.grazing += 1;
                    continue;
                }
                let f = sensor.focal_length.unwrap_or(1.0);
                (ray.normalize(), c + ray * (f / along))
            }
        };
        let d = match refract_direction(&view, &n_0, sensor.eta) {
            Ok(d) => d,
            Err(_) => {
                diag.total_internal_reflection += 1;
                continue;
            }
        };
        let value = match sensor.depth_model {
            DepthModel::Orthographic => n_s.dot(x),
            DepthModel::Refracted => match apparent_depth(x, &d, &n_s, sensor.offset) {
                Ok(v) => v,
                Err(_) => {
                    diag.grazing += 1;
                    continue;
                }
            },
        };
        let rel = hit - origin;
        let u = (rel.dot(&e1) / sensor.pitch).floor() as isize;
        let v = (rel.dot(&e2) / sensor.pitch).floor() as isize;
        let mut landed = false;
        for dv in -r..=r {
            for du in -r..=r {
                let (pu, pv) = (u + du, v + dv);
                if pu < 0 || pv < 0 || pu >= w as isize || pv >= h as isize {
                    continue;
                }
                landed = true;
                let i = pv as usize * w + pu as usize;
                depth[i] = depth[i].min(value);
            }
        }
        if !landed {
            diag.outside += 1;
        }
    }
    let mut valid: Vec<bool> = depth.iter().map(|v| v.is_finite()).collect();
    fill_small_holes(&mut depth, &mut valid, w, h);
    if !valid.iter().any(|v| *v) {
        return Err(RenderError::AllInvalid(diag));
    }
    let values = depth
        .into_iter()
        .zip(&valid)
        .map(|(v, ok)| if *ok { v } else { f64::NAN })
        .collect();
    Ok(DepthMap {
        width: w,
        height: h,
        values,
        valid,
        sensor: sensor.clone(),
    })
}

/// Fills 4-connected invalid components of at most two pixels with the median of
/// the valid pixels 8-adjacent to the component.
fn fill_small_holes(depth: &mut [f64], valid: &mut [bool], w: usize, h: usize) {
    let mut seen = vec![false; w * h];
    let neighbors4 = |i: usize| {
        let (u, v) = (i % w, i / w);
        let mut out = Vec::with_capacity(4);
        if u > 0 {
            out.push(i - 1);
        }
        if u + 1 < w {
            out.push(i + 1);
        }
        if v > 0 {
            out.push(i - w);
        }
        if v + 1 < h {
            out.push(i + w);
        }
        out
    };
    let mut fills = Vec::new();
    for start in 0..w * h {
        if valid[start] || seen[start] {
            continue;
        }
        let mut component = vec![start];
        seen[start] = true;
        let mut head = 0;
        while head < component.len() && component.len() <= 2 {
            for n in neighbors4(component[head]) {
                if !valid[n] && !seen[n] {
                    seen[n] = true;
                    component.push(n);
                }
            }
            head += 1;
        }
        if component.len() > 2 {
            // Mark the rest of the large hole so it is not revisited piecemeal.
            while head < component.len() {
                for n in neighbors4(component[head]) {
                    if !valid[n] && !seen[n] {
                        seen[n] = true;
                        component.push(n);
                    }
                }
                head += 1;
            }
            continue;
        }
        let mut ring: Vec<usize> = Vec::new();
        for &i in &component {
            let (u, v) = ((i % w) as isize, (i / w) as isize);
            for dv in -1..=1 {
                for du in -1..=1 {
                    let (pu, pv) = (u + du, v + dv);
                    if pu < 0 || pv < 0 || pu >= w as isize || pv >= h as isize {
                        continue;
                    }
                    let j = pv as usize * w + pu as usize;
                    if valid[j] && !ring.contains(&j) {
                        ring.push(j);
                    }
                }
            }
        }
        if ring.is_empty() {
            continue;
        }
        let mut vals: Vec<f64> = ring.iter().map(|&j| depth[j]).collect();
        vals.sort_by(f64::total_cmp);
        let m = vals.len();
        let median = if m % 2 == 1 {
            vals[m / 2]
        } else {
            0.5 * (vals[m / 2 - 1] + vals[m / 2])
        };
        fills.extend(component.into_iter().map(|i| (i, median)));
    }
    for (i, value) in fills {
        depth[i] = value;
        valid[i] = true;
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    width: usize,
    height: usize,
    pitch: f64,
    sensor: SensorConfig,
    min: f64,
    max: f64,
}

/// Writes `<stem>.depth.f32`, `<stem>.json` and a 16-bit `<stem>.png` preview.
pub fn write_depth_map(dir: &Path, stem: &str, map: &DepthMap) -> Result<(), RenderError> {
    let (min, max) = map.min_max().unwrap_or((0.0, 0.0));
    let mut raw = Vec::with_capacity(4 * map.values.len());
    for v in &map.values {
        raw.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    std::fs::write(dir.join(format!("{stem}.depth.f32")), raw)?;
    let sidecar = Sidecar {
        width: map.width,
        height: map.height,
        pitch: map.sensor.pitch,
        sensor: map.sensor.clone(),
        min,
        max,
    };
    std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_vec_pretty(&sidecar)?)?;
    let range = if max > min { max - min } else { 1.0 };
    let mut pixels = Vec::with_capacity(2 * map.values.len());
    for (v, ok) in map.values.iter().zip(&map.valid) {
        let level = if *ok {
            (((v - min) / range) * 65535.0).round().clamp(0.0, 65535.0) as u16
        } else {
            0
        };
        pixels.extend_from_slice(&level.to_be_bytes());
    }
    let file = BufWriter::new(File::create(dir.join(format!("{stem}.png")))?);
    let mut encoder = png::Encoder::new(file, map.width as u32, map.height as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Sixteen);
    let mut writer = encoder.write_header().map_err(|e| RenderError::Png(e.to_string()))?;
    writer.write_image_data(&pixels).map_err(|e| RenderError::Png(e.to_string()))?;
    writer.finish().map_err(|e| RenderError::Png(e.to_string()))?;
    Ok(())
}

/// Reads a map written by [`write_depth_map`]; NaN marks invalid pixels.
pub fn read_depth_map(dir: &Path, stem: &str) -> Result<DepthMap, RenderError> {
    let sidecar: Sidecar = serde_json::from_slice(&std::fs::read(dir.join(format!("{stem}.json")))?)?;
    let raw = std::fs::read(dir.join(format!("{stem}.depth.f32")))?;
    if raw.len() != 4 * sidecar.width * sidecar.height {
        return Err(RenderError::Format(format!(
            "{stem}.depth.f32 holds {} bytes, expected {}",
            raw.len(),
            4 * sidecar.width * sidecar.height
        )));
    }
    let values: Vec<f64> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let valid = values.iter().map(|v| v.is_finite()).collect();
    Ok(DepthMap {
        width: sidecar.width,
        height: sidecar.height,
        values,
        valid,
        sensor: sidecar.sensor,
    })
}
