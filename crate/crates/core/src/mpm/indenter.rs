//! Rigid indenters described by signed distance functions.

use nalgebra::{Point3, Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MpmError;

/// Signed distance field sampled on a regular grid, trilinearly interpolated.
///
/// Used for arbitrary triangle-mesh indenters. Coordinates are in the indenter's
/// local frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdfGrid {
    pub origin: [f64; 3],
    pub dims: [usize; 3],
    pub spacing: f64,
    /// Row-major with `x` fastest: `values[i + dims[0] * (j + dims[1] * k)]`.
    pub values: Vec<f64>,
}

impl SdfGrid {
    fn validate(&self) -> Result<(), MpmError> {
        let n = self.dims.iter().product::<usize>();
        if self.dims.iter().any(|&d| d < 2) || self.values.len() != n || !(self.spacing > 0.0) {
            return Err(MpmError::InvalidConfig(format!(
                "sdf grid needs >= 2 samples per axis and {n} values, got {}",
                self.values.len()
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(MpmError::InvalidConfig("sdf grid contains non-finite values".into()));
        }
        Ok(())
    }

    fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[i + self.dims[0] * (j + self.dims[1] * k)]
    }

    /// Samples the signed distance to a closed triangle mesh. The sign comes from the
    /// generalized winding number, so the mesh need not be perfectly watertight.
    pub fn from_mesh(
        vertices: &[[f64; 3]],
        triangles: &[[usize; 3]],
        spacing: f64,
        padding: f64,
    ) -> Result<Self, MpmError> {
        if vertices.is_empty() || triangles.is_empty() {
            return Err(MpmError::InvalidConfig("empty indenter mesh".into()));
        }
        if triangles.iter().flatten().any(|&i| i >= vertices.len()) {
            return Err(MpmError::InvalidConfig("mesh triangle references missing vertex".into()));
        }
        let verts: Vec<Vector3<f64>> = vertices.iter().map(|v| Vector3::from(*v)).collect();
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for v in &verts {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        lo -= Vector3::repeat(padding);
        hi += Vector3::repeat(padding);
        let dims = [0, 1, 2].map(|a| ((hi[a] - lo[a]) / spacing).ceil() as usize + 1);
        let mut values = Vec::with_capacity(dims.iter().product());
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let p = lo + Vector3::new(i as f64, j as f64, k as f64) * spacing;
                    let mut best = f64::INFINITY;
                    let mut winding = 0.0;
                    for t in triangles {
                        let (a, b, c) = (verts[t[0]], verts[t[1]], verts[t[2]]);
                        best = best.min((closest_point_on_triangle(&p, &a, &b, &c) - p).norm());
                        winding += solid_angle(&p, &a, &b, &c);
                    }
                    let inside = winding / (4.0 * std::f64::consts::PI) > 0.5;
                    values.push(if inside { -best } else { best });
                }
            }
        }
        Ok(SdfGrid {
            origin: [lo.x, lo.y, lo.z],
            dims,
            spacing,
            values,
        })
    }

    /// Trilinear interpolation; points outside the sampled box get the distance to the
    /// box added to the clamped sample, which keeps the field an upper bound.
    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        let mut idx = [0usize; 3];
        let mut frac = [0.0; 3];
        let mut outside = Vector3::zeros();
        for a in 0..3 {
            let t = (p[a] - self.origin[a]) / self.spacing;
            let max = (self.dims[a] - 1) as f64;
            let tc = t.clamp(0.0, max);
            outside[a] = (t - tc) * self.spacing;
            let i = (tc.floor() as usize).min(self.dims[a] - 2);
            idx[a] = i;
            frac[a] = tc - i as f64;
        }
        let [i, j, k] = idx;
        let [fx, fy, fz] = frac;
        let c00 = self.at(i, j, k) * (1.0 - fx) + self.at(i + 1, j, k) * fx;
        let c10 = self.at(i, j + 1, k) * (1.0 - fx) + self.at(i + 1, j + 1, k) * fx;
        let c01 = self.at(i, j, k + 1) * (1.0 - fx) + self.at(i + 1, j, k + 1) * fx;
        let c11 = self.at(i, j + 1, k + 1) * (1.0 - fx) + self.at(i + 1, j + 1, k + 1) * fx;
        let c0 = c00 * (1.0 - fy) + c10 * fy;
        let c1 = c01 * (1.0 - fy) + c11 * fy;
        c0 * (1.0 - fz) + c1 * fz + outside.norm()
    }

    fn lowest_inside_z(&self) -> Option<f64> {
        for k in 0..self.dims[2] {
            for j in 0..self.dims[1] {
                for i in 0..self.dims[0] {
                    if self.at(i, j, k) <= 0.0 {
                        // Interpolate the zero crossing below this sample.
                        let z = self.origin[2] + k as f64 * self.spacing;
                        if k > 0 {
                            let below = self.at(i, j, k - 1);
                            let here = self.at(i, j, k);
                            return Some(z - self.spacing * (-here) / (below - here));
                        }
                        return Some(z);
                    }
                }
            }
        }
        None
    }
}

fn closest_point_on_triangle(
    p: &Vector3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
    c: &Vector3<f64>,
) -> Vector3<f64> {
    // Ericson, Real-Time Collision Detection, 5.1.5.
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Signed solid angle of triangle `abc` seen from `p` (Van Oosterom–Strackee).
fn solid_angle(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    let (ra, rb, rc) = (a - p, b - p, c - p);
    let (la, lb, lc) = (ra.norm(), rb.norm(), rc.norm());
    let num = ra.dot(&rb.cross(&rc));
    let den = la * lb * lc + ra.dot(&rb) * lc + rb.dot(&rc) * la + rc.dot(&ra) * lb;
    2.0 * num.atan2(den)
}

/// Indenter geometry in its local frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum IndenterShape {
    Sphere { radius: f64 },
    Box { half_extents: [f64; 3] },
    SdfGrid(SdfGrid),
}

impl IndenterShape {
    pub fn signed_distance(&self, local: &Vector3<f64>) -> f64 {
        match self {
            IndenterShape::Sphere { radius } => local.norm() - radius,
            IndenterShape::Box { half_extents } => {
                let q = local.abs() - Vector3::from(*half_extents);
                q.sup(&Vector3::zeros()).norm() + q.max().min(0.0)
            }
            IndenterShape::SdfGrid(grid) => grid.distance(local),
        }
    }

    /// Depth of the lowest surface point below the local origin.
    pub fn bottom_extent(&self) -> f64 {
        match self {
            IndenterShape::Sphere { radius } => *radius,
            IndenterShape::Box { half_extents } => half_extents[2],
            IndenterShape::SdfGrid(grid) => grid.lowest_inside_z().map(|z| -z).unwrap_or(0.0),
        }
    }
}

/// Rigid pose: position plus orientation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn from_position(position: Vector3<f64>) -> Self {
        Pose {
            position,
            orientation: UnitQuaternion::identity(),
        }
    }

    /// `[px, py, pz, qw, qx, qy, qz]`, the on-disk layout.
    pub fn to_array(&self) -> [f64; 7] {
        let q = self.orientation.quaternion();
        [
            self.position.x,
            self.position.y,
            self.position.z,
            q.w,
            q.i,
            q.j,
            q.k,
        ]
    }

    pub fn from_array(a: [f64; 7]) -> Self {
        Pose {
            position: Vector3::new(a[0], a[1], a[2]),
            orientation: UnitQuaternion::from_quaternion(Quaternion::new(a[3], a[4], a[5], a[6])),
        }
    }
}

/// Pose together with the rigid velocity at that instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IndenterState {
    pub pose: Pose,
    pub linear_velocity: Vector3<f64>,
    pub angular_velocity: Vector3<f64>,
}

impl IndenterState {
    pub fn at_rest(pose: Pose) -> Self {
        IndenterState {
            pose,
            linear_velocity: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
        }
    }

    pub fn velocity_at(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.linear_velocity + self.angular_velocity.cross(&(x - self.pose.position))
    }
}

/// Rigid indenter with contact model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Indenter {
    pub shape: IndenterShape,
    /// Coulomb friction coefficient; `None` means sticky (no-slip) contact.
    #[serde(default)]
    pub friction: Option<f64>,
    /// Fixed orientation `[w, x, y, z]` of the indenter during a press.
    #[serde(default = "identity_quat")]
    pub orientation: [f64; 4],
}

fn identity_quat() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

impl Default for Indenter {
    fn default() -> Self {
        Indenter {
            shape: IndenterShape::Sphere { radius: 3.0e-3 },
            friction: None,
            orientation: identity_quat(),
        }
    }
}

impl Indenter {
    pub fn validate(&self) -> Result<(), MpmError> {
        match &self.shape {
            IndenterShape::Sphere { radius } if !(*radius > 0.0) => {
                return Err(MpmError::InvalidConfig("sphere radius must be positive".into()))
            }
            IndenterShape::Box { half_extents } if half_extents.iter().any(|h| !(*h > 0.0)) => {
                return Err(MpmError::InvalidConfig("box half extents must be positive".into()))
            }
            IndenterShape::SdfGrid(grid) => grid.validate()?,
            _ => {}
        }
        if let Some(mu) = self.friction {
            if !(mu >= 0.0 && mu.is_finite()) {
                return Err(MpmError::InvalidConfig(format!("friction must be >= 0, got {mu}")));
            }
        }
        let q = self.orientation;
        let n = (q.iter().map(|v| v * v).sum::<f64>()).sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(MpmError::InvalidConfig("indenter orientation must be non-zero".into()));
        }
        Ok(())
    }

    pub fn orientation(&self) -> UnitQuaternion<f64> {
        let q = self.orientation;
        UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]))
    }

    /// Signed distance from world point `x` to the indenter surface at `pose`
    /// (negative inside).
    pub fn signed_distance(&self, pose: &Pose, x: &Vector3<f64>) -> f64 {
        let local = pose.orientation.inverse_transform_vector(&(x - pose.position));
        self.shape.signed_distance(&local)
    }

    /// Central-difference gradient of the signed distance, normalized.
    pub fn normal(&self, pose: &Pose, x: &Vector3<f64>) -> Vector3<f64> {
        let g = self.sdf_gradient(pose, x);
        let n = g.norm();
        if n > 0.0 {
            g / n
        } else {
            Vector3::z()
        }
    }

    /// Gradient of the signed distance with respect to the world point.
    pub fn sdf_gradient(&self, pose: &Pose, x: &Vector3<f64>) -> Vector3<f64> {
        let local = pose.orientation.inverse_transform_vector(&(x - pose.position));
        let g_local = match &self.shape {
            IndenterShape::Sphere { .. } => {
                let n = local.norm();
                if n > 0.0 {
                    local / n
                } else {
                    Vector3::z()
                }
            }
            shape => {
                let h = match shape {
                    IndenterShape::SdfGrid(grid) => 1e-3 * grid.spacing,
                    _ => 1e-7,
                };
                let mut g = Vector3::zeros();
                for a in 0..3 {
                    let mut e = Vector3::zeros();
                    e[a] = h;
                    g[a] = (shape.signed_distance(&(local + e)) - shape.signed_distance(&(local - e)))
                        / (2.0 * h);
                }
                g
            }
        };
        pose.orientation.transform_vector(&g_local)
    }

    /// Checks `|φ(a) − φ(b)| <= (1 + tol)|a − b|` on random pairs inside `[lo, hi]`.
    /// Returns the worst ratio observed.
    pub fn check_lipschitz(
        &self,
        lo: Point3<f64>,
        hi: Point3<f64>,
        pairs: usize,
        min_separation: f64,
        tol: f64,
        seed: u64,
    ) -> Result<f64, MpmError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pose = Pose::from_position(Vector3::zeros());
        let mut worst: f64 = 0.0;
        let sample = |rng: &mut ChaCha8Rng| {
            Vector3::new(
                rng.gen_range(lo.x..hi.x),
                rng.gen_range(lo.y..hi.y),
                rng.gen_range(lo.z..hi.z),
            )
        };
        let mut tested = 0;
        while tested < pairs {
            let a = sample(&mut rng);
            let b = sample(&mut rng);
            let d = (a - b).norm();
            if d < min_separation {
                continue;
            }
            tested += 1;
            let ratio = (self.signed_distance(&pose, &a) - self.signed_distance(&pose, &b)).abs() / d;
            worst = worst.max(ratio);
        }
        if worst > 1.0 + tol {
            return Err(MpmError::InvalidConfig(format!(
                "indenter sdf is not 1-Lipschitz: ratio {worst}"
            )));
        }
        Ok(worst)
    }
}
