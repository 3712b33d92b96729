use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::indenter::{Indenter, IndenterState, Pose};
use super::material::MaterialParams;
use super::MpmError;

/// Number of node layers at each grid face that carry a wall boundary condition.
pub const WALL_CELLS: usize = 2;

/// Grid-node mass below which a node is treated as empty.
pub const MASS_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WallKind {
    /// Velocity set to zero.
    Sticky,
    /// Normal velocity removed.
    Slip,
    /// Only the velocity component into the wall is removed.
    Separate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConditions {
    pub x_min: WallKind,
    pub x_max: WallKind,
    pub y_min: WallKind,
    pub y_max: WallKind,
    pub z_min: WallKind,
    pub z_max: WallKind,
}

impl Default for BoundaryConditions {
    /// Sticky floor (bonded gel), separating side walls and ceiling.
    fn default() -> Self {
        BoundaryConditions {
            x_min: WallKind::Separate,
            x_max: WallKind::Separate,
            y_min: WallKind::Separate,
            y_max: WallKind::Separate,
            z_min: WallKind::Sticky,
            z_max: WallKind::Separate,
        }
    }
}

impl BoundaryConditions {
    pub fn wall(&self, axis: usize, upper: bool) -> WallKind {
        match (axis, upper) {
            (0, false) => self.x_min,
            (0, true) => self.x_max,
            (1, false) => self.y_min,
            (1, true) => self.y_max,
            (2, false) => self.z_min,
            _ => self.z_max,
        }
    }
}

/// Prescribed quasi-static press: the indenter starts `start_gap` above the
/// elastomer top face, descends at `speed` until it is `depth` below the face,
/// then holds for `hold_time`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PressSchedule {
    /// In-plane indenter offset from the elastomer center, m.
    #[serde(default)]
    pub offset: [f64; 2],
    #[serde(default)]
    pub start_gap: f64,
    pub depth: f64,
    pub speed: f64,
    #[serde(default)]
    pub hold_time: f64,
    /// Simulated time between output frames, s.
    pub frame_interval: f64,
}

impl Default for PressSchedule {
    fn default() -> Self {
        PressSchedule {
            offset: [0.0, 0.0],
            start_gap: 0.0,
            depth: 0.3e-3,
            speed: 1.0e-3,
            hold_time: 0.05,
            frame_interval: 0.01,
        }
    }
}

impl PressSchedule {
    pub fn travel(&self) -> f64 {
        self.start_gap + self.depth
    }

    pub fn duration(&self) -> f64 {
        let descend = if self.travel() > 0.0 { self.travel() / self.speed } else { 0.0 };
        descend + self.hold_time
    }

    /// Number of output frames including the initial one.
    pub fn frame_count(&self) -> usize {
        (self.duration() / self.frame_interval + 1e-9).floor() as usize + 1
    }
}

/// Full configuration of one MPM press simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Grid node counts per axis.
    pub grid_dims: [usize; 3],
    /// Grid spacing, m.
    pub dx: f64,
    /// Position of node `(0, 0, 0)`, m.
    #[serde(default)]
    pub grid_origin: [f64; 3],
    /// Solver time step, s. `None` selects half the CFL limit.
    #[serde(default)]
    pub dt: Option<f64>,
    /// CFL number `c` in `dt <= c * dx / sound_speed`.
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    /// Particles per axis; the particle count is the product.
    pub particle_lattice: [usize; 3],
    /// Random in-cell jitter as a fraction of the lattice spacing, in `[0, 1)`.
    #[serde(default)]
    pub jitter: f64,
    pub material: MaterialParams,
    pub indenter: Indenter,
    pub press: PressSchedule,
    /// Lower corner of the elastomer box, m.
    pub elastomer_min: [f64; 3],
    /// Elastomer size, m.
    pub elastomer_extents: [f64; 3],
    #[serde(default)]
    pub gravity: [f64; 3],
    /// Grid velocity damping rate, 1/s.
    #[serde(default)]
    pub damping: f64,
    /// Penalty stiffness of the indenter contact energy, J/m⁵ (energy density per
    /// squared penetration).
    #[serde(default = "default_contact_stiffness")]
    pub contact_stiffness: f64,
    /// Distance outside the indenter surface at which grid nodes are already treated
    /// as in contact, m. `None` selects half the vertical particle spacing, the gap
    /// between the top particle layer and the elastomer face.
    #[serde(default)]
    pub contact_skin: Option<f64>,
    #[serde(default)]
    pub boundary: BoundaryConditions,
}

fn default_cfl() -> f64 {
    0.5
}

fn default_contact_stiffness() -> f64 {
    1.0e13
}

impl Default for SimConfig {
    /// Paper-scale coarse setting: 30×30×4 mm gel, 10⁴ particles, 100×100×21 grid.
    fn default() -> Self {
        let dx = 1.0e-3;
        let extents = [30.0e-3, 30.0e-3, 4.0e-3];
        let dims = [100, 100, 21];
        SimConfig {
            grid_dims: dims,
            dx,
            grid_origin: [0.0; 3],
            dt: None,
            cfl: default_cfl(),
            particle_lattice: [50, 50, 4],
            jitter: 0.0,
            material: MaterialParams::default(),
            indenter: Indenter::default(),
            press: PressSchedule::default(),
            elastomer_min: centered_min(dims, dx, extents),
            elastomer_extents: extents,
            gravity: [0.0; 3],
            damping: 0.0,
            contact_stiffness: default_contact_stiffness(),
            contact_skin: None,
            boundary: BoundaryConditions::default(),
        }
    }
}

/// Lower corner that centers the elastomer in x/y and rests it on the floor walls.
pub fn centered_min(dims: [usize; 3], dx: f64, extents: [f64; 3]) -> [f64; 3] {
    let span = |a: usize| (dims[a] - 1) as f64 * dx;
    [
        0.5 * (span(0) - extents[0]),
        0.5 * (span(1) - extents[1]),
        WALL_CELLS as f64 * dx,
    ]
}

impl SimConfig {
    /// Builds a config with a grid sized around the elastomer: `margin` free cells
    /// beside the gel and `headroom` cells above it.
    pub fn with_fitted_grid(
        extents: [f64; 3],
        dx: f64,
        lattice: [usize; 3],
        margin: usize,
        headroom: usize,
    ) -> Self {
        let cells = |l: f64| (l / dx - 1e-9).ceil() as usize;
        let dims = [
            cells(extents[0]) + 2 * (WALL_CELLS + margin) + 1,
            cells(extents[1]) + 2 * (WALL_CELLS + margin) + 1,
            cells(extents[2]) + 2 * WALL_CELLS + headroom + 1,
        ];
        SimConfig {
            grid_dims: dims,
            dx,
            particle_lattice: lattice,
            elastomer_min: centered_min(dims, dx, extents),
            elastomer_extents: extents,
            ..SimConfig::default()
        }
    }

    pub fn particle_count(&self) -> usize {
        self.particle_lattice.iter().product()
    }

    pub fn origin(&self) -> Vector3<f64> {
        Vector3::from(self.grid_origin)
    }

    /// The same gel, indenter and press at another resolution. The new grid spans
    /// the same region, with its floor band ending at the gel bottom.
    pub fn refined(&self, dx: f64, lattice: [usize; 3]) -> SimConfig {
        let origin = self.origin();
        let mut grid_origin = [origin.x, origin.y, self.elastomer_min[2] - WALL_CELLS as f64 * dx];
        let mut dims = [0; 3];
        for a in 0..3 {
            if a < 2 {
                grid_origin[a] = origin[a];
            }
            let top = origin[a] + (self.grid_dims[a] - 1) as f64 * self.dx;
            dims[a] = ((top - grid_origin[a]) / dx - 1e-9).ceil() as usize + 1;
        }
        SimConfig {
            grid_dims: dims,
            dx,
            grid_origin,
            dt: None,
            particle_lattice: lattice,
            ..self.clone()
        }
    }

    /// Lattice spacing per axis.
    pub fn particle_spacing(&self) -> Vector3<f64> {
        Vector3::from_fn(|a, _| self.elastomer_extents[a] / self.particle_lattice[a] as f64)
    }

    pub fn cfl_limit(&self) -> f64 {
        self.cfl * self.dx / self.material.sound_speed()
    }

    /// Configured step, or half the CFL limit.
    pub fn base_dt(&self) -> f64 {
        self.dt.unwrap_or(0.5 * self.cfl_limit())
    }

    /// Solver sub-steps per output frame and the effective step that makes frames
    /// land exactly on multiples of the frame interval.
    pub fn substeps(&self) -> (usize, f64) {
        let interval = self.press.frame_interval;
        let n = (interval / self.base_dt() - 1e-9).ceil().max(1.0) as usize;
        (n, interval / n as f64)
    }

    pub fn contact_skin(&self) -> f64 {
        self.contact_skin.unwrap_or(0.5 * self.particle_spacing().z)
    }

    pub fn top_z(&self) -> f64 {
        self.elastomer_min[2] + self.elastomer_extents[2]
    }

    pub fn elastomer_center(&self) -> Vector3<f64> {
        Vector3::from_fn(|a, _| self.elastomer_min[a] + 0.5 * self.elastomer_extents[a])
    }

    /// Indenter pose and velocity at simulated time `t`.
    pub fn indenter_state(&self, t: f64) -> IndenterState {
        let press = &self.press;
        let center = self.elastomer_center();
        let travel_total = press.travel();
        let moving = press.speed * t < travel_total;
        let travel = (press.speed * t).min(travel_total);
        let z = self.top_z() + self.indenter.shape.bottom_extent() + press.start_gap - travel;
        let pose = Pose {
            position: Vector3::new(center.x + press.offset[0], center.y + press.offset[1], z),
            orientation: self.indenter.orientation(),
        };
        IndenterState {
            pose,
            linear_velocity: if moving {
                Vector3::new(0.0, 0.0, -press.speed)
            } else {
                Vector3::zeros()
            },
            angular_velocity: Vector3::zeros(),
        }
    }

    pub fn validate(&self) -> Result<(), MpmError> {
        let bad = |m: String| Err(MpmError::InvalidConfig(m));
        if self.grid_dims.iter().any(|&d| d < 2 * WALL_CELLS + 4) {
            return bad(format!("grid_dims {:?} too small", self.grid_dims));
        }
        if !(self.dx > 0.0) {
            return bad(format!("dx must be positive, got {}", self.dx));
        }
        if !(self.cfl > 0.0) {
            return bad(format!("cfl must be positive, got {}", self.cfl));
        }
        if self.particle_lattice.contains(&0) {
            return bad("particle_lattice entries must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return bad(format!("jitter must lie in [0, 1), got {}", self.jitter));
        }
        if self.elastomer_extents.iter().any(|&l| !(l > 0.0)) {
            return bad("elastomer_extents must be positive".into());
        }
        if !(self.damping >= 0.0) || !(self.contact_stiffness >= 0.0) || !(self.contact_skin() >= 0.0) {
            return bad("damping, contact_stiffness and contact_skin must be >= 0".into());
        }
        let dt = self.base_dt();
        let limit = self.cfl_limit();
        if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
            return Err(MpmError::CflViolation { dt, limit });
        }
        let p = &self.press;
        if !(p.frame_interval > 0.0) {
            return bad("press.frame_interval must be positive".into());
        }
        if !(p.depth >= 0.0) || !(p.start_gap >= 0.0) || !(p.hold_time >= 0.0) {
            return bad("press depth, start_gap and hold_time must be >= 0".into());
        }
        if p.travel() > 0.0 && !(p.speed > 0.0) {
            return bad("press.speed must be positive".into());
        }
        if p.depth >= self.elastomer_extents[2] {
            return bad("press.depth must be smaller than the elastomer thickness".into());
        }
        self.indenter.validate()?;
        // Every particle must start 1.5 cells inside the grid.
        for a in 0..3 {
            let lo = self.elastomer_min[a];
            let hi = lo + self.elastomer_extents[a];
            let max = (self.grid_dims[a] - 1) as f64 * self.dx;
            if lo < 1.5 * self.dx || hi > max - 1.5 * self.dx {
                return bad(format!(
                    "elastomer spans [{lo}, {hi}] on axis {a}, outside the valid grid interior"
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_has_ten_thousand_particles() {
        let c = SimConfig::default();
        c.validate().unwrap();
        assert_eq!(c.particle_count(), 10_000);
        assert_eq!(c.grid_dims, [100, 100, 21]);
    }

    #[test]
    fn cfl_violation_is_reported_with_bound() {
        let mut c = SimConfig::default();
        c.dt = Some(1.0);
        match c.validate() {
            Err(MpmError::CflViolation { dt, limit }) => {
                assert_eq!(dt, 1.0);
                assert!(limit < 1e-4);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn substeps_land_on_frames() {
        let c = SimConfig::default();
        let (n, dt) = c.substeps();
        assert!(dt <= c.base_dt());
        assert!((n as f64 * dt - c.press.frame_interval).abs() < 1e-15);
    }

    #[test]
    fn indenter_descends_then_holds() {
        let mut c = SimConfig::default();
        c.press.depth = 0.2e-3;
        c.press.speed = 1e-3;
        let top = c.top_z();
        let s0 = c.indenter_state(0.0);
        assert!((s0.pose.position.z - (top + 3e-3)).abs() < 1e-15);
        assert_eq!(s0.linear_velocity.z, -1e-3);
        let s1 = c.indenter_state(1.0);
        assert!((s1.pose.position.z - (top + 3e-3 - 0.2e-3)).abs() < 1e-15);
        assert_eq!(s1.linear_velocity, Vector3::zeros());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v = serde_json::to_value(SimConfig::default()).unwrap();
        v["bogus"] = serde_json::json!(1);
        assert!(serde_json::from_value::<SimConfig>(v).is_err());
    }
}
