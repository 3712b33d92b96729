//! APIC particle–grid transfers and the explicit grid update.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use super::config::{SimConfig, WallKind, MASS_EPS, WALL_CELLS};
use super::grid::{Grid, Region};
use super::indenter::{Indenter, IndenterState};
use super::kernel::Stencil;
use super::material::{pk1_stress, MaterialParams};
use super::state::FullState;
use super::MpmError;

/// Scatter strategy for particle-to-grid reductions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ExecMode {
    /// Scatter in particle index order; bit-identical across runs and thread counts.
    #[default]
    Deterministic,
    /// Per-thread grid buffers merged in whatever order rayon finishes them.
    Parallel,
}

fn stencils(state: &FullState, grid: &Grid) -> Result<Vec<Stencil>, MpmError> {
    let out: Vec<Option<Stencil>> = state
        .particles
        .par_iter()
        .map(|p| Stencil::new(&p.x, &grid.origin, grid.dx, grid.dims))
        .collect();
    out.into_iter()
        .enumerate()
        .map(|(i, s)| {
            s.ok_or_else(|| MpmError::OutOfDomain {
                particle: i,
                position: state.particles[i].x.into(),
            })
        })
        .collect()
}

fn region_of(stencils: &[Stencil]) -> Region {
    if stencils.is_empty() {
        return Region { lo: [0; 3], dims: [0; 3] };
    }
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    for s in stencils {
        for a in 0..3 {
            lo[a] = lo[a].min(s.base[a]);
            hi[a] = hi[a].max(s.base[a] + 3);
        }
    }
    Region {
        lo,
        dims: [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]],
    }
}

/// Scatters per-node contributions into a buffer laid out over `region`.
fn scatter<T, F>(region: &Region, stencils: &[Stencil], mode: ExecMode, zero: T, contribution: F) -> Vec<T>
where
    T: Copy + Send + Sync + std::ops::AddAssign,
    F: Fn(usize, [usize; 3], f64, &Vector3<f64>) -> T + Sync,
{
    let n = region.len();
    let scatter_one = |buf: &mut [T], p: usize, s: &Stencil| {
        s.for_each_node(|ijk, w, gw| {
            buf[region.local(ijk)] += contribution(p, ijk, w, &gw);
        });
    };
    match mode {
        ExecMode::Deterministic => {
            let mut out = vec![zero; n];
            for (p, s) in stencils.iter().enumerate() {
                scatter_one(&mut out, p, s);
            }
            out
        }
        ExecMode::Parallel => stencils
            .par_iter()
            .enumerate()
            .fold(
                || vec![zero; n],
                |mut buf, (p, s)| {
                    scatter_one(&mut buf, p, s);
                    buf
                },
            )
            .reduce(
                || vec![zero; n],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += y;
                    }
                    a
                },
            ),
    }
}

#[derive(Clone, Copy)]
struct MassMomentum(f64, Vector3<f64>);

impl std::ops::AddAssign for MassMomentum {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        self.0 += o.0;
        self.1 += o.1;
    }
}

fn p2g_with(state: &FullState, grid: &mut Grid, st: &[Stencil], mode: ExecMode) -> Region {
    grid.clear_active();
    let region = region_of(st);
    let origin = grid.origin;
    let dx = grid.dx;
    let acc = scatter(&region, st, mode, MassMomentum(0.0, Vector3::zeros()), |p, ijk, w, _| {
        let part = &state.particles[p];
        let xi = origin + Vector3::new(ijk[0] as f64, ijk[1] as f64, ijk[2] as f64) * dx;
        let wm = w * part.mass;
        MassMomentum(wm, (part.v + part.c * (xi - part.x)) * wm)
    });
    for (local, a) in acc.into_iter().enumerate() {
        let idx = grid.index(region.global(local));
        grid.node_mass[idx] = a.0;
        grid.node_momentum[idx] = a.1;
    }
    grid.active = Some(region);
    region
}

/// Particle-to-grid transfer of mass and APIC momentum.
pub fn p2g(state: &FullState, grid: &mut Grid, mode: ExecMode) -> Result<(), MpmError> {
    let st = stencils(state, grid)?;
    p2g_with(state, grid, &st, mode);
    Ok(())
}

/// Internal elastic force on every node, `f_i = −Σ_p V_p P(F_p) F_pᵀ ∇w_ip`.
pub fn internal_forces(
    state: &FullState,
    grid: &Grid,
    material: &MaterialParams,
    mode: ExecMode,
) -> Result<Vec<Vector3<f64>>, MpmError> {
    let st = stencils(state, grid)?;
    let region = region_of(&st);
    let local = internal_forces_with(state, &region, &st, material, mode)?;
    let mut forces = vec![Vector3::zeros(); grid.node_count()];
    for (l, f) in local.into_iter().enumerate() {
        forces[grid.index(region.global(l))] = f;
    }
    Ok(forces)
}

fn internal_forces_with(
    state: &FullState,
    region: &Region,
    st: &[Stencil],
    material: &MaterialParams,
    mode: ExecMode,
) -> Result<Vec<Vector3<f64>>, MpmError> {
    let affine: Vec<Result<Matrix3<f64>, MpmError>> = state
        .particles
        .par_iter()
        .map(|p| pk1_stress(&p.f, material).map(|stress| -(stress * p.f.transpose()) * p.volume0))
        .collect();
    let mut terms = Vec::with_capacity(affine.len());
    for (i, a) in affine.into_iter().enumerate() {
        terms.push(a.map_err(|e| e.at_particle(i))?);
    }
    Ok(scatter(region, st, mode, Vector3::zeros(), |p, _, _, gw| terms[p] * gw))
}

/// Projects a node velocity against the indenter grown by `skin`. Sticky contact
/// copies the rigid velocity; Coulomb contact removes approaching normal motion and
/// applies friction to the tangential slip.
pub fn project_contact(
    v: Vector3<f64>,
    x: &Vector3<f64>,
    indenter: &Indenter,
    state: &IndenterState,
    skin: f64,
) -> Vector3<f64> {
    if indenter.signed_distance(&state.pose, x) >= skin {
        return v;
    }
    let v_body = state.velocity_at(x);
    match indenter.friction {
        None => v_body,
        Some(mu) => {
            let n = indenter.normal(&state.pose, x);
            let rel = v - v_body;
            let vn = rel.dot(&n);
            if vn >= 0.0 {
                return v;
            }
            let vt = rel - n * vn;
            let vt_norm = vt.norm();
            if vt_norm <= -mu * vn {
                v_body
            } else {
                v_body + vt * (1.0 + mu * vn / vt_norm)
            }
        }
    }
}

fn apply_walls(v: &mut Vector3<f64>, ijk: [usize; 3], dims: [usize; 3], config: &SimConfig) {
    for a in 0..3 {
        let (upper, on_wall) = if ijk[a] < WALL_CELLS {
            (false, true)
        } else if ijk[a] >= dims[a] - WALL_CELLS {
            (true, true)
        } else {
            (false, false)
        };
        if !on_wall {
            continue;
        }
        match config.boundary.wall(a, upper) {
            WallKind::Sticky => *v = Vector3::zeros(),
            WallKind::Slip => v[a] = 0.0,
            WallKind::Separate => {
                if (upper && v[a] > 0.0) || (!upper && v[a] < 0.0) {
                    v[a] = 0.0;
                }
            }
        }
    }
}

fn update_nodes(
    grid: &mut Grid,
    region: &Region,
    forces: &[Vector3<f64>],
    dt: f64,
    indenter: &IndenterState,
    config: &SimConfig,
) {
    let gravity = Vector3::from(config.gravity);
    let damping = 1.0 / (1.0 + config.damping * dt);
    let skin = config.contact_skin();
    let g: &Grid = grid;
    let velocities: Vec<Vector3<f64>> = (0..region.len())
        .into_par_iter()
        .map(|local| {
            let ijk = region.global(local);
            let idx = g.index(ijk);
            let m = g.node_mass[idx];
            if m <= MASS_EPS {
                return Vector3::zeros();
            }
            let mut v = (g.node_momentum[idx] + (forces[local] + gravity * m) * dt) / m;
            v *= damping;
            v = project_contact(v, &g.node_position(ijk), &config.indenter, indenter, skin);
            apply_walls(&mut v, ijk, g.dims, config);
            v
        })
        .collect();
    for (local, v) in velocities.into_iter().enumerate() {
        let idx = grid.index(region.global(local));
        grid.node_velocity[idx] = v;
    }
}

/// Explicit grid update: internal and external forces, contact projection, walls.
pub fn grid_update(
    grid: &mut Grid,
    state: &FullState,
    dt: f64,
    indenter: &IndenterState,
    config: &SimConfig,
    mode: ExecMode,
) -> Result<(), MpmError> {
    let st = stencils(state, grid)?;
    let region = region_of(&st);
    let forces = internal_forces_with(state, &region, &st, &config.material, mode)?;
    update_nodes(grid, &region, &forces, dt, indenter, config);
    Ok(())
}

fn g2p_with(grid: &Grid, state: &mut FullState, st: &[Stencil], dt: f64) -> Result<(), MpmError> {
    let inv_d = 4.0 / (grid.dx * grid.dx);
    let results: Vec<Result<(), f64>> = state
        .particles
        .par_iter_mut()
        .zip(st.par_iter())
        .map(|(p, s)| {
            let mut v = Vector3::zeros();
            let mut b = Matrix3::zeros();
            let mut grad_v = Matrix3::zeros();
            s.for_each_node(|ijk, w, gw| {
                let vi = grid.node_velocity[grid.index(ijk)];
                let xi = grid.node_position(ijk);
                v += vi * w;
                b += (vi * w) * (xi - p.x).transpose();
                grad_v += vi * gw.transpose();
            });
            p.v = v;
            p.c = b * inv_d;
            p.f = (Matrix3::identity() + grad_v * dt) * p.f;
            p.x += v * dt;
            let det = p.f.determinant();
            if det > 0.0 && det.is_finite() {
                Ok(())
            } else {
                Err(det)
            }
        })
        .collect();
    state.time += dt;
    for (i, r) in results.into_iter().enumerate() {
        if let Err(det) = r {
            return Err(MpmError::Inverted {
                particle: Some(i),
                step: None,
                det,
            });
        }
    }
    Ok(())
}

/// Grid-to-particle gather: velocity, APIC matrix, `F ← (I + dt ∇v) F`, advection.
pub fn g2p(grid: &Grid, state: &mut FullState, dt: f64) -> Result<(), MpmError> {
    let st = stencils(state, grid)?;
    g2p_with(grid, state, &st, dt)
}

/// Owns the scratch grid of a simulation and advances states one step at a time.
#[derive(Clone, Debug)]
pub struct Solver {
    pub config: SimConfig,
    pub grid: Grid,
    pub mode: ExecMode,
    pub steps_taken: usize,
}

impl Solver {
    pub fn new(config: SimConfig, mode: ExecMode) -> Result<Self, MpmError> {
        config.validate()?;
        let grid = Grid::for_config(&config);
        Ok(Solver {
            config,
            grid,
            mode,
            steps_taken: 0,
        })
    }

    /// One P2G → grid update → G2P cycle of length `dt`.
    pub fn step(
        &mut self,
        state: &mut FullState,
        dt: f64,
        indenter: &IndenterState,
    ) -> Result<(), MpmError> {
        let step = self.steps_taken;
        let st = stencils(state, &self.grid)?;
        let region = p2g_with(state, &mut self.grid, &st, self.mode);
        let forces = internal_forces_with(state, &region, &st, &self.config.material, self.mode)?;
        update_nodes(&mut self.grid, &region, &forces, dt, indenter, &self.config);
        g2p_with(&self.grid, state, &st, dt).map_err(|e| e.at_step(step))?;
        self.steps_taken += 1;
        Ok(())
    }

    /// Advances exactly one output frame, taking the indenter motion from the press
    /// schedule at the start of every sub-step.
    pub fn advance_frame(&mut self, state: &mut FullState) -> Result<(), MpmError> {
        let (substeps, dt) = self.config.substeps();
        let t0 = state.frame_index as f64 * self.config.press.frame_interval;
        for s in 0..substeps {
            let ind = self.config.indenter_state(t0 + s as f64 * dt);
            self.step(state, dt, &ind)?;
        }
        state.frame_index += 1;
        state.time = state.frame_index as f64 * self.config.press.frame_interval;
        Ok(())
    }
}

/// Single step on a fresh grid; see [`Solver::step`].
pub fn step(
    state: &FullState,
    config: &SimConfig,
    indenter: &IndenterState,
    mode: ExecMode,
) -> Result<FullState, MpmError> {
    let mut solver = Solver::new(config.clone(), mode)?;
    let mut next = state.clone();
    let dt = config.base_dt();
    solver.step(&mut next, dt, indenter)?;
    Ok(next)
}
