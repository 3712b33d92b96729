use std::path::Path;
use std::time::Instant;

use nalgebra::{DVector, Matrix3, Vector3};
use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::lbfgs::{lbfgs_minimize, LbfgsSettings};
use super::objective::{default_energy_scale, inertial_target, latent_objective, objective_or_infinity, LatentObjectiveContext};
use super::LatentError;
use crate::mpm::io::write_trajectory;
use crate::mpm::{ExecMode, FullState, GridResampler, ParticleState, SimConfig, Solver, Trajectory};
use crate::rom::{Autoencoder, Checkpoint, DeformationFields, NormStats};
use crate::train::pairs::coarse_to_fine;

/// Where each frame's optimization starts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmStart {
    /// The previous frame's latent code.
    #[default]
    Previous,
    /// The encoding of the current coarse state transferred to the fine particles.
    CoarseEncode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutSettings {
    #[serde(default)]
    pub lbfgs: LbfgsSettings,
    #[serde(default)]
    pub warm_start: WarmStart,
    /// Iteration budget for frame 0, which relaxes `encode(rest)` onto a minimum
    /// of the potential alone.
    #[serde(default = "default_settle")]
    pub settle_iters: usize,
    /// Energy unit of the objective, J; defaults to [`default_energy_scale`].
    #[serde(default)]
    pub energy_scale: Option<f64>,
}

fn default_settle() -> usize {
    200
}

impl Default for RolloutSettings {
    fn default() -> Self {
        RolloutSettings {
            lbfgs: LbfgsSettings::default(),
            warm_start: WarmStart::Previous,
            settle_iters: default_settle(),
            energy_scale: None,
        }
    }
}

/// The fine gel the decoder was trained on and the coarse solver driving it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutSetup {
    pub fine: SimConfig,
    pub coarse: SimConfig,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub frame: usize,
    pub time: f64,
    pub warm_objective: f64,
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub stalled: bool,
    pub wall_ms: f64,
    pub z: Vec<f64>,
}

pub struct RolloutOutput {
    /// Reconstructed fine frames; velocities are finite differences.
    pub fine: Trajectory,
    pub coarse: Trajectory,
    pub reports: Vec<FrameReport>,
}

struct Frame {
    z: DVector<f64>,
    raw: Vec<f64>,
    x: Vec<Vector3<f64>>,
    f: Vec<Matrix3<f64>>,
}

/// Runs the reduced model for `frames` output frames (default: the whole press).
/// With `record_time` false the per-frame wall times are reported as zero.
pub fn rollout(
    setup: &RolloutSetup,
    checkpoint: &Checkpoint,
    settings: &RolloutSettings,
    frames: Option<usize>,
    mode: ExecMode,
    record_time: bool,
) -> Result<RolloutOutput, LatentError> {
    let (fine_cfg, coarse_cfg) = (&setup.fine, &setup.coarse);
    fine_cfg.validate()?;
    coarse_cfg.validate()?;
    settings.lbfgs.validate()?;
    let dt = fine_cfg.press.frame_interval;
    if coarse_cfg.press != fine_cfg.press || coarse_cfg.indenter != fine_cfg.indenter {
        return Err(LatentError::Config("fine and coarse configs must share press and indenter".into()));
    }
    let model: Autoencoder<f64> = checkpoint.model.cast();
    let stats = &checkpoint.stats;
    let rest_state = FullState::seed(fine_cfg, setup.seed);
    let rest = rest_state.positions();
    let mass: Vec<f64> = rest_state.particles.iter().map(|p| p.mass).collect();
    let volume0: Vec<f64> = rest_state.particles.iter().map(|p| p.volume0).collect();
    let n = rest.len();
    let mut coarse_state = FullState::seed(coarse_cfg, setup.seed);
    let coarse_rest = coarse_state.positions();
    let mut solver = Solver::new(coarse_cfg.clone(), mode)?;
    let transfer = match settings.warm_start {
        WarmStart::CoarseEncode => Some(coarse_to_fine(coarse_cfg, &coarse_rest, &rest).map_err(|e| LatentError::Config(e.to_string()))?),
        WarmStart::Previous => None,
    };
    let energy_scale = settings.energy_scale.unwrap_or_else(|| default_energy_scale(fine_cfg));
    let gravity = Vector3::from(fine_cfg.gravity);
    let count = frames.unwrap_or_else(|| fine_cfg.press.frame_count());
    let context = |q_inertial: Vec<f64>, dt: f64, pose| LatentObjectiveContext {
        q_inertial,
        mass: &mass,
        volume0: &volume0,
        rest: &rest,
        dt,
        config: fine_cfg,
        pose,
        model: &model,
        stats,
        energy_scale,
    };

    let rest_raw = DeformationFields::at_rest(n).flatten();
    let ctx0 = context(rest_raw.clone(), f64::INFINITY, coarse_cfg.indenter_state(0.0).pose);
    ctx0.validate()?;
    let mut reports = Vec::with_capacity(count);
    let mut out_frames = Vec::with_capacity(count);
    let mut poses = Vec::with_capacity(count);
    let mut coarse_frames = vec![coarse_state.clone()];
    let start = Instant::now();
    let z_init = encode(&model, stats, &rest_raw)?;
    let settle = LbfgsSettings {
        max_iters: settings.settle_iters.max(1),
        ..settings.lbfgs
    };
    let mut prev = solve(&z_init, &ctx0, &settle, 0, 0.0, record_time.then_some(start), &mut reports)?;
    let mut before: Option<Vec<Vector3<f64>>> = None;
    poses.push(ctx0.pose);
    out_frames.push(emit(&prev, &rest_state, None, dt, 0));

    for k in 1..count {
        let t0 = Instant::now();
        solver.advance_frame(&mut coarse_state)?;
        coarse_frames.push(coarse_state.clone());
        let time = k as f64 * dt;
        let pose = coarse_cfg.indenter_state(time).pose;
        let v: Vec<Vector3<f64>> = match &before {
            Some(b) => prev.x.iter().zip(b).map(|(x, y)| (x - y) / dt).collect(),
            None => vec![Vector3::zeros(); n],
        };
        let q_in = inertial_target(&prev.raw, &v, dt, &gravity)?;
        let ctx = context(q_in, dt, pose);
        let z0 = match &transfer {
            Some(tr) => encode(&model, stats, &coarse_fields(tr, &coarse_state, &coarse_rest))?,
            None => prev.z.clone(),
        };
        let next = solve(&z0, &ctx, &settings.lbfgs, k, time, record_time.then_some(t0), &mut reports)?;
        poses.push(pose);
        out_frames.push(emit(&next, &rest_state, Some(&prev.x), dt, k));
        before = Some(std::mem::replace(&mut prev, next).x);
    }
    let coarse_poses = (0..coarse_frames.len())
        .map(|k| coarse_cfg.indenter_state(k as f64 * dt).pose)
        .collect();
    Ok(RolloutOutput {
        fine: Trajectory {
            frames: out_frames,
            poses,
            frame_interval: dt,
            dx: fine_cfg.dx,
            grid_dims: fine_cfg.grid_dims,
            steps: solver.steps_taken,
        },
        coarse: Trajectory {
            frames: coarse_frames,
            poses: coarse_poses,
            frame_interval: dt,
            dx: coarse_cfg.dx,
            grid_dims: coarse_cfg.grid_dims,
            steps: solver.steps_taken,
        },
        reports,
    })
}

fn encode(model: &Autoencoder<f64>, stats: &NormStats, raw: &[f64]) -> Result<DVector<f64>, LatentError> {
    let z = model.encode(stats.normalize::<f64>(raw).view())?;
    Ok(DVector::from_iterator(z.len(), z.iter().copied()))
}

/// Coarse displacement and `F` carried to the fine rest particles.
fn coarse_fields(transfer: &GridResampler, state: &FullState, coarse_rest: &[Vector3<f64>]) -> Vec<f64> {
    let u: Vec<Vector3<f64>> = state.particles.iter().zip(coarse_rest).map(|(p, r)| p.x - r).collect();
    let f: Vec<Matrix3<f64>> = state.particles.iter().map(|p| p.f).collect();
    DeformationFields {
        displacement: transfer.apply_vectors(&u),
        f: transfer.apply_matrices(&f),
    }
    .flatten()
}

fn solve(
    z0: &DVector<f64>,
    ctx: &LatentObjectiveContext<'_>,
    settings: &LbfgsSettings,
    frame: usize,
    time: f64,
    clock: Option<Instant>,
    reports: &mut Vec<FrameReport>,
) -> Result<Frame, LatentError> {
    let result = lbfgs_minimize(z0, settings, |z| objective_or_infinity(z, ctx))?;
    if result.stalled {
        log::warn!("frame {frame}: line search stalled after {} iterations", result.iterations);
    }
    let eval = latent_objective(&result.z, ctx)?;
    let raw = {
        let zl = Array1::from_iter(result.z.iter().copied());
        ctx.stats.denormalize(ctx.model.decode(zl.view())?.view())
    };
    reports.push(FrameReport {
        frame,
        time,
        warm_objective: result.trace[0],
        objective: result.value,
        grad_norm: result.grad_norm,
        iterations: result.iterations,
        evaluations: result.evaluations,
        stalled: result.stalled,
        wall_ms: clock.map_or(0.0, |c| c.elapsed().as_secs_f64() * 1e3),
        z: result.z.iter().copied().collect(),
    });
    Ok(Frame {
        z: result.z,
        raw,
        x: eval.positions,
        f: eval.f,
    })
}

fn emit(frame: &Frame, rest: &FullState, prev_x: Option<&[Vector3<f64>]>, dt: f64, index: usize) -> FullState {
    let particles = rest
        .particles
        .iter()
        .enumerate()
        .map(|(p, r)| ParticleState {
            x: frame.x[p],
            v: prev_x.map_or(Vector3::zeros(), |px| (frame.x[p] - px[p]) / dt),
            f: frame.f[p],
            c: Matrix3::zeros(),
            mass: r.mass,
            volume0: r.volume0,
        })
        .collect();
    FullState {
        particles,
        time: index as f64 * dt,
        frame_index: index,
    }
}

/// Writes `rollout.traj`, `coarse.traj` and the per-frame report `rollout.json`.
pub fn write_rollout(dir: &Path, output: &RolloutOutput) -> Result<(), LatentError> {
    std::fs::create_dir_all(dir)?;
    write_trajectory(&dir.join("rollout.traj"), &output.fine)?;
    write_trajectory(&dir.join("coarse.traj"), &output.coarse)?;
    std::fs::write(dir.join("rollout.json"), serde_json::to_vec_pretty(&output.reports)?)?;
    Ok(())
}
