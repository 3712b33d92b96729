use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use nalgebra::Vector3;
use serde::Serialize;

use super::config::{existing, load, AblationConfig, DepthEval, TrajectoryEval};
use super::config::{EvalConfig, GenDataConfig, RenderConfig, RolloutConfig, SimulateConfig, TrainRunConfig};
use super::memory::{peak_rss_bytes, reset_peak_rss};
use super::{CliError, Common};
use crate::latent::{rollout as run_rollout, write_rollout};
use crate::mpm::io::{read_trajectory, write_trajectory};
use crate::mpm::{run_press_frames, ExecMode, FullState, SimConfig};
use crate::render::{chamfer_l2_mm, image_metrics, read_depth_map, render_depth_map, write_depth_map, SurfaceSelector};
use crate::rom::Checkpoint;
use crate::train::{generate_dataset, train as run_train, Dataset};

fn mode(c: &Common) -> ExecMode {
    if c.deterministic {
        ExecMode::Deterministic
    } else {
        ExecMode::Parallel
    }
}

fn seconds(c: &Common, start: Instant) -> f64 {
    if c.deterministic {
        0.0
    } else {
        start.elapsed().as_secs_f64()
    }
}

fn prepare_out(c: &Common) -> Result<(), CliError> {
    std::fs::create_dir_all(&c.out).map_err(|e| CliError::io(c.out.display(), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(|e| CliError::io(path.display(), e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path.display(), e))
}

fn selector(sim: &SimConfig, seed: u64, particles: usize) -> Result<SurfaceSelector, CliError> {
    let rest = FullState::seed(sim, seed).positions();
    if rest.len() != particles {
        return Err(CliError::Config(format!(
            "sim config seeds {} particles but the trajectory holds {particles}",
            rest.len()
        )));
    }
    Ok(SurfaceSelector::new(&rest, sim.top_z(), sim.particle_spacing().z)?)
}

#[derive(Serialize)]
struct SimulateSummary {
    particles: usize,
    frames: usize,
    steps: usize,
    wall_time_s: f64,
    max_displacement: f64,
}

pub(super) fn simulate(c: &Common, frames: Option<usize>) -> Result<(), CliError> {
    let mut cfg: SimulateConfig = load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    cfg.sim.validate()?;
    prepare_out(c)?;
    let start = Instant::now();
    let traj = run_press_frames(&cfg.sim, cfg.seed, mode(c), frames.unwrap_or(usize::MAX))?;
    let wall = seconds(c, start);
    write_trajectory(&c.out.join("trajectory.traj"), &traj)?;
    let summary = SimulateSummary {
        particles: cfg.sim.particle_count(),
        frames: traj.len(),
        steps: traj.steps,
        wall_time_s: wall,
        max_displacement: traj.max_displacement(),
    };
    log::info!("simulated {} frames in {} steps", summary.frames, summary.steps);
    write_json(&c.out.join("summary.json"), &summary)
}

pub(super) fn gen_data(c: &Common) -> Result<(), CliError> {
    let mut cfg: GenDataConfig = load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.dataset.seed = seed;
    }
    cfg.dataset.validate()?;
    prepare_out(c)?;
    let summary = generate_dataset(&cfg.dataset, &c.out, mode(c))?;
    log::info!("{} pairs from {} scenarios", summary.pairs, summary.scenarios.len());
    write_json(&c.out.join("summary.json"), &summary)
}

#[derive(Serialize)]
struct TrainSummary {
    epochs: usize,
    best_epoch: usize,
    best_val: f64,
    val_relative_error: f64,
    checkpoint: String,
}

pub(super) fn train(c: &Common) -> Result<(), CliError> {
    let mut cfg: TrainRunConfig = load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.train.seed = seed;
    }
    cfg.train.validate()?;
    let dir = existing(&c.config, &cfg.dataset, "dataset")?;
    let dataset = Dataset::load(&dir)?;
    prepare_out(c)?;
    let report = run_train(&dataset, &cfg.train, &c.out, !c.deterministic)?;
    let summary = TrainSummary {
        epochs: report.history.len(),
        best_epoch: report.best_epoch,
        best_val: report.best_val,
        val_relative_error: report.val_relative_error,
        checkpoint: "model.romw".into(),
    };
    write_json(&c.out.join("train_summary.json"), &summary)
}

pub(super) fn rollout(c: &Common, frames: Option<usize>) -> Result<(), CliError> {
    let mut cfg: RolloutConfig = load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.setup.seed = seed;
    }
    let checkpoint = Checkpoint::load(&existing(&c.config, &cfg.checkpoint, "checkpoint")?)?;
    prepare_out(c)?;
    let output = run_rollout(&cfg.setup, &checkpoint, &cfg.settings, frames, mode(c), !c.deterministic)?;
    let stalled = output.reports.iter().filter(|r| r.stalled).count();
    if stalled > 0 {
        log::warn!("{stalled} frames stalled in the line search");
    }
    write_rollout(&c.out, &output)?;
    Ok(())
}

#[derive(Serialize)]
struct RenderedFrame {
    frame: usize,
    valid_pixels: usize,
}

pub(super) fn render(c: &Common, frames: Option<usize>) -> Result<(), CliError> {
    let mut cfg: RenderConfig = load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    cfg.sensor.validate()?;
    let traj = read_trajectory(&existing(&c.config, &cfg.trajectory, "trajectory")?)?;
    prepare_out(c)?;
    let count = frames.unwrap_or(usize::MAX).min(traj.frames.len());
    let mut rendered = Vec::with_capacity(count);
    if count > 0 {
        let sel = selector(&cfg.sim, cfg.seed, traj.particle_count())?;
        for (k, frame) in traj.frames.iter().take(count).enumerate() {
            let map = render_depth_map(&sel.extract(&frame.x), &cfg.sensor)?;
            write_depth_map(&c.out, &format!("frame_{k:04}"), &map)?;
            rendered.push(RenderedFrame {
                frame: k,
                valid_pixels: map.valid_count(),
            });
        }
    }
    write_json(&c.out.join("render.json"), &rendered)
}

pub(super) fn eval(c: &Common, ablate: bool) -> Result<(), CliError> {
    let cfg: EvalConfig = load(&c.config)?;
    prepare_out(c)?;
    if ablate {
        let ablation = cfg
            .ablation
            .as_ref()
            .ok_or_else(|| CliError::Config("--ablate needs an `ablation` block".into()))?;
        return eval_ablation(c, ablation);
    }
    if cfg.trajectories.is_none() && cfg.depth.is_none() {
        return Err(CliError::Config("eval needs a `trajectories` or `depth` block".into()));
    }
    if let Some(t) = &cfg.trajectories {
        eval_trajectories(c, t)?;
    }
    if let Some(d) = &cfg.depth {
        eval_depth(c, d)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct MeanSummary {
    frames: usize,
    mean: f64,
}

fn eval_trajectories(c: &Common, t: &TrajectoryEval) -> Result<(), CliError> {
    let reference = read_trajectory(&existing(&c.config, &t.reference, "reference trajectory")?)?;
    let prediction = read_trajectory(&existing(&c.config, &t.prediction, "predicted trajectory")?)?;
    if reference.particle_count() != prediction.particle_count() {
        return Err(CliError::Config(format!(
            "trajectories hold {} and {} particles",
            reference.particle_count(),
            prediction.particle_count()
        )));
    }
    let n = reference.frames.len().min(prediction.frames.len());
    let mut csv = String::from("frame,chamfer_mm2\n");
    let mut total = 0.0;
    if n > 0 {
        let sel = selector(&t.sim, t.seed, reference.particle_count())?;
        for k in 0..n {
            let d = chamfer_l2_mm(&sel.extract(&prediction.frames[k].x).positions, &sel.extract(&reference.frames[k].x).positions)?;
            total += d;
            let _ = writeln!(csv, "{k},{d:.9e}");
        }
    }
    write_text(&c.out.join("chamfer.csv"), &csv)?;
    let mean = if n > 0 { total / n as f64 } else { 0.0 };
    write_json(&c.out.join("chamfer_summary.json"), &MeanSummary { frames: n, mean })
}

/// Stems of the `*.depth.f32` maps in `dir`, sorted.
fn depth_stems(dir: &Path) -> Result<Vec<String>, CliError> {
    let mut stems = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| CliError::io(dir.display(), e))? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix(".depth.f32") {
            stems.push(stem.to_string());
        }
    }
    stems.sort();
    Ok(stems)
}

#[derive(Serialize)]
struct ImageSummary {
    frames: usize,
    ssim: f64,
    mae: f64,
    psnr: f64,
}

fn eval_depth(c: &Common, d: &DepthEval) -> Result<(), CliError> {
    let ref_dir = existing(&c.config, &d.reference, "reference depth directory")?;
    let pred_dir = existing(&c.config, &d.prediction, "predicted depth directory")?;
    let stems = depth_stems(&ref_dir)?;
    if stems.is_empty() {
        return Err(CliError::Io(format!("no depth maps in {}", ref_dir.display())));
    }
    let mut csv = String::from("frame,ssim,mae,psnr\n");
    let mut sum = [0.0; 3];
    for stem in &stems {
        let reference = read_depth_map(&ref_dir, stem)?;
        let prediction = read_depth_map(&pred_dir, stem)?;
        let m = image_metrics(&prediction, &reference)?;
        sum[0] += m.ssim;
        sum[1] += m.mae;
        sum[2] += m.psnr;
        let _ = writeln!(csv, "{stem},{:.9e},{:.9e},{:.9e}", m.ssim, m.mae, m.psnr);
    }
    write_text(&c.out.join("image_metrics.csv"), &csv)?;
    let n = stems.len() as f64;
    write_json(
        &c.out.join("image_summary.json"),
        &ImageSummary {
            frames: stems.len(),
            ssim: sum[0] / n,
            mae: sum[1] / n,
            psnr: sum[2] / n,
        },
    )
}

#[derive(Clone, Debug, Serialize)]
struct AblationRow {
    variant: String,
    time_s: f64,
    peak_rss_mb: f64,
    chamfer_mm2: f64,
    frames: usize,
}

fn eval_ablation(c: &Common, a: &AblationConfig) -> Result<(), CliError> {
    if a.variants.is_empty() {
        return Err(CliError::Config("ablation lists no variants".into()));
    }
    let mut setup = a.setup.clone();
    if let Some(seed) = c.seed {
        setup.seed = seed;
    }
    let reference = read_trajectory(&existing(&c.config, &a.reference, "reference trajectory")?)?;
    let sel = selector(&setup.fine, setup.seed, reference.particle_count())?;
    let truth: Vec<Vec<Vector3<f64>>> = reference.frames.iter().map(|f| sel.extract(&f.x).positions).collect();
    let mut rows = Vec::with_capacity(a.variants.len());
    for variant in &a.variants {
        let checkpoint = Checkpoint::load(&existing(&c.config, &variant.checkpoint, "checkpoint")?)?;
        reset_peak_rss();
        let start = Instant::now();
        let output = run_rollout(&setup, &checkpoint, &a.settings, a.frames, mode(c), !c.deterministic)?;
        let time_s = seconds(c, start);
        let peak = if c.deterministic { 0 } else { peak_rss_bytes().unwrap_or(0) };
        let n = output.fine.frames.len().min(truth.len());
        let mut total = 0.0;
        for k in 0..n {
            total += chamfer_l2_mm(&sel.extract(&output.fine.frames[k].positions()).positions, &truth[k])?;
        }
        let row = AblationRow {
            variant: variant.name.clone(),
            time_s,
            peak_rss_mb: peak as f64 / (1024.0 * 1024.0),
            chamfer_mm2: if n > 0 { total / n as f64 } else { 0.0 },
            frames: n,
        };
        log::info!("{}: chamfer {:.4e} mm² over {} frames", row.variant, row.chamfer_mm2, n);
        rows.push(row);
    }
    let mut csv = String::from("variant,time_s,peak_rss_mb,chamfer_mm2,frames\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{:.3},{:.1},{:.9e},{}", r.variant, r.time_s, r.peak_rss_mb, r.chamfer_mm2, r.frames);
    }
    print!("{csv}");
    write_text(&c.out.join("ablation.csv"), &csv)?;
    write_json(&c.out.join("ablation.json"), &rows)
}
