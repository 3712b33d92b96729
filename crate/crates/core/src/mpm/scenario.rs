use super::config::SimConfig;
use super::indenter::Pose;
use super::state::FullState;
use super::transfer::{ExecMode, Solver};
use super::MpmError;

/// Output frames of one press together with the indenter pose at each frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub frames: Vec<FullState>,
    pub poses: Vec<Pose>,
    pub frame_interval: f64,
    pub dx: f64,
    pub grid_dims: [usize; 3],
    /// Solver steps taken to produce the frames.
    pub steps: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn particle_count(&self) -> usize {
        self.frames.first().map_or(0, FullState::len)
    }

    /// Largest particle displacement from frame 0 over all frames.
    pub fn max_displacement(&self) -> f64 {
        let Some(rest) = self.frames.first() else {
            return 0.0;
        };
        self.frames
            .iter()
            .flat_map(|f| {
                f.particles
                    .iter()
                    .zip(&rest.particles)
                    .map(|(p, q)| (p.x - q.x).norm())
            })
            .fold(0.0, f64::max)
    }
}

/// Runs the prescribed press from the seeded rest state, emitting one frame per
/// `press.frame_interval` starting with the rest state.
pub fn run_press_scenario(config: &SimConfig, seed: u64, mode: ExecMode) -> Result<Trajectory, MpmError> {
    run_press_scenario_with(config, seed, mode, |_, _| {})
}

/// As [`run_press_scenario`], calling `on_frame(index, state)` after every frame.
pub fn run_press_scenario_with<F>(
    config: &SimConfig,
    seed: u64,
    mode: ExecMode,
    mut on_frame: F,
) -> Result<Trajectory, MpmError>
where
    F: FnMut(usize, &FullState),
{
    run_press(config, seed, mode, config.press.frame_count(), &mut on_frame)
}

/// The first `frames` output frames of the press (fewer if the press is shorter).
/// `frames = 0` runs nothing and returns an empty trajectory.
pub fn run_press_frames(config: &SimConfig, seed: u64, mode: ExecMode, frames: usize) -> Result<Trajectory, MpmError> {
    run_press(config, seed, mode, frames.min(config.press.frame_count()), &mut |_, _| {})
}

fn run_press(
    config: &SimConfig,
    seed: u64,
    mode: ExecMode,
    count: usize,
    on_frame: &mut dyn FnMut(usize, &FullState),
) -> Result<Trajectory, MpmError> {
    let mut solver = Solver::new(config.clone(), mode)?;
    let mut state = FullState::seed(config, seed);
    let interval = config.press.frame_interval;
    let mut frames = Vec::with_capacity(count);
    let mut poses = Vec::with_capacity(count);
    if count > 0 {
        on_frame(0, &state);
        frames.push(state.clone());
        poses.push(config.indenter_state(0.0).pose);
    }
    for k in 1..count {
        solver.advance_frame(&mut state)?;
        on_frame(k, &state);
        frames.push(state.clone());
        poses.push(config.indenter_state(k as f64 * interval).pose);
    }
    Ok(Trajectory {
        frames,
        poses,
        frame_interval: interval,
        dx: config.dx,
        grid_dims: config.grid_dims,
        steps: solver.steps_taken,
    })
}
