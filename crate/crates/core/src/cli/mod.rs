//! Command-line front end. Every subcommand reads one strict JSON config and
//! writes its artifacts under `--out`.

mod commands;
mod config;
mod error;
mod memory;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{
    AblationConfig, AblationVariant, DepthEval, EvalConfig, GenDataConfig, RenderConfig, RolloutConfig, SimulateConfig,
    TrainRunConfig, TrajectoryEval,
};
pub use error::CliError;
pub use memory::{peak_rss_bytes, reset_peak_rss};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "TACTILE_ROM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "tactile-rom", version, about = "Reduced-order tactile simulation pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, Args)]
pub struct Common {
    /// JSON config for the subcommand.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the seed given in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Ordered reductions and zeroed wall-clock fields, for byte-identical output.
    #[arg(long)]
    pub deterministic: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one press on the MPM solver.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Stop after this many output frames.
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Generate paired fine/coarse press trajectories.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train the autoencoder on a generated dataset.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Roll out the reduced model next to the coarse solver.
    Rollout {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Render depth maps from a trajectory.
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Compare trajectories or depth maps, or run the ablation table.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ablate: bool,
    },
}

/// Runs one parsed invocation.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    configure_threads()?;
    match &cli.command {
        Command::Simulate { common, frames } => commands::simulate(common, *frames),
        Command::GenData { common } => commands::gen_data(common),
        Command::Train { common } => commands::train(common),
        Command::Rollout { common, frames } => commands::rollout(common, *frames),
        Command::Render { common, frames } => commands::render(common, *frames),
        Command::Eval { common, ablate } => commands::eval(common, *ablate),
    }
}

/// Parses `args` (program name first), runs, reports errors on stderr and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    // A second call in the same process finds the pool already built; keep it.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}
