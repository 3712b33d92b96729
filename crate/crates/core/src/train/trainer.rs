use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::dataset::Dataset;
use super::loss::{batch_loss, decimated_particles, ConsistencyBatch, LossBreakdown, LossWeights};
use super::pairs::TrainingSet;
use super::TrainError;
use crate::rom::{Autoencoder, AutoencoderArch, Checkpoint, NormStats, CHANNELS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub latent: usize,
    #[serde(default)]
    pub weights: LossWeights,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub adam: AdamConfig,
    /// Learning rate reached at the last epoch by geometric decay from `adam.lr`;
    /// `None` keeps the rate constant.
    #[serde(default)]
    pub lr_final: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Scenario ids held out for validation.
    pub validation: Vec<usize>,
    /// Stop after this many epochs without a validation improvement.
    #[serde(default)]
    pub patience: Option<usize>,
}

fn default_epochs() -> usize {
    300
}

fn default_batch() -> usize {
    32
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.weights.validate()?;
        if self.batch_size == 0 || self.epochs == 0 || self.latent == 0 {
            return Err(TrainError::Config("epochs, batch_size and latent must be positive".into()));
        }
        if self.validation.is_empty() {
            return Err(TrainError::Config("hold out at least one scenario for validation".into()));
        }
        if !(self.adam.lr > 0.0) || self.lr_final.is_some_and(|l| !(l > 0.0)) {
            return Err(TrainError::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Weighted reconstruction loss, full plus decimated resolution.
    pub rec_loss: f64,
    pub cons_v: f64,
    pub cons_f: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

pub struct TrainReport {
    pub history: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val: f64,
    /// RMS held-out reconstruction error over the mean held-out state norm.
    pub val_relative_error: f64,
    pub checkpoint: Checkpoint,
    pub checkpoint_path: PathBuf,
}

/// Trains an autoencoder on every dataset scenario not held out, writing
/// `model.romw` (best validation epoch) and `train_log.csv` into `out`. With
/// `record_time` false the seconds column is zero so the log is reproducible.
pub fn train(dataset: &Dataset, config: &TrainConfig, out: &Path, record_time: bool) -> Result<TrainReport, TrainError> {
    config.validate()?;
    let ids = dataset.ids();
    if let Some(v) = config.validation.iter().find(|v| !ids.contains(v)) {
        return Err(TrainError::Config(format!("validation scenario {v} is not in the dataset")));
    }
    let train_ids: Vec<usize> = ids.iter().copied().filter(|i| !config.validation.contains(i)).collect();
    if train_ids.is_empty() {
        return Err(TrainError::Config("no training scenarios left after the hold-out".into()));
    }
    std::fs::create_dir_all(out)?;
    let stats = dataset.norm_stats(&train_ids)?;
    let train_set = TrainingSet::build(dataset, &train_ids, &stats)?;
    let val_set = TrainingSet::build(dataset, &config.validation, &stats)?;
    let lattice = dataset.scenarios[0].meta.fine.particle_lattice;
    let subset = decimated_particles(lattice);
    if lattice.iter().product::<usize>() != train_set.particle_count() {
        return Err(TrainError::Dataset("fine lattice does not match the stored particle count".into()));
    }
    let dim = CHANNELS * train_set.particle_count();
    let arch = AutoencoderArch {
        input_dim: dim,
        hidden: config.hidden.clone(),
        latent: config.latent,
        output_dim: dim,
    };
    let mut model = Autoencoder::<f32>::new(arch, config.seed)?;
    let mut adam = AdamState::<f32>::new(config.adam, &[model.encoder.params().len(), model.decoder.params().len()]);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let start = Instant::now();
    let log_path = out.join("train_log.csv");
    let mut log = BufWriter::new(File::create(&log_path)?);
    writeln!(log, "epoch,rec_loss,cons_v,cons_F,val_loss,seconds")?;
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, Autoencoder<f32>)> = None;
    let ckpt_path = out.join("model.romw");
    let metadata = |epoch: usize, val: f64| {
        serde_json::json!({
            "best_epoch": epoch,
            "val_loss": val,
            "train_scenarios": train_ids,
            "validation_scenarios": config.validation,
            "config": config,
        })
    };
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        if let Some(last) = config.lr_final {
            let frac = if config.epochs > 1 { (epoch - 1) as f64 / (config.epochs - 1) as f64 } else { 0.0 };
            adam.config.lr = config.adam.lr * (last / config.adam.lr).powf(frac);
        }
        let mut sum = LossBreakdown::default();
        let mut seen = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let q = train_set.rows(chunk);
            let mut rows = Vec::new();
            let mut prev = Vec::new();
            let mut current = Vec::new();
            for (j, &r) in chunk.iter().enumerate() {
                if let Some(p) = train_set.prev[r] {
                    rows.push(j);
                    prev.push(p);
                    current.push(r);
                }
            }
            let prev_q = train_set.rows(&prev);
            let targets = train_set.target_rows(&current);
            let dt: Vec<f64> = current.iter().map(|&r| train_set.dt[r]).collect();
            let cons = ConsistencyBatch {
                prev: prev_q.view(),
                rows: &rows,
                targets: targets.view(),
                stats: &stats,
                dt: &dt,
            };
            let result = batch_loss(&model, q.view(), Some(&subset), Some(cons), &config.weights);
            let (b, grads) = match result {
                Ok(v) => v,
                Err(TrainError::Diverged { .. }) => return abort(epoch, best, &stats, &ckpt_path, metadata),
                Err(e) => return Err(e),
            };
            let w = chunk.len() as f64;
            sum.rec += w * b.rec;
            sum.multiscale += w * b.multiscale;
            sum.cons_v += w * b.cons_v;
            sum.cons_f += w * b.cons_f;
            seen += chunk.len();
            let update = {
                let (enc, dec) = (&mut model.encoder, &mut model.decoder);
                let mut params = [enc.params_mut().view_mut(), dec.params_mut().view_mut()];
                adam.update(&mut params, &[grads.encoder.view(), grads.decoder.view()])
            };
            match update {
                Ok(()) => {}
                Err(TrainError::NonFiniteGradient) => return abort(epoch, best, &stats, &ckpt_path, metadata),
                Err(e) => return Err(e),
            }
        }
        let n = seen as f64;
        let val = reconstruction_error(&model, &val_set.q)?;
        if !val.is_finite() {
            return abort(epoch, best, &stats, &ckpt_path, metadata);
        }
        let entry = EpochLog {
            epoch,
            rec_loss: (sum.rec + config.weights.multiscale * sum.multiscale) / n,
            cons_v: sum.cons_v / n,
            cons_f: sum.cons_f / n,
            val_loss: val,
            seconds: if record_time { start.elapsed().as_secs_f64() } else { 0.0 },
        };
        writeln!(
            log,
            "{},{:e},{:e},{:e},{:e},{:.3}",
            entry.epoch, entry.rec_loss, entry.cons_v, entry.cons_f, entry.val_loss, entry.seconds
        )?;
        log::info!(
            "epoch {epoch}: rec {:.4e} cons_v {:.4e} cons_F {:.4e} val {:.4e}",
            entry.rec_loss,
            entry.cons_v,
            entry.cons_f,
            val
        );
        history.push(entry);
        if best.as_ref().is_none_or(|b| val < b.1) {
            best = Some((epoch, val, model.clone()));
        }
        if let (Some(p), Some(b)) = (config.patience, best.as_ref()) {
            if epoch - b.0 >= p {
                log::info!("stopping early at epoch {epoch}: no improvement for {p} epochs");
                break;
            }
        }
    }
    log.flush()?;
    let (best_epoch, best_val, best_model) = best.expect("at least one epoch ran");
    let checkpoint = Checkpoint {
        model: best_model,
        stats,
        metadata: metadata(best_epoch, best_val),
    };
    checkpoint.save(&ckpt_path)?;
    let rms = best_val.sqrt();
    Ok(TrainReport {
        history,
        best_epoch,
        best_val,
        val_relative_error: rms / val_set.mean_norm(),
        checkpoint,
        checkpoint_path: ckpt_path,
    })
}

fn abort(
    epoch: usize,
    best: Option<(usize, f64, Autoencoder<f32>)>,
    stats: &NormStats,
    path: &Path,
    metadata: impl Fn(usize, f64) -> serde_json::Value,
) -> Result<TrainReport, TrainError> {
    if let Some((e, v, model)) = best {
        Checkpoint {
            model,
            stats: stats.clone(),
            metadata: metadata(e, v),
        }
        .save(path)?;
        log::error!("training diverged at epoch {epoch}; kept the checkpoint of epoch {e}");
    }
    Err(TrainError::Diverged { epoch })
}

/// Mean squared reconstruction error `‖g(f(q)) − q‖²` over the rows of `q`.
pub fn reconstruction_error(model: &Autoencoder<f32>, q: &Array2<f32>) -> Result<f64, TrainError> {
    let mut total = 0.0;
    for chunk in q.axis_chunks_iter(Axis(0), 64) {
        let z = model.encode_batch(chunk)?;
        let rec = model.decode_batch(z.view())?;
        total += rec
            .iter()
            .zip(chunk.iter())
            .map(|(a, b)| {
                let e = (*a - *b) as f64;
                e * e
            })
            .sum::<f64>();
    }
    Ok(total / q.nrows().max(1) as f64)
}
