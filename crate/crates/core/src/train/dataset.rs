//! Paired fine/coarse press trajectories on disk.
//!
//! Layout: `scenario_<id>/{fine.traj, coarse.traj, meta.json}` plus a top-level
//! `norm_stats.json` over every fine frame.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::mpm::io::{read_trajectory, write_trajectory, TrajectoryFile};
use crate::mpm::{run_press_scenario, ExecMode, SimConfig};
use crate::rom::{DeformationFields, NormStats};

/// One press: indenter offset from the gel center and final depth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub id: usize,
    pub offset: [f64; 2],
    pub depth: f64,
}

impl ScenarioSpec {
    /// A `side × side` grid of offsets `spacing` apart, row-major with x fastest;
    /// depths cycle through `depths`.
    pub fn grid(side: usize, spacing: f64, depths: &[f64]) -> Vec<ScenarioSpec> {
        let half = (side as f64 - 1.0) / 2.0;
        (0..side * side)
            .map(|id| ScenarioSpec {
                id,
                offset: [
                    ((id % side) as f64 - half) * spacing,
                    ((id / side) as f64 - half) * spacing,
                ],
                depth: depths[id % depths.len()],
            })
            .collect()
    }

    pub fn apply(&self, config: &SimConfig) -> SimConfig {
        let mut c = config.clone();
        c.press.offset = self.offset;
        c.press.depth = self.depth;
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub fine: SimConfig,
    pub coarse: SimConfig,
    pub scenarios: Vec<ScenarioSpec>,
    #[serde(default)]
    pub seed: u64,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.fine.validate()?;
        self.coarse.validate()?;
        let (f, c) = (&self.fine, &self.coarse);
        if f.material != c.material || f.indenter != c.indenter || f.press != c.press {
            return Err(TrainError::Config("fine and coarse configs must share material, indenter and press".into()));
        }
        if f.elastomer_min != c.elastomer_min || f.elastomer_extents != c.elastomer_extents {
            return Err(TrainError::Config("fine and coarse configs must place the same elastomer".into()));
        }
        let mut ids: Vec<usize> = self.scenarios.iter().map(|s| s.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.scenarios.len() || ids.is_empty() {
            return Err(TrainError::Config("scenario ids must be unique and nonempty".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioMeta {
    pub scenario: ScenarioSpec,
    pub fine: SimConfig,
    pub coarse: SimConfig,
    pub seed: u64,
    /// Simulated time of every frame, s.
    pub timestamps: Vec<f64>,
    pub fine_steps: usize,
    pub coarse_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub scenarios: Vec<usize>,
    pub failed: Vec<usize>,
    pub pairs: usize,
}

pub fn scenario_dir(root: &Path, id: usize) -> PathBuf {
    root.join(format!("scenario_{id}"))
}

/// Runs every scenario at both resolutions with the same indenter trajectory and
/// writes the paired frames. A failing scenario is logged and left out.
pub fn generate_dataset(spec: &DatasetSpec, out: &Path, mode: ExecMode) -> Result<DatasetSummary, TrainError> {
    spec.validate()?;
    std::fs::create_dir_all(out)?;
    let results: Vec<(usize, Result<usize, TrainError>)> = spec
        .scenarios
        .par_iter()
        .map(|s| (s.id, generate_scenario(spec, s, out, mode)))
        .collect();
    let mut summary = DatasetSummary {
        scenarios: Vec::new(),
        failed: Vec::new(),
        pairs: 0,
    };
    for (id, r) in results {
        match r {
            Ok(frames) => {
                summary.scenarios.push(id);
                summary.pairs += frames;
            }
            Err(e) if matches!(e, TrainError::Io(_)) => return Err(e),
            Err(e) => {
                log::error!("scenario {id} failed and is excluded: {e}");
                summary.failed.push(id);
            }
        }
    }
    if summary.scenarios.is_empty() {
        return Err(TrainError::Dataset("every scenario failed".into()));
    }
    let dataset = Dataset::load(out)?;
    let stats = dataset.norm_stats(&summary.scenarios)?;
    std::fs::write(out.join("norm_stats.json"), serde_json::to_vec_pretty(&stats)?)?;
    Ok(summary)
}

fn generate_scenario(spec: &DatasetSpec, s: &ScenarioSpec, out: &Path, mode: ExecMode) -> Result<usize, TrainError> {
    let fine_cfg = s.apply(&spec.fine);
    let coarse_cfg = s.apply(&spec.coarse);
    let fine = run_press_scenario(&fine_cfg, spec.seed, mode)?;
    let coarse = run_press_scenario(&coarse_cfg, spec.seed, mode)?;
    if fine.len() != coarse.len() {
        return Err(TrainError::Dataset(format!(
            "scenario {}: {} fine frames vs {} coarse frames",
            s.id,
            fine.len(),
            coarse.len()
        )));
    }
    let dir = scenario_dir(out, s.id);
    std::fs::create_dir_all(&dir)?;
    write_trajectory(&dir.join("fine.traj"), &fine)?;
    write_trajectory(&dir.join("coarse.traj"), &coarse)?;
    let meta = ScenarioMeta {
        scenario: s.clone(),
        fine: fine_cfg,
        coarse: coarse_cfg,
        seed: spec.seed,
        timestamps: fine.frames.iter().map(|f| f.time).collect(),
        fine_steps: fine.steps,
        coarse_steps: coarse.steps,
    };
    std::fs::write(dir.join("meta.json"), serde_json::to_vec_pretty(&meta)?)?;
    Ok(fine.len())
}

#[derive(Clone, Debug)]
pub struct ScenarioData {
    pub meta: ScenarioMeta,
    pub fine: TrajectoryFile,
    pub coarse: TrajectoryFile,
}

impl ScenarioData {
    /// Fine displacement and deformation gradient of frame `k` relative to frame 0.
    pub fn fine_fields(&self, k: usize) -> DeformationFields {
        let rest = &self.fine.frames[0].x;
        let frame = &self.fine.frames[k];
        DeformationFields::from_positions(&frame.x, rest, &frame.f)
    }
}

/// A dataset directory loaded into memory, scenarios sorted by id.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub scenarios: Vec<ScenarioData>,
}

impl Dataset {
    pub fn load(root: &Path) -> Result<Self, TrainError> {
        let mut ids = Vec::new();
        for entry in std::fs::read_dir(root)? {
            let name = entry?.file_name();
            if let Some(id) = name.to_str().and_then(|n| n.strip_prefix("scenario_")).and_then(|n| n.parse().ok()) {
                ids.push(id);
            }
        }
        ids.sort_unstable();
        if ids.is_empty() {
            return Err(TrainError::Dataset(format!("no scenario directories under {}", root.display())));
        }
        let scenarios = ids
            .into_iter()
            .map(|id| {
                let dir = scenario_dir(root, id);
                let meta: ScenarioMeta = serde_json::from_slice(&std::fs::read(dir.join("meta.json"))?)?;
                let fine = read_trajectory(&dir.join("fine.traj"))?;
                let coarse = read_trajectory(&dir.join("coarse.traj"))?;
                if fine.frames.len() != coarse.frames.len() || fine.frames.is_empty() {
                    return Err(TrainError::Dataset(format!("scenario {id}: frame counts differ or are zero")));
                }
                Ok(ScenarioData { meta, fine, coarse })
            })
            .collect::<Result<Vec<_>, TrainError>>()?;
        let n = scenarios[0].fine.particle_count();
        if scenarios.iter().any(|s| s.fine.particle_count() != n || s.fine.frames[0].x != scenarios[0].fine.frames[0].x) {
            return Err(TrainError::Dataset("scenarios do not share the fine rest configuration".into()));
        }
        Ok(Dataset {
            root: root.to_path_buf(),
            scenarios,
        })
    }

    pub fn scenario(&self, id: usize) -> Option<&ScenarioData> {
        self.scenarios.iter().find(|s| s.meta.scenario.id == id)
    }

    pub fn ids(&self) -> Vec<usize> {
        self.scenarios.iter().map(|s| s.meta.scenario.id).collect()
    }

    pub fn pair_count(&self) -> usize {
        self.scenarios.iter().map(|s| s.fine.frames.len()).sum()
    }

    /// Channel statistics over every fine frame of the listed scenarios.
    pub fn norm_stats(&self, ids: &[usize]) -> Result<NormStats, TrainError> {
        let mut flat = Vec::new();
        for &id in ids {
            let s = self
                .scenario(id)
                .ok_or_else(|| TrainError::Dataset(format!("unknown scenario {id}")))?;
            for k in 0..s.fine.frames.len() {
                flat.push(s.fine_fields(k).flatten());
            }
        }
        Ok(NormStats::from_samples(flat.iter().map(Vec::as_slice)))
    }
}
