//! Run directories, manifests and the file-writing training observer.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ganbench_core::gancore::ModelSpec;
use ganbench_core::pointgen::AffineTransform;
use ganbench_core::trainer::{snapshot_images, snapshot_points, GanState, StopReason, TrainHistory, TrainObserver, TrainSpec};
use ganbench_core::Error as CoreError;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, CheckpointExtra};
use crate::config::ExperimentConfig;
use crate::datasets::{read_json, write_json};
use crate::error::{CliError, CliResult};
use crate::history::write_history;
use crate::plots;

pub const MANIFEST: &str = "manifest.json";
pub const HISTORY: &str = "history.csv";
pub const FINAL_CHECKPOINT: &str = "checkpoints/final.ckpt";
pub const ENV_OUT_ROOT: &str = "GANBENCH_OUT";
pub const DEFAULT_OUT_ROOT: &str = "runs";
const RUN_FORMAT: &str = "ganbench-run";

/// Where a command writes.
#[derive(Debug, Clone, Default)]
pub struct OutputOptions {
    /// Exact output directory.
    pub out: Option<PathBuf>,
    /// Root for generated run directories.
    pub out_root: Option<PathBuf>,
    /// Reuse `<name>-<hash>` (or `out`) and replace its contents.
    pub force: bool,
}

impl OutputOptions {
    /// Root precedence: explicit flag, config, environment, `runs`.
    pub fn root(&self, config_dir: Option<&str>) -> PathBuf {
        if let Some(r) = &self.out_root {
            return r.clone();
        }
        if let Some(r) = config_dir {
            return PathBuf::from(r);
        }
        match std::env::var_os(ENV_OUT_ROOT) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => PathBuf::from(DEFAULT_OUT_ROOT),
        }
    }

    /// Creates a fresh directory. Without `force` an existing directory is
    /// never reused; timestamped names get a numeric suffix on collision.
    pub fn create_dir(&self, root: &Path, stem: &str) -> CliResult<PathBuf> {
        if let Some(out) = &self.out {
            return prepare(out, self.force);
        }
        if self.force {
            return prepare(&root.join(stem), true);
        }
        let base = format!("{stem}-{}", chrono::Local::now().format("%Y%m%dT%H%M%S%3f"));
        for k in 0.. {
            let name = if k == 0 { base.clone() } else { format!("{base}-{k}") };
            let dir = root.join(name);
            fs::create_dir_all(root).map_err(CliError::io(root))?;
            match fs::create_dir(&dir) {
                Ok(()) => return Ok(dir),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(CliError::io(&dir)(e)),
            }
        }
        unreachable!()
    }
}

fn prepare(dir: &Path, force: bool) -> CliResult<PathBuf> {
    if dir.exists() {
        let empty = fs::read_dir(dir).map_err(CliError::io(dir))?.next().is_none();
        if !empty {
            if !force {
                return Err(CliError::Config(format!(
                    "{} exists and is not empty (use --force to replace it)",
                    dir.display()
                )));
            }
            fs::remove_dir_all(dir).map_err(CliError::io(dir))?;
        }
    }
    fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    Ok(dir.to_path_buf())
}

/// `<name>-<first 12 hex digits of the config hash>`.
pub fn run_stem(name: &str, config_hash: &str) -> String {
    format!("{name}-{}", &config_hash[..12])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub kind: String,
    pub n: usize,
    pub seed: u64,
    pub sha256: String,
    /// Sidecar file, when the dataset was written to disk.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_rejections: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointInfo {
    pub step: u64,
    pub file: String,
    pub weights_hash: String,
}

/// Where a run's initial weights came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    pub checkpoint: String,
    pub step: u64,
    pub weights_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub version: u32,
    /// `gen-data`, `train` or `transfer`.
    pub command: String,
    pub name: String,
    pub created: String,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub dataset: DatasetInfo,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainSpec>,
    /// Training budgets and step numbers count generator updates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps_unit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_step: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_step: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_reason: Option<StopReason>,
    #[serde(default)]
    pub checkpoints: Vec<CheckpointInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_weights_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history_rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<AffineTransform>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer_from: Option<Lineage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resumed_from: Option<Lineage>,
}

impl RunManifest {
    pub fn new(command: &str, config: &ExperimentConfig, dataset: DatasetInfo) -> Self {
        RunManifest {
            format: RUN_FORMAT.into(),
            version: 1,
            command: command.into(),
            name: config.name.clone(),
            created: chrono::Local::now().to_rfc3339(),
            config: config.clone(),
            config_hash: config.hash(),
            dataset,
            model: None,
            train: None,
            steps_unit: None,
            start_step: None,
            final_step: None,
            stop_reason: None,
            checkpoints: Vec::new(),
            final_weights_hash: None,
            history_rows: None,
            normalization: None,
            transfer_from: None,
            resumed_from: None,
        }
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        write_json(&dir.join(MANIFEST), self)
    }

    pub fn read(dir: &Path) -> CliResult<Self> {
        let path = dir.join(MANIFEST);
        let m: RunManifest = read_json(&path)?;
        if m.format != RUN_FORMAT {
            return Err(CliError::format(&path, "not a run manifest"));
        }
        Ok(m)
    }
}

/// What the observer needs for periodic sample snapshots.
pub enum SampleTarget<'a> {
    Images,
    Points {
        real: &'a [f64],
        dim: usize,
        normalization: Option<AffineTransform>,
    },
}

pub const GRID_SAMPLES: usize = 64;
pub const SCATTER_SAMPLES: usize = 1000;

/// Writes checkpoints, history and sample snapshots into a run directory.
pub struct RunObserver<'a> {
    dir: PathBuf,
    start: Instant,
    /// Wall-clock offset carried over from a resumed run.
    offset_ms: u64,
    extra: CheckpointExtra,
    samples: SampleTarget<'a>,
    sample_seed: u64,
    pub checkpoints: Vec<CheckpointInfo>,
}

fn sink<E: std::fmt::Display>(e: E) -> CoreError {
    CoreError::Sink(e.to_string())
}

impl<'a> RunObserver<'a> {
    pub fn new(dir: &Path, extra: CheckpointExtra, samples: SampleTarget<'a>, sample_seed: u64) -> CliResult<Self> {
        for sub in ["checkpoints", "samples"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(CliError::io(&p))?;
        }
        Ok(RunObserver {
            dir: dir.to_path_buf(),
            start: Instant::now(),
            offset_ms: 0,
            extra,
            samples,
            sample_seed,
            checkpoints: Vec::new(),
        })
    }

    pub fn with_offset(mut self, ms: u64) -> Self {
        self.offset_ms = ms;
        self
    }
}

impl TrainObserver<f32> for RunObserver<'_> {
    fn elapsed_ms(&self) -> u64 {
        self.offset_ms + self.start.elapsed().as_millis() as u64
    }

    fn on_checkpoint(&mut self, state: &GanState<f32>, history: &TrainHistory, final_checkpoint: bool) -> ganbench_core::Result<()> {
        let file = format!("checkpoints/step-{}.ckpt", state.step);
        let path = self.dir.join(&file);
        let header = checkpoint::save(&path, state, &self.extra).map_err(sink)?;
        self.checkpoints.push(CheckpointInfo {
            step: state.step,
            file,
            weights_hash: header.weights_hash,
        });
        if final_checkpoint {
            let fin = self.dir.join(FINAL_CHECKPOINT);
            fs::copy(&path, &fin).map_err(sink)?;
        }
        write_history(&self.dir.join(HISTORY), &history.records).map_err(sink)
    }

    fn on_samples(&mut self, state: &mut GanState<f32>) -> ganbench_core::Result<()> {
        let path = self.dir.join(format!("samples/step-{}.png", state.step));
        let generator = &mut state.model.generator;
        let img = match &self.samples {
            SampleTarget::Images => plots::sample_grid(&snapshot_images(generator, GRID_SAMPLES, self.sample_seed)),
            SampleTarget::Points {
                real,
                dim,
                normalization,
            } => {
                let fake = snapshot_points(generator, SCATTER_SAMPLES, self.sample_seed, normalization.as_ref());
                plots::scatter(&plots::thin(real, *dim, SCATTER_SAMPLES), &fake, *dim)
            }
        };
        plots::save_png(&img, &path).map_err(sink)
    }
}

/// Provenance entries embedded in checkpoints.
pub fn provenance(manifest: &RunManifest) -> BTreeMap<String, String> {
    let mut p = BTreeMap::new();
    p.insert("command".into(), manifest.command.clone());
    p.insert("name".into(), manifest.name.clone());
    p.insert("config_hash".into(), manifest.config_hash.clone());
    p.insert("dataset_sha256".into(), manifest.dataset.sha256.clone());
    if let Some(t) = &manifest.transfer_from {
        p.insert("transfer_from".into(), t.checkpoint.clone());
        p.insert("transfer_from_weights".into(), t.weights_hash.clone());
    }
    if let Some(r) = &manifest.resumed_from {
        p.insert("resumed_from".into(), r.checkpoint.clone());
    }
    p
}

/// A checkpoint path, or a run directory meaning its final checkpoint.
pub fn checkpoint_path(source: &Path) -> PathBuf {
    if source.is_dir() {
        source.join(FINAL_CHECKPOINT)
    } else {
        source.to_path_buf()
    }
}

/// The run directory owning a checkpoint file, if it looks like one.
pub fn owning_run(checkpoint: &Path) -> Option<PathBuf> {
    let run = checkpoint.parent()?.parent()?;
    run.join(MANIFEST).is_file().then(|| run.to_path_buf())
}
