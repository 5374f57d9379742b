//! `gen-data`, `train` and `transfer`.

use std::path::{Path, PathBuf};

use ganbench_core::pointgen::{normalize_points, AffineTransform};
use ganbench_core::scenegen::describe;
use ganbench_core::trainer::{self, GanState, TrainData, TrainHistory, TrainOutcome, TrainSpec};
use ganbench_core::Error as CoreError;

use crate::checkpoint::{self, CheckpointExtra};
use crate::config::{DataSource, ExperimentConfig};
use crate::datasets::Dataset;
use crate::error::{CliError, CliResult};
use crate::history::{read_history, write_history};
use crate::run::{
    checkpoint_path, owning_run, provenance, run_stem, DatasetInfo, Lineage, OutputOptions, RunManifest, RunObserver,
    SampleTarget, HISTORY,
};

/// Command-line overrides applied to a config before it is hashed.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// Seed of the command's main stage: the dataset for `gen-data`, the
    /// training run for `train`/`transfer`, sampling for `eval`.
    pub seed: Option<u64>,
    pub steps: Option<u64>,
    pub deterministic: bool,
}

impl Overrides {
    fn apply_training(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.training.seed = Some(s);
        }
        if let Some(s) = self.steps {
            cfg.training.max_steps = Some(s);
        }
        if self.deterministic {
            cfg.training.deterministic = Some(true);
        }
    }
}

fn dataset_info(source: &DataSource, cfg: &ExperimentConfig, ds: &Dataset) -> DatasetInfo {
    let (description, total_rejections) = match (source, ds) {
        (DataSource::Images { name, scene, .. }, Dataset::Images(d)) => {
            (Some(describe(*name, scene)), Some(d.total_rejections()))
        }
        _ => (None, None),
    };
    DatasetInfo {
        kind: cfg.dataset.kind.clone(),
        n: ds.len(),
        seed: source.seed(),
        sha256: ds.sha256(),
        file: None,
        description,
        total_rejections,
    }
}

#[derive(Debug)]
pub struct GenDataOutcome {
    pub dir: PathBuf,
    pub sidecar: PathBuf,
    pub manifest: RunManifest,
}

pub const DATASET_SIDECAR: &str = "dataset.json";

/// Generates the configured dataset into a new directory.
pub fn gen_data(mut cfg: ExperimentConfig, ov: &Overrides, out: &OutputOptions) -> CliResult<GenDataOutcome> {
    if let Some(s) = ov.seed {
        cfg.dataset.seed = s;
    }
    let source = cfg.dataset.resolve()?;
    let ds = source.generate()?;
    let mut manifest = RunManifest::new("gen-data", &cfg, dataset_info(&source, &cfg, &ds));
    let dir = out.create_dir(&out.root(cfg.output_dir.as_deref()), &format!("data-{}", run_stem(&cfg.name, &manifest.config_hash)))?;
    let sidecar = dir.join(DATASET_SIDECAR);
    ds.write(&sidecar)?;
    manifest.dataset.file = Some(DATASET_SIDECAR.into());
    manifest.write(&dir)?;
    Ok(GenDataOutcome { dir, sidecar, manifest })
}

/// Data in generator coordinates plus what is needed to map back.
pub struct Prepared {
    pub dataset: Dataset,
    pub data: TrainData<f32>,
    pub normalization: Option<AffineTransform>,
}

pub fn prepare_data(source: &DataSource) -> CliResult<Prepared> {
    let dataset = source.generate()?;
    let (data, normalization) = match &dataset {
        Dataset::Points(ds) => {
            let (norm, tf) = normalize_points(ds)?;
            (TrainData::from_points(&norm), Some(tf))
        }
        Dataset::Images(ds) => (TrainData::from_images(ds), None),
    };
    Ok(Prepared {
        dataset,
        data,
        normalization,
    })
}

fn sample_target<'a>(p: &'a Prepared) -> SampleTarget<'a> {
    match &p.dataset {
        Dataset::Points(ds) => SampleTarget::Points {
            real: &ds.points,
            dim: ds.d,
            normalization: p.normalization.clone(),
        },
        Dataset::Images(_) => SampleTarget::Images,
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub outcome: TrainOutcome<f32>,
}

fn lineage(ckpt: &Path, header: &checkpoint::CheckpointHeader) -> Lineage {
    Lineage {
        checkpoint: ckpt.display().to_string(),
        step: header.step,
        weights_hash: header.weights_hash.clone(),
        config_hash: header.provenance.get("config_hash").cloned(),
        dataset: header.provenance.get("dataset_sha256").cloned(),
    }
}

fn numeric(e: CoreError) -> CliError {
    match e {
        CoreError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
        other => other.into(),
    }
}

fn finish(
    dir: PathBuf,
    mut manifest: RunManifest,
    ts: &TrainSpec,
    observer: RunObserver<'_>,
    outcome: TrainOutcome<f32>,
) -> CliResult<RunOutcome> {
    manifest.train = Some(ts.clone());
    manifest.steps_unit = Some("generator_steps".into());
    manifest.start_step = Some(outcome.history.start_step);
    manifest.final_step = Some(outcome.state.step);
    manifest.stop_reason = outcome.history.stop_reason;
    manifest.final_weights_hash = observer.checkpoints.last().map(|c| c.weights_hash.clone());
    manifest.checkpoints = observer.checkpoints;
    manifest.history_rows = Some(outcome.history.records.len());
    write_history(&dir.join(HISTORY), &outcome.history.records)?;
    manifest.write(&dir)?;
    Ok(RunOutcome { dir, manifest, outcome })
}

/// Trains the configured model in a new run directory. With `resume`, the
/// state (weights, optimizer moments, step counter) comes from that
/// checkpoint and training continues up to the configured budget.
pub fn train(mut cfg: ExperimentConfig, ov: &Overrides, out: &OutputOptions, resume: Option<&Path>) -> CliResult<RunOutcome> {
    ov.apply_training(&mut cfg);
    let resolved = cfg.resolve()?;
    let resumed = match resume {
        Some(src) => {
            let ckpt = checkpoint_path(src);
            let (state, header) = checkpoint::load(&ckpt)?;
            if header.spec != resolved.model {
                return Err(CoreError::IncompatibleCheckpoint(format!(
                    "{} holds a different model spec than the config",
                    ckpt.display()
                ))
                .into());
            }
            Some((ckpt, state, header))
        }
        None => None,
    };
    let prepared = prepare_data(&resolved.source)?;
    let mut manifest = RunManifest::new("train", &cfg, dataset_info(&resolved.source, &cfg, &prepared.dataset));
    manifest.model = Some(resolved.model.clone());
    manifest.normalization = prepared.normalization.clone();
    let ts = resolved.train;
    let (state, history, offset) = match resumed {
        Some((ckpt, state, header)) => {
            if header.provenance.get("dataset_sha256") != Some(&manifest.dataset.sha256) {
                return Err(CoreError::IncompatibleCheckpoint(format!("{} was trained on different data", ckpt.display())).into());
            }
            // earlier records keep convergence checks identical to an uninterrupted run
            let mut history = TrainHistory::default();
            let mut offset = 0;
            if let Some(run) = owning_run(&ckpt) {
                let path = run.join(HISTORY);
                if path.is_file() {
                    history.records = read_history(&path)?;
                    history.records.retain(|r| r.step <= state.step);
                    offset = history.records.last().map_or(0, |r| r.wall_ms);
                }
            }
            manifest.resumed_from = Some(lineage(&ckpt, &header));
            (state, history, offset)
        }
        None => (GanState::new(&resolved.model, &ts, ts.seed)?, TrainHistory::default(), 0),
    };
    let dir = out.create_dir(&out.root(cfg.output_dir.as_deref()), &run_stem(&cfg.name, &manifest.config_hash))?;
    let extra = CheckpointExtra {
        train: Some(ts.clone()),
        normalization: prepared.normalization.clone(),
        provenance: provenance(&manifest),
    };
    let mut observer = RunObserver::new(&dir, extra, sample_target(&prepared), ts.seed)?.with_offset(offset);
    let outcome = trainer::train_from(state, &ts, &prepared.data, &mut observer, history).map_err(numeric)?;
    finish(dir, manifest, &ts, observer, outcome)
}

/// Fine-tunes the generator and critic of `source` (a checkpoint or a run
/// directory) on the configured dataset.
pub fn transfer(mut cfg: ExperimentConfig, source: &Path, ov: &Overrides, out: &OutputOptions) -> CliResult<RunOutcome> {
    ov.apply_training(&mut cfg);
    let ckpt = checkpoint_path(source);
    let (state, header) = checkpoint::load(&ckpt)?;
    let spec = header.spec.clone();
    if let Some(f) = cfg.model.family {
        if f != spec.family {
            return Err(CoreError::IncompatibleCheckpoint(format!(
                "config asks for {} but the checkpoint holds {}",
                f.as_str(),
                spec.family.as_str()
            ))
            .into());
        }
    }
    cfg.model.family = Some(spec.family);
    let src = cfg.dataset.resolve()?;
    let ts = cfg.training.resolve(spec.family)?;
    let prepared = prepare_data(&src)?;
    let target_shape = prepared.data.sample_shape().to_vec();
    if target_shape != spec.output.sample_shape() {
        return Err(CoreError::IncompatibleCheckpoint(format!(
            "checkpoint emits {:?} samples but {} holds {:?}",
            spec.output.sample_shape(),
            cfg.dataset.kind,
            target_shape
        ))
        .into());
    }
    let mut manifest = RunManifest::new("transfer", &cfg, dataset_info(&src, &cfg, &prepared.dataset));
    manifest.model = Some(spec);
    manifest.normalization = prepared.normalization.clone();
    let from = lineage(&ckpt, &header);
    manifest.transfer_from = Some(from.clone());
    let dir = out.create_dir(&out.root(cfg.output_dir.as_deref()), &run_stem(&cfg.name, &manifest.config_hash))?;
    let extra = CheckpointExtra {
        train: Some(ts.clone()),
        normalization: prepared.normalization.clone(),
        provenance: provenance(&manifest),
    };
    let mut observer = RunObserver::new(&dir, extra, sample_target(&prepared), ts.seed)?;
    let outcome = trainer::transfer_finetune(state.model, &from.checkpoint, &prepared.data, &ts, &mut observer).map_err(numeric)?;
    finish(dir, manifest, &ts, observer, outcome)
}
