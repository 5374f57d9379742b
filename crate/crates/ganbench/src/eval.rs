//! `eval` and `report`: geometric metrics, sample grids and scatter plots.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ganbench_core::evaluator::{
    count_histogram_images, count_objects, manifold_distance, mode_coverage, ring_membership, EvalReport, ReplaySampler,
    ImageSource,
};
use ganbench_core::gancore::{Family, Net};
use ganbench_core::pointgen::{AffineTransform, PointDataset, PointParams};
use ganbench_core::rng::{self, Domain};
use ganbench_core::scenegen::{Image, ImageDatasetName, SceneConfig};
use ganbench_core::trainer::{snapshot_images, snapshot_points};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, CheckpointHeader};
use crate::commands::Overrides;
use crate::config::{DataSource, EvalConfig, ExperimentConfig};
use crate::datasets::{read_dataset, write_json, Dataset};
use crate::error::{CliError, CliResult};
use crate::history::read_history;
use crate::plots;
use crate::run::{checkpoint_path, run_stem, OutputOptions, RunManifest, GRID_SAMPLES, HISTORY};

pub const REPORT_JSON: &str = "report.json";
pub const COUNTS_CSV: &str = "counts.csv";
pub const SAMPLES_PNG: &str = "samples.png";
pub const SCATTER_PNG: &str = "scatter.png";

/// What to evaluate.
#[derive(Debug, Clone)]
pub enum EvalTarget {
    /// A run directory (its manifest and final checkpoint).
    Run(PathBuf),
    /// A checkpoint together with the config that describes its data.
    Checkpoint { checkpoint: PathBuf, config: ExperimentConfig },
    /// A dataset sidecar; the data itself stands in for the generator.
    Dataset { sidecar: PathBuf, eval: EvalConfig },
}

/// Generated (or replayed) samples with the context needed to score them.
pub enum Samples {
    Points {
        params: PointParams,
        noise: f64,
        fake: Vec<f64>,
        real: Vec<f64>,
        dim: usize,
    },
    Images {
        name: ImageDatasetName,
        scene: SceneConfig,
        family: Option<Family>,
        images: Vec<Image>,
    },
}

pub fn radius_default(params: &PointParams) -> Option<f64> {
    match params {
        PointParams::Blobs(spec) => {
            let s = spec.std.iter().cloned().fold(0.0, f64::max);
            (s > 0.0).then_some(3.0 * s)
        }
        _ => None,
    }
}

/// Three noise deviations, at least 0.05, at most half the ring gap.
pub fn ring_tol_default(factor: f64, noise: f64) -> f64 {
    (3.0 * noise).max(0.05).min((1.0 - factor) / 2.0)
}

/// Scores `samples` into an [`EvalReport`] (provenance left empty).
pub fn score(samples: &Samples, eval: &EvalConfig) -> CliResult<(EvalReport, Vec<usize>)> {
    let mut report = EvalReport::default();
    let mut per_image = Vec::new();
    match samples {
        Samples::Points {
            params, noise, fake, dim, ..
        } => {
            report.n_samples = fake.len() / dim;
            match params {
                PointParams::Blobs(spec) => {
                    let radius = eval.radius.or(radius_default(params)).ok_or_else(|| {
                        CliError::Config("eval.radius is required when every blob has std 0".into())
                    })?;
                    report.mode_coverage = Some(mode_coverage(fake, &spec.centers, radius, eval.coverage_min)?);
                    report.notes.push("no closed-form manifold for blobs; manifold section omitted".into());
                }
                PointParams::Circles { factor } => {
                    let tol = eval.ring_tol.unwrap_or_else(|| ring_tol_default(*factor, *noise));
                    report.rings = Some(ring_membership(fake, (*factor, 1.0), tol)?);
                    report.manifold = Some(manifold_distance(fake, params, eval.m_ref)?);
                    report.notes.push(format!("ring tolerance {tol}; `neither` is the spurious inter-ring share"));
                }
                _ => report.manifold = Some(manifold_distance(fake, params, eval.m_ref)?),
            }
        }
        Samples::Images {
            name,
            scene,
            family,
            images,
        } => {
            report.n_samples = images.len();
            let expected = name.object_count(&scene.ct2);
            let expected = scene.squares.map_or(expected, |(c, _)| c);
            report.counts = Some(count_histogram_images(images, &eval.count, Some(expected)));
            per_image = images.iter().map(|i| count_objects(i, &eval.count).count).collect();
            report.notes.push(
                "counts come from connected components of the thresholded image; exact_count_rate is the share of \
                 images with exactly the dataset's object count"
                    .into(),
            );
            if *name == ImageDatasetName::Squares3x4 && *family == Some(Family::Dcgan) {
                report.notes.push("comparison range for dcgan on squares_3_4: 0 to 5 squares per image".into());
            }
        }
    }
    Ok((report, per_image))
}

fn point_samples(ds: &PointDataset, fake: Vec<f64>) -> Samples {
    Samples::Points {
        params: ds.params.clone(),
        noise: ds.noise,
        fake,
        real: ds.points.clone(),
        dim: ds.d,
    }
}

/// Draws `n` points with replacement from a point dataset.
fn replay_points(ds: &PointDataset, n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, Domain::Eval, 0);
    let mut out = Vec::with_capacity(n * ds.d);
    for _ in 0..n {
        out.extend_from_slice(ds.row(rng::below(&mut r, ds.n as u64) as usize));
    }
    out
}

fn generator_samples(
    generator: &mut Net<f32>,
    dataset: &Dataset,
    source: &DataSource,
    family: Family,
    normalization: Option<&AffineTransform>,
    eval: &EvalConfig,
) -> Samples {
    match (dataset, source) {
        (Dataset::Points(ds), _) => point_samples(ds, snapshot_points(generator, eval.n_samples, eval.seed, normalization)),
        (Dataset::Images(_), DataSource::Images { name, scene, .. }) => Samples::Images {
            name: *name,
            scene: scene.clone(),
            family: Some(family),
            images: snapshot_images(generator, eval.n_samples, eval.seed),
        },
        _ => unreachable!("dataset generated from its source"),
    }
}

#[derive(Debug)]
pub struct EvalOutcome {
    pub dir: PathBuf,
    pub report: EvalReport,
}

fn eval_config_with_seed(mut eval: EvalConfig, ov: &Overrides) -> EvalConfig {
    if let Some(s) = ov.seed {
        eval.seed = s;
    }
    eval
}

struct Loaded {
    samples: Samples,
    provenance: BTreeMap<String, String>,
    eval: EvalConfig,
    /// Default output location: inside the run, or a new directory under the root.
    run_dir: Option<PathBuf>,
    stem: String,
    root_hint: Option<String>,
}

fn from_checkpoint(ckpt: &Path, cfg: &ExperimentConfig, ov: &Overrides, expect_sha: Option<&str>) -> CliResult<(Loaded, CheckpointHeader)> {
    let (mut state, header) = checkpoint::load(ckpt)?;
    let source = cfg.dataset.resolve()?;
    let dataset = source.generate()?;
    if let Some(sha) = expect_sha {
        if dataset.sha256() != sha {
            return Err(CliError::format(ckpt, "regenerated training data does not match the run manifest"));
        }
    }
    let eval = eval_config_with_seed(cfg.eval.clone(), ov);
    let samples = generator_samples(
        &mut state.model.generator,
        &dataset,
        &source,
        header.spec.family,
        header.normalization.as_ref(),
        &eval,
    );
    let mut provenance = header.provenance.clone();
    provenance.insert("source".into(), "generator".into());
    provenance.insert("checkpoint".into(), ckpt.display().to_string());
    provenance.insert("checkpoint_step".into(), header.step.to_string());
    provenance.insert("weights_hash".into(), header.weights_hash.clone());
    provenance.insert("config_hash".into(), cfg.hash());
    provenance.insert("family".into(), header.spec.family.as_str().into());
    Ok((
        Loaded {
            samples,
            provenance,
            eval,
            run_dir: None,
            stem: format!("eval-{}", run_stem(&cfg.name, &cfg.hash())),
            root_hint: cfg.output_dir.clone(),
        },
        header,
    ))
}

fn load(target: &EvalTarget, ov: &Overrides) -> CliResult<Loaded> {
    match target {
        EvalTarget::Run(dir) => {
            let manifest = RunManifest::read(dir)?;
            let ckpt = checkpoint_path(dir);
            if !ckpt.is_file() {
                return Err(CliError::Missing(ckpt));
            }
            let (mut loaded, _) = from_checkpoint(&ckpt, &manifest.config, ov, Some(&manifest.dataset.sha256))?;
            loaded.provenance.insert("run".into(), dir.display().to_string());
            loaded.run_dir = Some(dir.clone());
            Ok(loaded)
        }
        EvalTarget::Checkpoint { checkpoint, config } => {
            if !checkpoint.is_file() {
                return Err(CliError::Missing(checkpoint.clone()));
            }
            Ok(from_checkpoint(checkpoint, config, ov, None)?.0)
        }
        EvalTarget::Dataset { sidecar, eval } => {
            let eval = eval_config_with_seed(eval.clone(), ov);
            let dataset = read_dataset(sidecar)?;
            let samples = match &dataset {
                Dataset::Points(ds) => point_samples(ds, replay_points(ds, eval.n_samples, eval.seed)),
                Dataset::Images(ds) => Samples::Images {
                    name: ds.name,
                    scene: scene_of(sidecar),
                    family: None,
                    images: ReplaySampler { dataset: ds }.sample_images(eval.n_samples, eval.seed),
                },
            };
            let mut provenance = BTreeMap::new();
            provenance.insert("source".into(), "dataset replay".into());
            provenance.insert("dataset".into(), sidecar.display().to_string());
            provenance.insert("dataset_sha256".into(), dataset.sha256());
            let config_hash = crate::datasets::sha256_hex(&serde_json::to_vec(&eval).expect("eval config serialises"));
            provenance.insert("config_hash".into(), config_hash.clone());
            Ok(Loaded {
                samples,
                provenance,
                eval,
                run_dir: sidecar.parent().map(Path::to_path_buf),
                stem: format!("eval-dataset-{}", &config_hash[..12]),
                root_hint: None,
            })
        }
    }
}

/// The scene settings a dataset was generated with, taken from the
/// manifest next to it when present.
fn scene_of(sidecar: &Path) -> SceneConfig {
    sidecar
        .parent()
        .and_then(|d| RunManifest::read(d).ok())
        .and_then(|m| m.config.dataset.scene)
        .unwrap_or_default()
}

fn write_outputs(dir: &Path, samples: &Samples, report: &EvalReport, per_image: &[usize]) -> CliResult<()> {
    write_json(&dir.join(REPORT_JSON), report)?;
    match samples {
        Samples::Points { fake, real, dim, .. } => {
            let shown = plots::thin(real, *dim, (fake.len() / dim).max(1));
            plots::save_png(&plots::scatter(&shown, fake, *dim), &dir.join(SCATTER_PNG))
        }
        Samples::Images { images, .. } => {
            plots::save_png(&plots::sample_grid(&images[..images.len().min(GRID_SAMPLES)]), &dir.join(SAMPLES_PNG))?;
            let path = dir.join(COUNTS_CSV);
            let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::format(&path, e))?;
            w.write_record(["index", "count"]).map_err(|e| CliError::format(&path, e))?;
            for (i, c) in per_image.iter().enumerate() {
                w.write_record([i.to_string(), c.to_string()]).map_err(|e| CliError::format(&path, e))?;
            }
            w.flush().map_err(CliError::io(&path))
        }
    }
}

/// Evaluates `target` and writes `report.json` plus plots. Run evaluations
/// land in `<run>/eval-<timestamp>` unless `out` says otherwise.
pub fn eval(target: &EvalTarget, ov: &Overrides, out: &OutputOptions) -> CliResult<EvalOutcome> {
    let loaded = load(target, ov)?;
    let (mut report, per_image) = score(&loaded.samples, &loaded.eval)?;
    report.provenance = loaded.provenance;
    report.provenance.insert("eval_seed".into(), loaded.eval.seed.to_string());
    let dir = match (&loaded.run_dir, &out.out, &out.out_root) {
        (Some(run), None, None) => out.create_dir(run, "eval")?,
        _ => out.create_dir(&out.root(loaded.root_hint.as_deref()), &loaded.stem)?,
    };
    write_outputs(&dir, &loaded.samples, &report, &per_image)?;
    Ok(EvalOutcome { dir, report })
}

/// One run's contribution to a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: String,
    pub name: String,
    pub command: String,
    pub config_hash: String,
    pub family: Option<Family>,
    pub dataset: String,
    pub final_step: Option<u64>,
    pub stop_reason: Option<String>,
    pub transfer_from: Option<String>,
    /// Mean critic and generator loss over the last 100 generator steps.
    pub tail_critic_loss: Option<f64>,
    pub tail_generator_loss: Option<f64>,
    pub eval: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub runs: Vec<RunSummary>,
    /// Per count: one column per run (share of images).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count_comparison: Option<BTreeMap<usize, Vec<f64>>>,
}

fn tail_means(dir: &Path) -> CliResult<(Option<f64>, Option<f64>)> {
    let path = dir.join(HISTORY);
    if !path.is_file() {
        return Ok((None, None));
    }
    let records = read_history(&path)?;
    let last = records.last().map_or(0, |r| r.step);
    let from = last.saturating_sub(100);
    let mean = |role| {
        let v: Vec<f64> = records.iter().filter(|r| r.role == role && r.step > from).map(|r| r.loss).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    use ganbench_core::trainer::Role;
    Ok((mean(Role::Critic), mean(Role::Generator)))
}

/// Evaluates each run and writes `report.md`, `report.json` and per-run
/// plots. With several image runs (e.g. a transfer source and its target)
/// the count histograms are compared side by side.
pub fn report(runs: &[PathBuf], ov: &Overrides, out: &OutputOptions) -> CliResult<(PathBuf, Report)> {
    if runs.is_empty() {
        return Err(CliError::Config("report needs at least one run directory".into()));
    }
    let mut summaries = Vec::new();
    let mut loaded_all = Vec::new();
    for dir in runs {
        let manifest = RunManifest::read(dir)?;
        let loaded = load(&EvalTarget::Run(dir.clone()), ov)?;
        let (mut rep, per_image) = score(&loaded.samples, &loaded.eval)?;
        rep.provenance = loaded.provenance.clone();
        let (c, g) = tail_means(dir)?;
        summaries.push(RunSummary {
            run: dir.display().to_string(),
            name: manifest.name.clone(),
            command: manifest.command.clone(),
            config_hash: manifest.config_hash.clone(),
            family: manifest.model.as_ref().map(|m| m.family),
            dataset: manifest.dataset.kind.clone(),
            final_step: manifest.final_step,
            stop_reason: manifest.stop_reason.map(|s| format!("{s:?}")),
            transfer_from: manifest.transfer_from.as_ref().map(|t| t.checkpoint.clone()),
            tail_critic_loss: c,
            tail_generator_loss: g,
            eval: rep,
        });
        loaded_all.push((loaded, per_image));
    }
    let hists: Vec<_> = summaries.iter().filter_map(|s| s.eval.counts.as_ref()).collect();
    let count_comparison = (hists.len() == summaries.len() && hists.len() >= 2).then(|| {
        let keys: BTreeSet<usize> = hists.iter().flat_map(|h| h.histogram.keys().copied()).collect();
        keys.into_iter()
            .map(|k| {
                let shares = hists
                    .iter()
                    .map(|h| *h.histogram.get(&k).unwrap_or(&0) as f64 / h.n.max(1) as f64)
                    .collect();
                (k, shares)
            })
            .collect()
    });
    let report = Report {
        runs: summaries,
        count_comparison,
    };
    let key: String = report.runs.iter().map(|r| r.config_hash.as_str()).collect();
    let stem = format!("report-{}", &crate::datasets::sha256_hex(key.as_bytes())[..12]);
    let dir = out.create_dir(&out.root(None), &stem)?;
    for (i, (loaded, per_image)) in loaded_all.iter().enumerate() {
        let sub = dir.join(format!("run{i}"));
        std::fs::create_dir_all(&sub).map_err(CliError::io(&sub))?;
        write_outputs(&sub, &loaded.samples, &report.runs[i].eval, per_image)?;
    }
    write_json(&dir.join(REPORT_JSON), &report)?;
    let md = dir.join("report.md");
    std::fs::write(&md, render_markdown(&report)).map_err(CliError::io(&md))?;
    Ok((dir, report))
}

fn opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.4}"))
}

pub fn render_markdown(r: &Report) -> String {
    let mut s = String::from("# Run report\n\n");
    for (i, run) in r.runs.iter().enumerate() {
        let _ = writeln!(s, "## run{i}: {}\n", run.name);
        let _ = writeln!(s, "- directory: `{}`", run.run);
        let _ = writeln!(s, "- config hash: `{}`", run.config_hash);
        let fam = run.family.map_or("-", |f| f.as_str());
        let _ = writeln!(s, "- model: {fam} on {}", run.dataset);
        let _ = writeln!(
            s,
            "- generator steps: {} ({})",
            run.final_step.map_or("-".into(), |v| v.to_string()),
            run.stop_reason.as_deref().unwrap_or("-")
        );
        if let Some(t) = &run.transfer_from {
            let _ = writeln!(s, "- transferred from: `{t}`");
        }
        let _ = writeln!(
            s,
            "- mean loss over the last 100 steps: critic {}, generator {}",
            opt(run.tail_critic_loss),
            opt(run.tail_generator_loss)
        );
        let e = &run.eval;
        if let Some(c) = &e.counts {
            let _ = writeln!(s, "- exact-count rate: {} (expected {:?})", opt(c.exact_count_rate), c.expected_count);
            let _ = writeln!(s, "- axis-aligned share: {}", opt(c.axis_aligned_rate));
            let _ = writeln!(
                s,
                "- mean component area {}, mean bbox edge {}",
                opt(c.mean_component_area),
                opt(c.mean_bbox_edge)
            );
            let _ = writeln!(s, "\n| count | images |\n|---|---|");
            for (k, v) in &c.histogram {
                let _ = writeln!(s, "| {k} | {v} |");
            }
        }
        if let Some(m) = &e.mode_coverage {
            let _ = writeln!(
                s,
                "- modes covered: {} of {} (radius {:.3}), spurious share {:.4}",
                m.modes_covered,
                m.covered.len(),
                m.radius,
                m.spurious_fraction
            );
        }
        if let Some(rg) = &e.rings {
            let _ = writeln!(s, "- rings: inner {:.4}, outer {:.4}, neither {:.4} (between rings {:.4})", rg.inner, rg.outer, rg.neither, rg.between);
        }
        if let Some(m) = &e.manifold {
            let _ = writeln!(s, "- manifold distance: mean {:.4}, p95 {:.4}, max {:.4}", m.mean, m.p95, m.max);
        }
        for n in &e.notes {
            let _ = writeln!(s, "- note: {n}");
        }
        let plot = if e.counts.is_some() { SAMPLES_PNG } else { SCATTER_PNG };
        let _ = writeln!(s, "\n![run{i}](run{i}/{plot})\n");
    }
    if let Some(cmp) = &r.count_comparison {
        let _ = writeln!(s, "## Count histograms\n");
        let head: Vec<String> = (0..r.runs.len()).map(|i| format!("run{i}")).collect();
        let _ = writeln!(s, "| count | {} |", head.join(" | "));
        let _ = writeln!(s, "|---|{}", "---|".repeat(head.len()));
        for (k, shares) in cmp {
            let cells: Vec<String> = shares.iter().map(|v| format!("{v:.3}")).collect();
            let _ = writeln!(s, "| {k} | {} |", cells.join(" | "));
        }
    }
    s
}
