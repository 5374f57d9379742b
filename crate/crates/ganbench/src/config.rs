//! Declarative experiment configuration (TOML).

use std::path::Path;

use ganbench_core::evaluator::CountConfig;
use ganbench_core::gancore::{Family, ModelSpec, OptimizerKind};
use ganbench_core::pointgen::{generate, BlobSpec, NoiseLevel, PointKind, PointParams};
use ganbench_core::scenegen::{gen_image_dataset, ImageDatasetName, SceneConfig};
use ganbench_core::trainer::{ConvergenceSpec, TrainSpec};
use serde::{Deserialize, Serialize};

use crate::datasets::{sha256_hex, Dataset};
use crate::error::{CliError, CliResult};

pub const DEFAULT_DATASET_SIZE: usize = 5000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    /// Root under which run directories are created.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

/// A noise level by name or as an explicit standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Noise {
    Level(NoiseLevel),
    Std(f64),
}

impl Noise {
    pub fn std(self) -> f64 {
        match self {
            Noise::Level(l) => l.std(),
            Noise::Std(s) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Point kind (`blobs`, `circles`, `s_curve`, `swiss_roll`) or image
    /// dataset (`squares_1_4`, `squares_3_4`, `squares_1_16`, `ct2`).
    pub kind: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<Noise>,
    /// Blob centers and spreads (blobs only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blobs: Option<BlobSpec>,
    /// Inner/outer radius ratio (circles only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<SceneConfig>,
}

/// A fully resolved data source.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Points {
        params: PointParams,
        n: usize,
        noise: f64,
        seed: u64,
    },
    Images {
        name: ImageDatasetName,
        n: usize,
        seed: u64,
        scene: SceneConfig,
    },
}

impl DatasetConfig {
    pub fn resolve(&self) -> CliResult<DataSource> {
        let n = self.n.unwrap_or(DEFAULT_DATASET_SIZE);
        if let Some(kind) = PointKind::parse(&self.kind) {
            if self.scene.is_some() {
                return Err(CliError::Config("`scene` applies to image datasets only".into()));
            }
            let params = match kind {
                PointKind::Blobs => {
                    if self.factor.is_some() {
                        return Err(CliError::Config("`factor` applies to circles only".into()));
                    }
                    PointParams::Blobs(self.blobs.clone().unwrap_or_default())
                }
                PointKind::Circles => PointParams::Circles {
                    factor: self.factor.unwrap_or(0.5),
                },
                _ => PointParams::default_for(kind),
            };
            if self.blobs.is_some() && kind != PointKind::Blobs {
                return Err(CliError::Config("`blobs` applies to the blobs dataset only".into()));
            }
            let noise = self.noise.map(Noise::std).unwrap_or(0.0);
            return Ok(DataSource::Points {
                params,
                n,
                noise,
                seed: self.seed,
            });
        }
        if let Some(name) = ImageDatasetName::parse(&self.kind) {
            if self.noise.is_some() || self.blobs.is_some() || self.factor.is_some() {
                return Err(CliError::Config("noise/blobs/factor apply to point datasets only".into()));
            }
            return Ok(DataSource::Images {
                name,
                n,
                seed: self.seed,
                scene: self.scene.clone().unwrap_or_default(),
            });
        }
        Err(CliError::Config(format!("unknown dataset kind {:?}", self.kind)))
    }
}

impl DataSource {
    pub fn generate(&self) -> CliResult<Dataset> {
        Ok(match self {
            DataSource::Points { params, n, noise, seed } => Dataset::Points(generate(params, *n, *noise, *seed)?),
            DataSource::Images { name, n, seed, scene } => Dataset::Images(gen_image_dataset(*name, *n, *seed, scene)?),
        })
    }

    pub fn seed(&self) -> u64 {
        match self {
            DataSource::Points { seed, .. } | DataSource::Images { seed, .. } => *seed,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Family>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gen_channels: Option<[usize; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critic_channels: Option<[usize; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaky_slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropout: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gp_lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critic_batchnorm: Option<bool>,
}

impl ModelConfig {
    /// Builds and validates the model spec for `source`.
    pub fn resolve(&self, source: &DataSource) -> CliResult<ModelSpec> {
        let family = self.family.ok_or_else(|| CliError::Config("model.family is required".into()))?;
        let mut spec = match source {
            DataSource::Points { params, .. } => {
                if family.is_conv() {
                    return Err(CliError::Config(format!("{} needs an image dataset", family.as_str())));
                }
                ModelSpec::points(family, params.kind().dim())
            }
            DataSource::Images { name, .. } => {
                if !family.is_conv() {
                    return Err(CliError::Config(format!("{} needs a point dataset", family.as_str())));
                }
                ModelSpec::images(family, name.channels())
            }
        };
        if let Some(v) = self.latent_dim {
            spec.latent_dim = v;
        }
        if let Some(v) = &self.hidden {
            spec.hidden = v.clone();
        }
        if let Some(v) = self.gen_channels {
            spec.gen_channels = v;
        }
        if let Some(v) = self.critic_channels {
            spec.critic_channels = v;
        }
        if let Some(v) = self.leaky_slope {
            spec.leaky_slope = v;
        }
        if let Some(v) = self.dropout {
            spec.dropout = v;
        }
        if let Some(v) = self.gp_lambda {
            spec.gp_lambda = v;
        }
        if let Some(v) = self.critic_batchnorm {
            spec.critic_batchnorm = v;
        }
        spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critic_steps_per_gen: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_every: Option<u64>,
    /// `false` disables early stopping.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_stop: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deterministic: Option<bool>,
}

impl TrainingConfig {
    pub fn resolve(&self, family: Family) -> CliResult<TrainSpec> {
        let mut ts = TrainSpec::for_family(family);
        ts.seed = self
            .seed
            .ok_or_else(|| CliError::Config("training.seed is required".into()))?;
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f.clone() { ts.$f = v; })*};
        }
        set!(max_steps, batch_size, optimizer, learning_rate, critic_steps_per_gen, checkpoint_every, sample_every, deterministic);
        if let Some(c) = &self.convergence {
            ts.convergence = Some(c.clone());
        }
        if self.early_stop == Some(false) {
            ts.convergence = None;
        }
        ts.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(ts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub count: CountConfig,
    /// Share of samples a mode needs to count as covered.
    pub coverage_min: f64,
    /// Mode radius; defaults to three times the largest blob spread.
    pub radius: Option<f64>,
    /// Ring tolerance; defaults to three noise deviations, at least 0.05,
    /// at most half the ring gap.
    pub ring_tol: Option<f64>,
    pub m_ref: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_samples: 1000,
            seed: 0,
            count: CountConfig::default(),
            coverage_min: 0.01,
            radius: None,
            ring_tol: None,
            m_ref: 100_000,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serialises"))
    }

    /// Resolves everything that can be checked without touching data.
    pub fn resolve(&self) -> CliResult<Resolved> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(CliError::Config("name must be non-empty and contain no path separators".into()));
        }
        let source = self.dataset.resolve()?;
        let model = self.model.resolve(&source)?;
        let train = self.training.resolve(model.family)?;
        let n = match &source {
            DataSource::Points { n, .. } | DataSource::Images { n, .. } => *n,
        };
        if train.batch_size > n {
            return Err(CliError::Config(format!("batch_size {} exceeds dataset size {n}", train.batch_size)));
        }
        Ok(Resolved { source, model, train })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub source: DataSource,
    pub model: ModelSpec,
    pub train: TrainSpec,
}
