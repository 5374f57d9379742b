//! Alternating adversarial training, convergence detection and transfer.
//!
//! One *step* is one generator update, preceded by `critic_steps_per_gen`
//! critic updates. Each step draws all of its randomness (latents, dropout
//! masks, penalty interpolation weights) from the stream
//! `(seed, TrainStep, step)`, and real batches come from per-epoch
//! permutations `(seed, Batches, epoch)`; a run resumed from a checkpoint at
//! step `s` therefore continues exactly as the uninterrupted run would have.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gancore::losses::{self, discriminator_accuracy, gradient_penalty};
use crate::gancore::{build_model, Family, GanPair, ModelSpec, Net, Optimizer, OptimizerKind, Phase, Scalar, Tape, Tensor};
use crate::pointgen::PointDataset;
use crate::rng::{self, Domain, StreamRng};
use crate::scenegen::{Image, ImageDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvergenceSpec {
    /// Number of trailing critic records examined.
    pub window: usize,
    pub band: f64,
    /// Check every this many generator steps.
    pub check_every: u64,
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        ConvergenceSpec {
            window: 2000,
            band: 0.05,
            check_every: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub critic_steps_per_gen: u32,
    /// Budget in generator steps.
    pub max_steps: u64,
    pub batch_size: usize,
    pub seed: u64,
    /// `None` disables early stopping.
    pub convergence: Option<ConvergenceSpec>,
    /// Checkpoint cadence in generator steps (0 = only at stop).
    pub checkpoint_every: u64,
    /// Sample-snapshot cadence in generator steps (0 = never).
    pub sample_every: u64,
    /// Recorded in manifests; the built-in backend is always deterministic.
    pub deterministic: bool,
}

impl TrainSpec {
    /// Wasserstein families: RMSProp at 5e−5 with five critic updates per
    /// generator update. Others: Adam at 2e−4, one update each.
    pub fn for_family(family: Family) -> Self {
        let (optimizer, learning_rate, critic_steps_per_gen) = if family.is_wasserstein() {
            (OptimizerKind::Rmsprop, 5e-5, 5)
        } else {
            (OptimizerKind::Adam, 2e-4, 1)
        };
        TrainSpec {
            optimizer,
            learning_rate,
            critic_steps_per_gen,
            max_steps: 150_000,
            batch_size: 64,
            seed: 0,
            convergence: Some(ConvergenceSpec::default()),
            checkpoint_every: 5000,
            sample_every: 0,
            deterministic: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(invalid!("batch_size must be positive"));
        }
        if self.critic_steps_per_gen == 0 {
            return Err(invalid!("critic_steps_per_gen must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid!("learning_rate must be positive"));
        }
        if let Some(c) = &self.convergence {
            if c.window == 0 || !(c.band > 0.0) || c.check_every == 0 {
                return Err(invalid!("convergence window, band and cadence must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Critic,
    Generator,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Critic => "critic",
            Role::Generator => "generator",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based generator step the record belongs to.
    pub step: u64,
    pub role: Role,
    /// Critic records hold the adversarial critic loss without the penalty.
    pub loss: f64,
    /// Discriminator accuracy (GAN families, critic records only).
    pub accuracy: Option<f64>,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxSteps,
    Converged,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<StepRecord>,
    /// Generator steps at which checkpoints were emitted.
    pub checkpoints: Vec<u64>,
    pub stop_reason: Option<StopReason>,
    /// Step the run started from (non-zero when resumed).
    pub start_step: u64,
    /// Source description when the run is a transfer fine-tune.
    pub transfer_from: Option<String>,
}

impl TrainHistory {
    pub fn count(&self, role: Role) -> usize {
        self.records.iter().filter(|r| r.role == role).count()
    }
}

/// Training samples as one tensor `[N, sample_shape...]` in generator range.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainData<T> {
    pub samples: Tensor<T>,
}

impl<T: Scalar> TrainData<T> {
    /// Uses the points as stored; normalise them first.
    pub fn from_points(ds: &PointDataset) -> Self {
        TrainData {
            samples: Tensor::new(
                alloc::vec![ds.n, ds.d],
                ds.points.iter().map(|&x| T::of(x)).collect(),
            ),
        }
    }

    /// Converts `H×W×C` images to `[N, C, H, W]`.
    pub fn from_images(ds: &ImageDataset) -> Self {
        let (h, w, c) = (ds.height, ds.width, ds.channels);
        let mut data = Vec::with_capacity(ds.images.len());
        for img in ds.images.chunks_exact(h * w * c) {
            for ch in 0..c {
                for px in 0..h * w {
                    data.push(T::of(img[px * c + ch] as f64));
                }
            }
        }
        TrainData {
            samples: Tensor::new(alloc::vec![ds.n, c, h, w], data),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.shape.first().copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.samples.shape[1..]
    }
}

/// Converts a generator batch `[N, C, H, W]` into `H×W×C` images.
pub fn tensor_to_images<T: Scalar>(t: &Tensor<T>) -> Vec<Image> {
    let (n, c, h, w) = (t.shape[0], t.shape[1], t.shape[2], t.shape[3]);
    let per = c * h * w;
    (0..n)
        .map(|i| {
            let src = &t.data[i * per..(i + 1) * per];
            let mut data = alloc::vec![0f32; per];
            for ch in 0..c {
                for px in 0..h * w {
                    data[px * c + ch] = src[ch * h * w + px].f64() as f32;
                }
            }
            Image {
                height: h,
                width: w,
                channels: c,
                data,
            }
        })
        .collect()
}

/// Everything needed to continue a run.
#[derive(Debug, Clone, PartialEq)]
pub struct GanState<T> {
    pub model: GanPair<T>,
    pub gen_opt: Optimizer<T>,
    pub critic_opt: Optimizer<T>,
    /// Completed generator steps.
    pub step: u64,
}

impl<T: Scalar> GanState<T> {
    pub fn new(spec: &ModelSpec, ts: &TrainSpec, init_seed: u64) -> Result<Self> {
        let model = build_model::<T>(spec, init_seed)?;
        Ok(Self::from_model(model, ts))
    }

    /// Wraps a model with fresh optimizer state at step 0.
    pub fn from_model(model: GanPair<T>, ts: &TrainSpec) -> Self {
        let gen_opt = Optimizer::new(ts.optimizer, ts.learning_rate, &model.generator.param_tensors());
        let critic_opt = Optimizer::new(ts.optimizer, ts.learning_rate, &model.critic.param_tensors());
        GanState {
            model,
            gen_opt,
            critic_opt,
            step: 0,
        }
    }
}

/// Hooks for checkpoints, sample snapshots and wall-clock time.
pub trait TrainObserver<T> {
    fn elapsed_ms(&self) -> u64 {
        0
    }

    /// Called every `checkpoint_every` steps and once more when the run stops
    /// (`final_checkpoint = true`).
    fn on_checkpoint(&mut self, _state: &GanState<T>, _history: &TrainHistory, _final_checkpoint: bool) -> Result<()> {
        Ok(())
    }

    fn on_samples(&mut self, _state: &mut GanState<T>) -> Result<()> {
        Ok(())
    }
}

pub struct NoopObserver;

impl<T> TrainObserver<T> for NoopObserver {}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<T> {
    pub state: GanState<T>,
    pub history: TrainHistory,
}

/// Seed-determined batch order: epoch permutations, drop-last batching.
struct BatchSampler {
    seed: u64,
    n: usize,
    batch: usize,
    epoch: Option<u64>,
    perm: Vec<usize>,
}

impl BatchSampler {
    fn new(seed: u64, n: usize, batch: usize) -> Self {
        BatchSampler {
            seed,
            n,
            batch,
            epoch: None,
            perm: Vec::new(),
        }
    }

    fn indices(&mut self, counter: u64) -> &[usize] {
        let per_epoch = (self.n / self.batch) as u64;
        let epoch = counter / per_epoch;
        if self.epoch != Some(epoch) {
            self.perm = (0..self.n).collect();
            rng::shuffle(&mut rng::stream(self.seed, Domain::Batches, epoch), &mut self.perm);
            self.epoch = Some(epoch);
        }
        let start = (counter % per_epoch) as usize * self.batch;
        &self.perm[start..start + self.batch]
    }
}

pub fn latent_batch<T: Scalar>(rng: &mut dyn RngCore, n: usize, dim: usize) -> Tensor<T> {
    Tensor::new(alloc::vec![n, dim], (0..n * dim).map(|_| T::of(rng::normal(rng))).collect())
}

fn apply_update<T: Scalar>(net: &mut Net<T>, opt: &mut Optimizer<T>, tape: &Tape<T>, grads: &[crate::gancore::Var]) {
    let g: Vec<&Tensor<T>> = grads.iter().map(|v| tape.value(*v)).collect();
    let mut p: Vec<&mut Tensor<T>> = net.params.iter_mut().map(|p| &mut p.tensor).collect();
    opt.step(&mut p, &g);
}

fn critic_update<T: Scalar>(state: &mut GanState<T>, real: Tensor<T>, rng: &mut StreamRng) -> Result<(f64, Option<f64>)> {
    let spec = state.model.spec.clone();
    let n = real.shape[0];
    let z = latent_batch::<T>(rng, n, spec.latent_dim);
    let fake = state.model.generator.run(z, &mut Phase::train(rng));
    let critic = &mut state.model.critic;
    let mut tape = Tape::new();
    let cp = critic.bind(&mut tape);
    let real_v = tape.leaf(real.clone());
    let fake_v = tape.leaf(fake.clone());
    let s_real = critic.forward(&mut tape, &cp, real_v, &mut Phase::train(rng));
    let s_fake = critic.forward(&mut tape, &cp, fake_v, &mut Phase::train(rng));
    let (total, loss, accuracy) = if spec.family.is_wasserstein() {
        let l = losses::wasserstein_losses(&mut tape, s_real, s_fake);
        let pen = gradient_penalty(&mut tape, critic, &cp, &real, &fake, T::of(spec.gp_lambda), rng)?;
        let total = tape.add(l.d_loss, pen);
        (total, tape.item(l.d_loss).f64(), None)
    } else {
        let l = losses::vanilla_losses(&mut tape, s_real, s_fake);
        let acc = discriminator_accuracy(tape.value(s_real), tape.value(s_fake));
        (l.d_loss, tape.item(l.d_loss).f64(), Some(acc))
    };
    let total_v = tape.item(total).f64();
    if !total_v.is_finite() {
        return Ok((total_v, accuracy));
    }
    let grads = tape.grad(total, &cp);
    apply_update(critic, &mut state.critic_opt, &tape, &grads);
    Ok((loss, accuracy))
}

fn generator_update<T: Scalar>(state: &mut GanState<T>, n: usize, rng: &mut StreamRng) -> f64 {
    let family = state.model.spec.family;
    let latent = state.model.spec.latent_dim;
    let GanPair { generator, critic, .. } = &mut state.model;
    let mut tape = Tape::new();
    let gp = generator.bind(&mut tape);
    let cp = critic.bind(&mut tape);
    let z = tape.leaf(latent_batch::<T>(rng, n, latent));
    let fake = generator.forward(&mut tape, &gp, z, &mut Phase::train(rng));
    let mut phase = Phase {
        training: true,
        update_stats: false,
        rng: Some(rng),
    };
    let scores = critic.forward(&mut tape, &cp, fake, &mut phase);
    let loss = if family.is_wasserstein() {
        losses::wasserstein_losses(&mut tape, scores, scores).g_loss
    } else {
        losses::vanilla_losses(&mut tape, scores, scores).g_loss
    };
    let value = tape.item(loss).f64();
    if value.is_finite() {
        let grads = tape.grad(loss, &gp);
        apply_update(generator, &mut state.gen_opt, &tape, &grads);
    }
    value
}

/// Builds the model (initialised from `ts.seed`) and trains it.
pub fn train<T: Scalar>(
    spec: &ModelSpec,
    ts: &TrainSpec,
    data: &TrainData<T>,
    observer: &mut dyn TrainObserver<T>,
) -> Result<TrainOutcome<T>> {
    ts.validate()?;
    check_data(spec, ts, data)?;
    let state = GanState::new(spec, ts, ts.seed)?;
    train_from(state, ts, data, observer, TrainHistory::default())
}

fn check_data<T: Scalar>(spec: &ModelSpec, ts: &TrainSpec, data: &TrainData<T>) -> Result<()> {
    if data.is_empty() {
        return Err(invalid!("training data is empty"));
    }
    if ts.batch_size > data.len() {
        return Err(invalid!("batch_size {} exceeds dataset size {}", ts.batch_size, data.len()));
    }
    if data.sample_shape() != &spec.output.sample_shape()[..] {
        return Err(Error::ShapeMismatch(format!(
            "data samples {:?} vs model output {:?}",
            data.sample_shape(),
            spec.output.sample_shape()
        )));
    }
    Ok(())
}

/// Continues training `state` until `ts.max_steps` generator steps have been
/// completed in total, or until convergence.
pub fn train_from<T: Scalar>(
    mut state: GanState<T>,
    ts: &TrainSpec,
    data: &TrainData<T>,
    observer: &mut dyn TrainObserver<T>,
    mut history: TrainHistory,
) -> Result<TrainOutcome<T>> {
    ts.validate()?;
    check_data(&state.model.spec, ts, data)?;
    let family = state.model.spec.family;
    let critic_steps = ts.critic_steps_per_gen as u64;
    let mut batches = BatchSampler::new(ts.seed, data.len(), ts.batch_size);
    history.start_step = state.step;
    let mut stop = StopReason::MaxSteps;
    let non_finite = |step: u64, role: Role, history: &TrainHistory| Error::NonFiniteLoss {
        step,
        role: String::from(role.as_str()),
        last_checkpoint: history.checkpoints.last().copied(),
    };
    while state.step < ts.max_steps {
        let step = state.step + 1;
        let mut rng = rng::stream(ts.seed, Domain::TrainStep, state.step);
        for k in 0..critic_steps {
            let idx = batches.indices(state.step * critic_steps + k).to_vec();
            let real = data.samples.gather_rows(&idx);
            let (loss, accuracy) = critic_update(&mut state, real, &mut rng)?;
            if !loss.is_finite() {
                return Err(non_finite(step, Role::Critic, &history));
            }
            history.records.push(StepRecord {
                step,
                role: Role::Critic,
                loss,
                accuracy,
                wall_ms: observer.elapsed_ms(),
            });
        }
        let loss = generator_update(&mut state, ts.batch_size, &mut rng);
        if !loss.is_finite() {
            return Err(non_finite(step, Role::Generator, &history));
        }
        history.records.push(StepRecord {
            step,
            role: Role::Generator,
            loss,
            accuracy: None,
            wall_ms: observer.elapsed_ms(),
        });
        state.step = step;
        if ts.checkpoint_every > 0 && step % ts.checkpoint_every == 0 && step < ts.max_steps {
            history.checkpoints.push(step);
            observer.on_checkpoint(&state, &history, false)?;
        }
        if ts.sample_every > 0 && step % ts.sample_every == 0 {
            observer.on_samples(&mut state)?;
        }
        if let Some(c) = &ts.convergence {
            if step % c.check_every == 0 && convergence_check(&history, family, c.window, c.band) {
                stop = StopReason::Converged;
                break;
            }
        }
    }
    history.stop_reason = Some(stop);
    if history.checkpoints.last() != Some(&state.step) {
        history.checkpoints.push(state.step);
    }
    observer.on_checkpoint(&state, &history, true)?;
    Ok(TrainOutcome { state, history })
}

/// Whether the trailing `window` critic records look converged.
///
/// GAN families: the mean discriminator accuracy lies within `0.5 ± band`
/// and no single record deviates from 0.5 by more than `2·band`.
/// Wasserstein families: the mean `|critic loss|` of the last window differs
/// from that of the window before it by less than `band` (relative).
/// Too little history means "not converged".
pub fn convergence_check(h: &TrainHistory, family: Family, window: usize, band: f64) -> bool {
    if window == 0 {
        return false;
    }
    if family.is_wasserstein() {
        let losses: Vec<f64> = h.records.iter().filter(|r| r.role == Role::Critic).map(|r| r.loss.abs()).collect();
        if losses.len() < 2 * window {
            return false;
        }
        let len = losses.len();
        let last = losses[len - window..].iter().sum::<f64>() / window as f64;
        let prev = losses[len - 2 * window..len - window].iter().sum::<f64>() / window as f64;
        (last - prev).abs() / prev.max(1e-12) < band
    } else {
        let acc: Vec<f64> = h.records.iter().filter_map(|r| r.accuracy).collect();
        if acc.len() < window {
            return false;
        }
        let tail = &acc[acc.len() - window..];
        let mean = tail.iter().sum::<f64>() / window as f64;
        let max_dev = tail.iter().map(|a| (a - 0.5).abs()).fold(0.0, f64::max);
        (mean - 0.5).abs() <= band && max_dev <= 2.0 * band
    }
}

/// Continues training a loaded model on a new dataset. All weights are kept;
/// optimizer state and the step counter start fresh and the history is
/// tagged with `source`.
pub fn transfer_finetune<T: Scalar>(
    model: GanPair<T>,
    source: &str,
    data: &TrainData<T>,
    ts: &TrainSpec,
    observer: &mut dyn TrainObserver<T>,
) -> Result<TrainOutcome<T>> {
    if data.sample_shape() != &model.spec.output.sample_shape()[..] {
        return Err(Error::IncompatibleCheckpoint(format!(
            "checkpoint emits {:?} samples but the target data holds {:?}",
            model.spec.output.sample_shape(),
            data.sample_shape()
        )));
    }
    let state = GanState::from_model(model, ts);
    let history = TrainHistory {
        transfer_from: Some(String::from(source)),
        ..Default::default()
    };
    train_from(state, ts, data, observer, history)
}

/// `n` generator samples in generator coordinates (eval-mode batch norm),
/// from latents drawn on stream `(seed, Snapshot, 0)`.
pub fn snapshot_samples<T: Scalar>(generator: &mut Net<T>, n: usize, seed: u64) -> Tensor<T> {
    const CHUNK: usize = 256;
    let latent = generator.input_shape[0];
    let mut rng = rng::stream(seed, Domain::Snapshot, 0);
    let z = latent_batch::<T>(&mut rng, n, latent);
    let out_shape = generator.output_shape().expect("generator shape");
    let per: usize = out_shape.iter().product();
    let mut data = Vec::with_capacity(n * per);
    let mut i = 0;
    while i < n {
        let m = CHUNK.min(n - i);
        let zc = Tensor::new(alloc::vec![m, latent], z.data[i * latent..(i + m) * latent].to_vec());
        data.extend(generator.run(zc, &mut Phase::eval()).data);
        i += m;
    }
    let mut shape = alloc::vec![n];
    shape.extend(out_shape);
    Tensor::new(shape, data)
}

/// Generator samples mapped back to data coordinates, row-major.
pub fn snapshot_points<T: Scalar>(
    generator: &mut Net<T>,
    n: usize,
    seed: u64,
    normalization: Option<&crate::pointgen::AffineTransform>,
) -> Vec<f64> {
    let raw: Vec<f64> = snapshot_samples(generator, n, seed).data.iter().map(|v| v.f64()).collect();
    match normalization {
        Some(tf) => tf.invert_all(&raw),
        None => raw,
    }
}

/// Generator samples as images; the Tanh range already is the pixel scale.
pub fn snapshot_images<T: Scalar>(generator: &mut Net<T>, n: usize, seed: u64) -> Vec<Image> {
    tensor_to_images(&snapshot_samples(generator, n, seed))
}

/// Adapts a generator to the evaluator's image-source interface.
pub struct GeneratorSampler<'a, T> {
    pub generator: &'a mut Net<T>,
}

impl<T: Scalar> crate::evaluator::ImageSource for GeneratorSampler<'_, T> {
    fn sample_images(&mut self, n: usize, seed: u64) -> Vec<Image> {
        snapshot_images(self.generator, n, seed)
    }
}
