//! Versioned checkpoint container.
//!
//! Layout: `GANBCKPT` magic, `u32` version, `u64` header length (all
//! little-endian), a JSON header, then one `f32` blob holding every named
//! tensor back to back. Model weights, batch-norm statistics and optimizer
//! moments are all stored, so a loaded state resumes bit-exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ganbench_core::gancore::{build_model, ModelSpec, NamedTensor, Net, Optimizer, OptimizerKind, Tensor};
use ganbench_core::pointgen::AffineTransform;
use ganbench_core::trainer::{GanState, TrainSpec};
use ganbench_core::Error as CoreError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datasets::sha256_hex;
use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 8] = b"GANBCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the blob, in `f32` elements.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerMeta {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub spec: ModelSpec,
    pub spec_hash: String,
    /// SHA-256 over generator and critic weights and statistics only.
    pub weights_hash: String,
    pub step: u64,
    pub train: Option<TrainSpec>,
    pub gen_opt: OptimizerMeta,
    pub critic_opt: OptimizerMeta,
    /// Point datasets: map from data to generator coordinates.
    pub normalization: Option<AffineTransform>,
    pub provenance: BTreeMap<String, String>,
    pub entries: Vec<Entry>,
}

/// Context stored next to the state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckpointExtra {
    pub train: Option<TrainSpec>,
    pub normalization: Option<AffineTransform>,
    pub provenance: BTreeMap<String, String>,
}

pub fn spec_hash(spec: &ModelSpec) -> String {
    sha256_hex(&serde_json::to_vec(spec).expect("spec serialises"))
}

fn net_tensors<'a>(prefix: &str, net: &'a Net<f32>) -> Vec<(String, &'a Tensor<f32>)> {
    let params = net.params.iter().map(|p| (format!("{prefix}.param.{}", p.name), &p.tensor));
    let buffers = net.buffers.iter().map(|b| (format!("{prefix}.buffer.{}", b.name), &b.tensor));
    params.chain(buffers).collect()
}

fn opt_tensors<'a>(prefix: &str, opt: &'a Optimizer<f32>) -> Vec<(String, &'a Tensor<f32>)> {
    let first = opt.first.iter().enumerate().map(|(i, t)| (format!("{prefix}.first.{i}"), t));
    let second = opt.second.iter().enumerate().map(|(i, t)| (format!("{prefix}.second.{i}"), t));
    first.chain(second).collect()
}

fn model_tensors(state: &GanState<f32>) -> Vec<(String, &Tensor<f32>)> {
    let mut all = net_tensors("generator", &state.model.generator);
    all.extend(net_tensors("critic", &state.model.critic));
    all
}

/// Hash of the model weights and statistics, independent of optimizer
/// state, step and provenance.
pub fn weights_hash(state: &GanState<f32>) -> String {
    let mut h = Sha256::new();
    for (name, t) in model_tensors(state) {
        h.update(name.as_bytes());
        for v in &t.data {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

fn meta(opt: &Optimizer<f32>) -> OptimizerMeta {
    OptimizerMeta {
        kind: opt.kind,
        learning_rate: opt.learning_rate,
        steps: opt.steps,
    }
}

pub fn encode(state: &GanState<f32>, extra: &CheckpointExtra) -> Vec<u8> {
    let mut tensors = model_tensors(state);
    tensors.extend(opt_tensors("gen_opt", &state.gen_opt));
    tensors.extend(opt_tensors("critic_opt", &state.critic_opt));
    let mut entries = Vec::with_capacity(tensors.len());
    let mut blob = Vec::new();
    let mut offset = 0;
    for (name, t) in &tensors {
        entries.push(Entry {
            name: name.clone(),
            shape: t.shape.clone(),
            offset,
        });
        offset += t.data.len();
        for v in &t.data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = CheckpointHeader {
        spec: state.model.spec.clone(),
        spec_hash: spec_hash(&state.model.spec),
        weights_hash: weights_hash(state),
        step: state.step,
        train: extra.train.clone(),
        gen_opt: meta(&state.gen_opt),
        critic_opt: meta(&state.critic_opt),
        normalization: extra.normalization.clone(),
        provenance: extra.provenance.clone(),
        entries,
    };
    let json = serde_json::to_vec(&header).expect("header serialises");
    let mut out = Vec::with_capacity(20 + json.len() + blob.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&blob);
    out
}

/// Writes the checkpoint and returns its header.
pub fn save(path: &Path, state: &GanState<f32>, extra: &CheckpointExtra) -> CliResult<CheckpointHeader> {
    let bytes = encode(state, extra);
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &bytes).map_err(CliError::io(&tmp))?;
    fs::rename(&tmp, path).map_err(CliError::io(path))?;
    let (header, _) = split(path, &bytes)?;
    Ok(header)
}

fn split(path: &Path, bytes: &[u8]) -> CliResult<(CheckpointHeader, Vec<f32>)> {
    let bad = |msg: &str| CliError::format(path, msg);
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(bad(&format!("unsupported checkpoint version {version}")));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let json = bytes.get(20..20 + len).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(json).map_err(|e| CliError::format(path, e))?;
    let blob = &bytes[20 + len..];
    if blob.len() % 4 != 0 {
        return Err(bad("truncated tensor blob"));
    }
    let values = blob.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Ok((header, values))
}

fn incompatible(msg: String) -> CliError {
    CliError::Core(CoreError::IncompatibleCheckpoint(msg))
}

fn fill(
    slots: Vec<(String, &mut Tensor<f32>)>,
    entries: &BTreeMap<&str, &Entry>,
    values: &[f32],
) -> CliResult<()> {
    for (name, t) in slots {
        let e = entries.get(name.as_str()).ok_or_else(|| incompatible(format!("missing tensor {name}")))?;
        if e.shape != t.shape {
            return Err(incompatible(format!("{name}: stored {:?}, model expects {:?}", e.shape, t.shape)));
        }
        let data = values
            .get(e.offset..e.offset + t.data.len())
            .ok_or_else(|| incompatible(format!("{name}: blob too short")))?;
        t.data.copy_from_slice(data);
    }
    Ok(())
}

fn net_slots<'a>(prefix: &str, net: &'a mut Net<f32>) -> Vec<(String, &'a mut Tensor<f32>)> {
    let Net { params, buffers, .. } = net;
    let p = params.iter_mut().map(|NamedTensor { name, tensor }| (format!("{prefix}.param.{name}"), tensor));
    let b = buffers.iter_mut().map(|NamedTensor { name, tensor }| (format!("{prefix}.buffer.{name}"), tensor));
    p.chain(b).collect()
}

fn opt_slots<'a>(prefix: &str, opt: &'a mut Optimizer<f32>) -> Vec<(String, &'a mut Tensor<f32>)> {
    let Optimizer { first, second, .. } = opt;
    let f = first.iter_mut().enumerate().map(|(i, t)| (format!("{prefix}.first.{i}"), t));
    let s = second.iter_mut().enumerate().map(|(i, t)| (format!("{prefix}.second.{i}"), t));
    f.chain(s).collect()
}

/// Loads and validates a checkpoint: magic, version, spec hash and every
/// tensor shape against a freshly built model.
pub fn load(path: &Path) -> CliResult<(GanState<f32>, CheckpointHeader)> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    let (header, values) = split(path, &bytes)?;
    if spec_hash(&header.spec) != header.spec_hash {
        return Err(incompatible("spec hash does not match the stored spec".into()));
    }
    let model = build_model::<f32>(&header.spec, 0)?;
    let mut gen_opt = Optimizer::new(header.gen_opt.kind, header.gen_opt.learning_rate, &model.generator.param_tensors());
    let mut critic_opt = Optimizer::new(header.critic_opt.kind, header.critic_opt.learning_rate, &model.critic.param_tensors());
    gen_opt.steps = header.gen_opt.steps;
    critic_opt.steps = header.critic_opt.steps;
    let mut state = GanState {
        model,
        gen_opt,
        critic_opt,
        step: header.step,
    };
    let entries: BTreeMap<&str, &Entry> = header.entries.iter().map(|e| (e.name.as_str(), e)).collect();
    fill(net_slots("generator", &mut state.model.generator), &entries, &values)?;
    fill(net_slots("critic", &mut state.model.critic), &entries, &values)?;
    fill(opt_slots("gen_opt", &mut state.gen_opt), &entries, &values)?;
    fill(opt_slots("critic_opt", &mut state.critic_opt), &entries, &values)?;
    if weights_hash(&state) != header.weights_hash {
        return Err(CliError::format(path, "weights hash mismatch (corrupt blob)"));
    }
    Ok((state, header))
}
