//! "WSC1" checkpoint container: model kind, config snapshot, named parameter
//! tensors, Adam moments, and the (seed, next_epoch) pair that replays the
//! training schedule on resume. A trailing SHA-256 guards integrity.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{push_f32s, IoFormatError, Reader};
use crate::models::{AeParams, Model, ModelConfig, ModelError, ModelKind, VaeParams};
use crate::nn::{AdamState, TensorBuffer};
use crate::training::{LossTrace, TrainConfig};

const MAGIC: &[u8; 4] = b"WSC1";
const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointHeader {
    version: u8,
    kind: ModelKind,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    /// Training resumes at this epoch; together with train_cfg.seed it
    /// reconstructs every RNG stream.
    next_epoch: u32,
    dataset_hash: String,
    trace: LossTrace,
    adam_step: u64,
    adam_lr: f64,
    adam_beta1: f64,
    adam_beta2: f64,
    adam_eps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub model_cfg: ModelConfig,
    pub train_cfg: TrainConfig,
    pub next_epoch: u32,
    pub dataset_hash: String,
    pub trace: LossTrace,
    pub tensors: Vec<(String, TensorBuffer<f32>)>,
    pub adam: AdamState,
}

impl Checkpoint {
    pub fn snapshot(
        model: &Model,
        adam: &AdamState,
        train_cfg: &TrainConfig,
        next_epoch: u32,
        trace: &LossTrace,
        dataset_hash: String,
    ) -> Self {
        Self {
            kind: model.kind(),
            model_cfg: *model.cfg(),
            train_cfg: *train_cfg,
            next_epoch,
            dataset_hash,
            trace: trace.clone(),
            tensors: model
                .named_tensors()
                .into_iter()
                .map(|(name, t)| (name, t.clone()))
                .collect(),
            adam: adam.clone(),
        }
    }

    /// Rehydrates the stored model, rejecting unknown or missing tensors.
    pub fn build_model(&self) -> Result<Model, ModelError> {
        let mut model = match self.kind {
            ModelKind::Vae => Model::Vae(VaeParams::init(self.model_cfg, 0)?),
            ModelKind::Ae => Model::Ae(AeParams::init(self.model_cfg, 0)?),
        };
        let mut named = model.named_tensors_mut();
        for (name, stored) in &self.tensors {
            let slot = named
                .iter_mut()
                .find(|(n, _)| n == name)
                .ok_or_else(|| ModelError::UnknownTensor(name.clone()))?;
            if slot.1.dims() != stored.dims() {
                return Err(ModelError::TensorDims {
                    name: name.clone(),
                    got: stored.dims().to_vec(),
                    expected: slot.1.dims().to_vec(),
                });
            }
            *slot.1 = stored.clone();
        }
        for (name, _) in &named {
            if !self.tensors.iter().any(|(n, _)| n == name) {
                return Err(ModelError::MissingTensor(name.clone()));
            }
        }
        Ok(model)
    }

    /// As [`build_model`], but fails with KindMismatch when the caller
    /// expects the other architecture.
    pub fn build_model_expecting(&self, expected: ModelKind) -> Result<Model, IoFormatError> {
        if self.kind != expected {
            return Err(IoFormatError::KindMismatch {
                expected: expected.to_string(),
                found: self.kind.to_string(),
            });
        }
        self.build_model()
            .map_err(|e| IoFormatError::Malformed(format!("checkpoint does not fit model: {e}")))
    }
}

pub fn write_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), IoFormatError> {
    let header = CheckpointHeader {
        version: VERSION,
        kind: ckpt.kind,
        model_cfg: ckpt.model_cfg,
        train_cfg: ckpt.train_cfg,
        next_epoch: ckpt.next_epoch,
        dataset_hash: ckpt.dataset_hash.clone(),
        trace: ckpt.trace.clone(),
        adam_step: ckpt.adam.step,
        adam_lr: ckpt.adam.lr,
        adam_beta1: ckpt.adam.beta1,
        adam_beta2: ckpt.adam.beta2,
        adam_eps: ckpt.adam.eps,
    };
    let header_json = serde_json::to_vec(&header)?;

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    out.extend_from_slice(&(ckpt.tensors.len() as u32).to_le_bytes());
    for (name, t) in &ckpt.tensors {
        let name_bytes = name.as_bytes();
        out.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        out.extend_from_slice(name_bytes);
        out.push(t.dims().len() as u8);
        for &d in t.dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        push_f32s(&mut out, t.data());
    }
    if ckpt.adam.m.len() != ckpt.tensors.len() {
        return Err(IoFormatError::Malformed(format!(
            "adam has {} moment buffers for {} tensors",
            ckpt.adam.m.len(),
            ckpt.tensors.len()
        )));
    }
    for (m, v) in ckpt.adam.m.iter().zip(&ckpt.adam.v) {
        push_f32s(&mut out, m);
        push_f32s(&mut out, v);
    }
    let digest = super::config::sha256_bytes(&out);
    out.extend_from_slice(&digest);
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, IoFormatError> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 4 + 32 || &bytes[..4] != MAGIC {
        return Err(IoFormatError::BadMagic { expected: "WSC1" });
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if super::config::sha256_bytes(body) != digest {
        return Err(IoFormatError::ManifestMismatch("checkpoint checksum differs".into()));
    }

    let mut r = Reader::new(body);
    r.take(4)?;
    let header_len = r.u32()? as usize;
    let header: CheckpointHeader = serde_json::from_slice(r.take(header_len)?)?;
    if header.version != VERSION {
        return Err(IoFormatError::Malformed(format!(
            "unsupported checkpoint version {}",
            header.version
        )));
    }
    let tensor_count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(tensor_count);
    for k in 0..tensor_count {
        let name_len = r.u16()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|e| IoFormatError::Malformed(format!("tensor {k} name: {e}")))?;
        let ndims = r.u8()? as usize;
        let mut dims = Vec::with_capacity(ndims);
        for _ in 0..ndims {
            dims.push(r.u32()? as usize);
        }
        let len: usize = dims.iter().product();
        let data = r.f32_vec(len).map_err(|_| IoFormatError::TruncatedFile {
            sample: k,
            detail: format!("tensor {name} wants {len} f32s"),
        })?;
        tensors.push((name, TensorBuffer::from_vec(dims, data)));
    }
    let mut adam = AdamState {
        step: header.adam_step,
        lr: header.adam_lr,
        beta1: header.adam_beta1,
        beta2: header.adam_beta2,
        eps: header.adam_eps,
        m: Vec::with_capacity(tensor_count),
        v: Vec::with_capacity(tensor_count),
    };
    for (k, (_, t)) in tensors.iter().enumerate() {
        adam.m.push(r.f32_vec(t.len()).map_err(|_| IoFormatError::TruncatedFile {
            sample: k,
            detail: "adam first moment".into(),
        })?);
        adam.v.push(r.f32_vec(t.len()).map_err(|_| IoFormatError::TruncatedFile {
            sample: k,
            detail: "adam second moment".into(),
        })?);
    }
    if r.remaining() != 0 {
        return Err(IoFormatError::Malformed(format!("{} trailing bytes", r.remaining())));
    }

    Ok(Checkpoint {
        kind: header.kind,
        model_cfg: header.model_cfg,
        train_cfg: header.train_cfg,
        next_epoch: header.next_epoch,
        dataset_hash: header.dataset_hash,
        trace: header.trace,
        tensors,
        adam,
    })
}
