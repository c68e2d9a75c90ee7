//! Bit-exact model checkpoints.
//!
//! File layout: magic "RLCP", u32 LE format version, u64 LE header length,
//! a JSON header, then one contiguous little-endian f32 blob. The header
//! lists every tensor by name with shape and byte offset into the blob:
//! model parameters under their parameter names, optimizer moments (when
//! saved) under "adam.m.<name>" / "adam.v.<name>". Offsets are relative to
//! the end of the header, so third-party readers need no arithmetic beyond
//! the three fixed-size fields.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{Model, ModelConfig, ModelError};
use crate::optim::{AdamState, ParamSet};
use crate::task::TaskConfig;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RLCP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(String),
    #[error("container: {0}")]
    Container(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the blob section.
    offset: u64,
    /// Number of f32 values.
    count: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    model: ModelConfig,
    task: TaskConfig,
    epoch: u64,
    step: u64,
    tensors: Vec<TensorMeta>,
    adam_step_count: Option<u64>,
}

/// A loaded checkpoint: the model, its task description, the training
/// position, and (optionally) the optimizer state.
pub struct Checkpoint {
    pub model: Model<f32>,
    pub task: TaskConfig,
    pub epoch: u64,
    pub step: u64,
    pub adam: Option<AdamState<f32>>,
}

pub fn save_checkpoint(
    path: &Path,
    model: &Model<f32>,
    task: &TaskConfig,
    epoch: u64,
    step: u64,
    adam: Option<&AdamState<f32>>,
) -> Result<(), CheckpointError> {
    let mut tensors = Vec::new();
    let mut blob: Vec<u8> = Vec::new();
    let put = |name: String, t: &Tensor<f32>, tensors: &mut Vec<TensorMeta>, blob: &mut Vec<u8>| {
        tensors.push(TensorMeta {
            name,
            shape: t.shape().to_vec(),
            offset: blob.len() as u64,
            count: t.len() as u64,
        });
        for &v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    };
    for (name, t) in model.params.iter() {
        put(name.to_string(), t, &mut tensors, &mut blob);
    }
    if let Some(state) = adam {
        for i in 0..model.params.len() {
            put(
                format!("adam.m.{}", model.params.name(i)),
                &state.m[i],
                &mut tensors,
                &mut blob,
            );
        }
        for i in 0..model.params.len() {
            put(
                format!("adam.v.{}", model.params.name(i)),
                &state.v[i],
                &mut tensors,
                &mut blob,
            );
        }
    }
    let header = serde_json::to_vec(&Header {
        version: CHECKPOINT_VERSION,
        model: model.config,
        task: *task,
        epoch,
        step,
        tensors,
        adam_step_count: adam.map(|s| s.step_count),
    })
    .expect("header serializes");

    let mut out = Vec::with_capacity(16 + header.len() + blob.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&blob);
    fs::write(path, out).map_err(|e| CheckpointError::Io(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let buf =
        fs::read(path).map_err(|e| CheckpointError::Io(format!("{}: {e}", path.display())))?;
    if buf.len() < 16 || &buf[..4] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::Container(
            "bad magic, not an RLCP file".into(),
        ));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Container(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let header_len = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
    if 16 + header_len > buf.len() {
        return Err(CheckpointError::Container("truncated header".into()));
    }
    let header: Header = serde_json::from_slice(&buf[16..16 + header_len])
        .map_err(|e| CheckpointError::Container(format!("bad header: {e}")))?;
    let blob = &buf[16 + header_len..];

    let read_tensor = |meta: &TensorMeta| -> Result<Tensor<f32>, CheckpointError> {
        let start = meta.offset as usize;
        let end = start + meta.count as usize * 4;
        if end > blob.len() {
            return Err(CheckpointError::Container(format!(
                "tensor {} overruns the blob",
                meta.name
            )));
        }
        let data: Vec<f32> = blob[start..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::from_vec(&meta.shape, data)
            .map_err(|e| CheckpointError::Container(format!("tensor {}: {e}", meta.name)))
    };

    let mut params = ParamSet::new();
    let mut adam_m = Vec::new();
    let mut adam_v = Vec::new();
    for meta in &header.tensors {
        let t = read_tensor(meta)?;
        if let Some(rest) = meta.name.strip_prefix("adam.m.") {
            let _ = rest;
            adam_m.push(t);
        } else if let Some(rest) = meta.name.strip_prefix("adam.v.") {
            let _ = rest;
            adam_v.push(t);
        } else {
            params.push(meta.name.clone(), t);
        }
    }
    let model = Model::assemble(header.model, params)?;
    let adam = match header.adam_step_count {
        Some(step_count) => {
            if adam_m.len() != model.params.len() || adam_v.len() != model.params.len() {
                return Err(CheckpointError::Container(
                    "optimizer moments do not match parameters".into(),
                ));
            }
            Some(AdamState {
                m: adam_m,
                v: adam_v,
                step_count,
            })
        }
        None => None,
    };
    Ok(Checkpoint {
        model,
        task: header.task,
        epoch: header.epoch,
        step: header.step,
        adam,
    })
}
