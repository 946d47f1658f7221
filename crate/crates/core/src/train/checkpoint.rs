//! Versioned binary checkpoints.
//!
//! ```text
//! "DSCK"  u32 version  u64 header length  header (JSON)  f32 data (little endian)
//! ```
//!
//! The header holds the model configuration, the name, shape, role and offset
//! of every tensor in the data section, and optionally the full training
//! state (configs, step counters, rng streams). Optimizer moments are stored
//! as tensors next to the parameters they belong to.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Objective, TrainConfig, TrainState};
use crate::error::{Error, Result};
use crate::model::{DualStreamModel, Init, ModelConfig};
use crate::nn::{Adam, AdamState};

pub const MAGIC: &[u8; 4] = b"DSCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Role {
    Param,
    Buffer,
    AdamM,
    AdamV,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    role: Role,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrainingHeader {
    config: TrainConfig,
    objective: Objective,
    adam_step: u64,
    state: TrainState,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    synthesizer_vocab: Vec<String>,
    tensors: Vec<TensorMeta>,
    training: Option<TrainingHeader>,
}

/// Everything needed to resume training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSnapshot {
    pub config: TrainConfig,
    pub objective: Objective,
    pub optimizer: Adam,
    pub state: TrainState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: DualStreamModel,
    pub synthesizer_vocab: Vec<String>,
    pub training: Option<TrainingSnapshot>,
}

pub fn encode(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut tensors = Vec::new();
    let mut data: Vec<f32> = Vec::new();
    let mut push = |name: &str, role: Role, shape: Vec<usize>, values: &[f32]| {
        tensors.push(TensorMeta {
            name: name.to_string(),
            role,
            shape,
            offset: data.len(),
        });
        data.extend_from_slice(values);
    };
    let params = ckpt.model.params_grouped();
    for (_, p) in &params {
        push(&p.name, Role::Param, p.shape.clone(), &p.value);
    }
    for b in ckpt.model.buffers() {
        push(&b.name, Role::Buffer, vec![b.value.len()], &b.value);
    }
    let mut training = None;
    if let Some(t) = &ckpt.training {
        let st = &t.optimizer.state;
        if !st.m.is_empty() {
            if st.m.len() != params.len() {
                return Err(Error::Checkpoint("optimizer state does not match the parameter list".into()));
            }
            for (k, (_, p)) in params.iter().enumerate() {
                push(&p.name, Role::AdamM, p.shape.clone(), &st.m[k]);
                push(&p.name, Role::AdamV, p.shape.clone(), &st.v[k]);
            }
        }
        training = Some(TrainingHeader {
            config: t.config.clone(),
            objective: t.objective.clone(),
            adam_step: st.step,
            state: t.state.clone(),
        });
    }
    let header = Header {
        model: ckpt.model.config.clone(),
        synthesizer_vocab: ckpt.synthesizer_vocab.clone(),
        tensors,
        training,
    };
    let header = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + header.len() + 4 * data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(corrupt("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: VERSION,
        });
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = bytes
        .get(16..16usize.saturating_add(header_len))
        .ok_or_else(|| corrupt("truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| corrupt(format!("bad header: {e}")))?;
    let raw = &bytes[16 + header_len..];
    if raw.len() % 4 != 0 {
        return Err(corrupt("data section is not a whole number of floats"));
    }
    let data: Vec<f32> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let slice = |t: &TensorMeta| -> Result<&[f32]> {
        let len: usize = t.shape.iter().product();
        data.get(t.offset..t.offset + len)
            .ok_or_else(|| corrupt(format!("tensor {} runs past the data section", t.name)))
    };

    let mut config = header.model.clone();
    config.init = Init::Random;
    let mut model = DualStreamModel::new(config, 0)?;
    model.config = header.model.clone();
    let find = |name: &str, role: Role| header.tensors.iter().find(|t| t.name == name && t.role == role);

    let mut m = Vec::new();
    let mut v = Vec::new();
    let has_moments = header.tensors.iter().any(|t| t.role == Role::AdamM);
    for p in model.params_mut() {
        let t = find(&p.name, Role::Param).ok_or_else(|| corrupt(format!("missing tensor {}", p.name)))?;
        if t.shape != p.shape {
            return Err(corrupt(format!("tensor {} has shape {:?}, expected {:?}", p.name, t.shape, p.shape)));
        }
        p.value.copy_from_slice(slice(t)?);
        if has_moments {
            let tm = find(&p.name, Role::AdamM).ok_or_else(|| corrupt(format!("missing moment for {}", p.name)))?;
            let tv = find(&p.name, Role::AdamV).ok_or_else(|| corrupt(format!("missing moment for {}", p.name)))?;
            m.push(slice(tm)?.to_vec());
            v.push(slice(tv)?.to_vec());
        }
    }
    for b in model.buffers_mut() {
        let t = find(&b.name, Role::Buffer).ok_or_else(|| corrupt(format!("missing buffer {}", b.name)))?;
        let values = slice(t)?;
        if values.len() != b.value.len() {
            return Err(corrupt(format!("buffer {} has the wrong length", b.name)));
        }
        b.value.copy_from_slice(values);
    }
    let training = header.training.map(|t| TrainingSnapshot {
        optimizer: Adam {
            config: t.config.optimizer,
            state: AdamState { step: t.adam_step, m, v },
        },
        config: t.config,
        objective: t.objective,
        state: t.state,
    });
    Ok(Checkpoint {
        model,
        synthesizer_vocab: header.synthesizer_vocab,
        training,
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(ckpt)?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Loads only the network from a checkpoint.
pub fn load_model(path: impl AsRef<Path>) -> Result<DualStreamModel> {
    load_checkpoint(path).map(|c| c.model)
}
