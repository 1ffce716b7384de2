use std::path::Path;

use serde::{Deserialize, Serialize};

use super::container::{read_container, sha256_hex, write_container, ContainerHeader};
use crate::engine::Tensor;
use crate::error::{Error, Result};
use crate::nets::{ModelConfig, ModelParams};
use crate::training::{NormStats, SplitSizes};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const CHECKPOINT_FORMAT: &str = "flowsurrogate-checkpoint";

/// Trained weights with everything needed to run inference on new inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub params: ModelParams,
    pub normalization: NormStats,
    /// Physics-loss weight the model was trained with.
    pub lambda: f64,
    /// Dataset split the model was trained on.
    pub split: SplitSizes,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    version: u32,
    format: String,
    model: ModelConfig,
    normalization: NormStats,
    lambda: f64,
    split: SplitSizes,
    tensors: Vec<TensorEntry>,
    payload_sha256: String,
}

impl ContainerHeader for CheckpointHeader {
    fn payload_sha256(&self) -> &str {
        &self.payload_sha256
    }

    fn expected_payload_len(&self) -> u64 {
        self.tensors
            .iter()
            .map(|t| 8 * t.shape.iter().product::<usize>() as u64)
            .sum()
    }
}

pub fn write_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    let mut payload = Vec::with_capacity(8 * ck.params.count());
    let mut tensors = Vec::with_capacity(ck.params.len());
    for (name, t) in ck.params.iter() {
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
        });
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = CheckpointHeader {
        version: CHECKPOINT_VERSION,
        format: CHECKPOINT_FORMAT.into(),
        model: ck.model.clone(),
        normalization: ck.normalization.clone(),
        lambda: ck.lambda,
        split: ck.split,
        tensors,
        payload_sha256: sha256_hex(&payload),
    };
    write_container(path, &header, &payload)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let (header, payload) = read_container::<CheckpointHeader>(path, CHECKPOINT_VERSION)?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(Error::Header {
            path: path.into(),
            detail: format!("format `{}` is not a checkpoint", header.format),
        });
    }
    let mut values = payload.chunks_exact(8).map(|c| {
        let mut b = [0u8; 8];
        b.copy_from_slice(c);
        f64::from_le_bytes(b)
    });
    let mut params = ModelParams::new();
    for entry in header.tensors {
        let n = entry.shape.iter().product();
        let data: Vec<f64> = values.by_ref().take(n).collect();
        params.push(entry.name, Tensor::new(entry.shape, data)?)?;
    }
    Ok(Checkpoint {
        model: header.model,
        params,
        normalization: header.normalization,
        lambda: header.lambda,
        split: header.split,
    })
}
