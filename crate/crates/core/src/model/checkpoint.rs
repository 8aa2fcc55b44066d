//! `u64` little-endian header length, a JSON header, then every parameter as
//! little-endian `f64` in manifest order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{param_specs, Model, ModelConfig, ModelError, ModelKind, Param, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    /// Offset in `f64` elements from the start of the blob.
    pub offset: usize,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub seed: u64,
    pub step: u64,
    /// Free-form metadata, e.g. how note embeddings were produced.
    #[serde(default)]
    pub extra: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

pub struct Checkpoint {
    pub model: Model,
    pub seed: u64,
    pub step: u64,
    pub extra: serde_json::Value,
}

pub fn write_checkpoint(
    path: &Path,
    model: &Model,
    seed: u64,
    step: u64,
    extra: serde_json::Value,
) -> Result<(), ModelError> {
    std::fs::write(path, checkpoint_bytes(model, seed, step, extra)?)?;
    Ok(())
}

/// Serialized checkpoint: u64 header length, JSON header, then every
/// parameter as little-endian f64 in store order.
pub fn checkpoint_bytes(
    model: &Model,
    seed: u64,
    step: u64,
    extra: serde_json::Value,
) -> Result<Vec<u8>, ModelError> {
    let mut offset = 0;
    let tensors = model
        .params
        .params()
        .iter()
        .map(|p| {
            let e = TensorEntry {
                name: p.name.clone(),
                offset,
                shape: p.value.shape().to_vec(),
            };
            offset += p.value.numel();
            e
        })
        .collect();
    let header = CheckpointHeader {
        kind: model.kind,
        config: model.config.clone(),
        seed,
        step,
        extra,
        tensors,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(8 + json.len() + offset * 8);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for p in model.params.params() {
        for x in p.value.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    let bytes = std::fs::read(path)?;
    let bad = |msg: &str| ModelError::Checkpoint(msg.to_string());
    let len_bytes: [u8; 8] = bytes
        .get(..8)
        .ok_or_else(|| bad("truncated header length"))?
        .try_into()
        .expect("8 bytes");
    let hlen =
        usize::try_from(u64::from_le_bytes(len_bytes)).map_err(|_| bad("header too large"))?;
    let json = bytes
        .get(8..8usize.saturating_add(hlen))
        .ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(json)?;
    header.config.validate()?;
    let blob = &bytes[8 + hlen..];
    if blob.len() % 8 != 0 {
        return Err(bad("blob is not a whole number of f64 values"));
    }
    let values: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let specs = param_specs(header.kind, &header.config);
    if specs.len() != header.tensors.len() {
        return Err(bad("parameter count does not match the model kind"));
    }
    let mut params = Vec::with_capacity(specs.len());
    for spec in &specs {
        let entry = header
            .tensors
            .iter()
            .find(|t| t.name == spec.name)
            .ok_or_else(|| ModelError::Checkpoint(format!("missing parameter {}", spec.name)))?;
        if entry.shape != spec.shape {
            return Err(ModelError::Checkpoint(format!(
                "parameter {} has shape {:?}, expected {:?}",
                spec.name, entry.shape, spec.shape
            )));
        }
        let n: usize = spec.shape.iter().product();
        let data = values.get(entry.offset..entry.offset + n).ok_or_else(|| {
            ModelError::Checkpoint(format!("parameter {} out of bounds", spec.name))
        })?;
        params.push(Param {
            name: spec.name.clone(),
            value: Tensor::new(spec.shape.clone(), data.to_vec())?,
            decay: spec.decay,
        });
    }
    Ok(Checkpoint {
        model: Model {
            kind: header.kind,
            config: header.config,
            params: ParamStore::from_params(params)?,
        },
        seed: header.seed,
        step: header.step,
        extra: header.extra,
    })
}
