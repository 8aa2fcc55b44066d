//! The multimodal transformer, its single-modality and LSTM baselines, and
//! the checkpoint format.

mod checkpoint;
mod config;
mod forward;
mod input;
mod params;
mod positions;

pub use checkpoint::{
    checkpoint_bytes, read_checkpoint, write_checkpoint, Checkpoint, CheckpointHeader, TensorEntry,
};
pub use config::{ModelConfig, NotesPooling};
pub use forward::{
    encode_streams, forward_logits, lstm_forward, pool_notes, transformer_forward, EncodedStreams,
};
pub use input::{prepare_inputs, stack, Batch, ModelInput, NotesSource};
pub use params::{param_specs, Bound, Init, Param, ParamSpec, ParamStore};
pub use positions::sinusoidal_positions;

use serde::{Deserialize, Serialize};

use crate::data::DataError;
use crate::notes::NotesError;
use crate::tensor::{Tape, TensorError};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("sinusoidal positions need an even dimension, got {0}")]
    OddPositionDim(usize),
    #[error("unknown model kind {0:?}")]
    UnknownKind(String),
    #[error("input shapes notes {notes:?}, ts {ts:?}, mask {mask} do not match the config")]
    InputShape {
        notes: Vec<usize>,
        ts: Vec<usize>,
        mask: usize,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Notes(#[from] NotesError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Fusion,
    LstmVars,
    TransformerVars,
    NotesOnly,
    LstmFusion,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Fusion,
        ModelKind::LstmFusion,
        ModelKind::LstmVars,
        ModelKind::TransformerVars,
        ModelKind::NotesOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Fusion => "fusion",
            ModelKind::LstmVars => "lstm_vars",
            ModelKind::TransformerVars => "transformer_vars",
            ModelKind::NotesOnly => "notes_only",
            ModelKind::LstmFusion => "lstm_fusion",
        }
    }

    pub fn uses_notes(self) -> bool {
        !matches!(self, ModelKind::LstmVars | ModelKind::TransformerVars)
    }

    pub fn uses_variables(self) -> bool {
        self != ModelKind::NotesOnly
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ModelError::UnknownKind(s.to_string()))
    }
}

/// A model kind, its config and its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl Model {
    pub fn new(kind: ModelKind, config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let params = ParamStore::init(&param_specs(kind, &config), seed);
        Ok(Self {
            kind,
            config,
            params,
        })
    }

    /// Logits for a stacked batch with parameters bound as constants.
    pub fn logits(&self, batch: &Batch) -> Result<Vec<f64>, ModelError> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let notes = tape.constant(batch.notes.clone());
        let ts = tape.constant(batch.ts.clone());
        let out = forward_logits(
            &mut tape,
            &p,
            self.kind,
            &self.config,
            notes,
            ts,
            &batch.mask,
        )?;
        Ok(tape.value(out).data().to_vec())
    }

    /// Mortality probabilities, evaluated in chunks of `batch_size`.
    pub fn predict(
        &self,
        inputs: &[ModelInput],
        batch_size: usize,
    ) -> Result<Vec<f64>, ModelError> {
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(batch_size.max(1)) {
            let refs: Vec<&ModelInput> = chunk.iter().collect();
            let batch = stack(&refs, self.config.hours)?;
            out.extend(self.logits(&batch)?.into_iter().map(sigmoid));
        }
        Ok(out)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
