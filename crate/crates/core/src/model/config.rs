use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::data::EPISODE_HOURS;

/// Reduction of the per-hour note embeddings fed to the prediction head.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NotesPooling {
    /// Mean over hours with a note; zero when no hour has one.
    #[default]
    MaskedMean,
    /// Mean over all hours.
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hours: usize,
    pub notes_dim: usize,
    pub ts_dim: usize,
    pub notes_enc_dim: usize,
    pub ts_enc_dim: usize,
    pub model_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub head_hidden: Vec<usize>,
    pub pooling: NotesPooling,
    /// Add sinusoidal positions to the hour tokens. Off only for testing.
    pub positions: bool,
    pub lstm_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hours: EPISODE_HOURS,
            notes_dim: 768,
            ts_dim: 76,
            notes_enc_dim: 64,
            ts_enc_dim: 64,
            model_dim: 128,
            layers: 2,
            heads: 4,
            ff_dim: 512,
            head_hidden: vec![64],
            pooling: NotesPooling::MaskedMean,
            positions: true,
            lstm_hidden: 64,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            ("hours", self.hours),
            ("notes_dim", self.notes_dim),
            ("ts_dim", self.ts_dim),
            ("notes_enc_dim", self.notes_enc_dim),
            ("ts_enc_dim", self.ts_enc_dim),
            ("model_dim", self.model_dim),
            ("heads", self.heads),
            ("ff_dim", self.ff_dim),
            ("lstm_hidden", self.lstm_hidden),
        ];
        for (name, d) in dims {
            if d == 0 {
                return Err(ModelError::InvalidConfig(format!(
                    "{name} must be at least 1"
                )));
            }
        }
        if self.head_hidden.contains(&0) {
            return Err(ModelError::InvalidConfig(
                "head hidden dims must be at least 1".into(),
            ));
        }
        if self.model_dim % self.heads != 0 {
            return Err(ModelError::InvalidConfig(format!(
                "model_dim {} is not divisible by heads {}",
                self.model_dim, self.heads
            )));
        }
        if self.positions && self.model_dim % 2 != 0 {
            return Err(ModelError::OddPositionDim(self.model_dim));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }
}
