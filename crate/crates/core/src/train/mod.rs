//! Loss, Adam, the early-stopping training loop and evaluation metrics.

mod metrics;
mod optim;
mod trainer;

pub use metrics::{
    aggregate, aucpr, auroc, confusion, evaluate, f1, AggregateResult, Confusion, EvalResult,
    MeanStd, DEFAULT_THRESHOLD,
};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use trainer::{
    batch_loss, l2_penalty, loss, train, EpochRecord, LogEvent, TrainConfig, TrainOutcome,
};

use crate::model::ModelError;
use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("label {0} is not 0 or 1")]
    InvalidLabel(f64),
    #[error("metric undefined: only one class present")]
    SingleClass,
    #[error("metric undefined: no positive labels")]
    NoPositives,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    Diverged {
        epoch: usize,
        step: u64,
        detail: String,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
