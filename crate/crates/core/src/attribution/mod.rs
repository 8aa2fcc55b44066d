//! Integrated Gradients over note embeddings and Shapley values over clinical
//! variables.

mod ig;
mod shapley;
mod tokens;
mod variables;

pub use ig::{integrated_gradients, notes_integrated_gradients, IgConfig, IgResult};
pub use shapley::{shapley_exact, shapley_sampled, Game, SampledShapley, MAX_EXACT_PLAYERS};
pub use tokens::{
    attribute_note_hours, attribute_note_tokens, is_filtered, postprocess_tokens, rank_words,
    top_word_frequency, Granularity, HourScore, NoteAttribution, TokenScore, WordRank, SEPARATORS,
};
pub use variables::{
    variable_shapley, with_absent_variables, EpisodeShapley, ShapleyEstimator, ShapleyReport,
    VariableGame, VariableSummary,
};

use crate::model::ModelError;
use crate::notes::NotesError;
use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum AttributionError {
    #[error("integrated gradients needs at least {min} steps, got {steps}")]
    InvalidSteps { steps: usize, min: usize },
    #[error("input and baseline shapes differ: {input:?} vs {baseline:?}")]
    BaselineShape {
        input: Vec<usize>,
        baseline: Vec<usize>,
    },
    #[error("non-finite gradient on the integration path at alpha {alpha}")]
    NonFiniteGradient { alpha: f64 },
    #[error("token-level granularity unavailable: note embeddings are opaque per-hour vectors")]
    GranularityUnavailable,
    #[error("hour {hour}: stored note embedding does not match its tokens")]
    EmbeddingMismatch { hour: usize },
    #[error("exact Shapley supports at most {max} players, got {n}; use the sampled estimator")]
    TooManyPlayers { n: usize, max: usize },
    #[error("sampled Shapley needs at least one permutation")]
    NoPermutations,
    #[error("value function returned {got} values for {expected} coalitions")]
    ValueCount { expected: usize, got: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Notes(#[from] NotesError),
}
