//! Multimodal transformer for in-hospital mortality prediction from hour-aligned
//! clinical-note embeddings and one-hot encoded clinical-variable time series,
//! with Integrated Gradients over note tokens and Shapley values over variables.

pub mod attribution;
pub mod data;
pub mod model;
pub mod notes;
pub mod tensor;
pub mod train;
