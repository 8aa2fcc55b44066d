use crate::data::{encode_variables, ClinicalEpisode, VariableSchema};
use crate::notes::{align_to_hours, NoteEmbedder, NotesEmbeddingSequence, NotesError};
use crate::tensor::Tensor;

use super::ModelError;

/// Dense model inputs for one episode.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInput {
    pub id: String,
    pub label: f64,
    /// `L × D1`, row-major.
    pub notes: Vec<f64>,
    /// `L × D2`, row-major.
    pub ts: Vec<f64>,
    /// Note presence per hour, 0 or 1.
    pub mask: Vec<f64>,
}

/// Where the per-hour note embeddings come from.
pub enum NotesSource<'a> {
    Embedder(&'a dyn NoteEmbedder),
    Precomputed(&'a std::collections::BTreeMap<String, NotesEmbeddingSequence>),
}

impl ModelInput {
    pub fn from_parts(
        episode: &ClinicalEpisode,
        notes: &NotesEmbeddingSequence,
        schema: &VariableSchema,
    ) -> Result<Self, ModelError> {
        if notes.hours != schema.hours {
            return Err(ModelError::Notes(NotesError::DimensionMismatch {
                expected: schema.hours,
                actual: notes.hours,
            }));
        }
        let ts = encode_variables(episode, schema)?;
        Ok(Self {
            id: episode.id.clone(),
            label: f64::from(episode.label),
            notes: notes.data.clone(),
            ts: ts.data,
            mask: notes.mask(),
        })
    }
}

pub fn prepare_inputs(
    episodes: &[ClinicalEpisode],
    schema: &VariableSchema,
    source: &NotesSource,
) -> Result<Vec<ModelInput>, ModelError> {
    episodes
        .iter()
        .map(|ep| {
            let notes = match source {
                NotesSource::Embedder(e) => align_to_hours(&ep.note_events, schema.hours, *e)?,
                NotesSource::Precomputed(map) => map
                    .get(&ep.id)
                    .cloned()
                    .ok_or_else(|| NotesError::MissingEpisode(ep.id.clone()))?,
            };
            ModelInput::from_parts(ep, &notes, schema)
        })
        .collect()
}

/// Stacked `[B, L, D1]` notes, `[B, L, D2]` series, `[B·L]` mask and labels.
pub struct Batch {
    pub notes: Tensor,
    pub ts: Tensor,
    pub mask: Vec<f64>,
    pub labels: Vec<f64>,
}

pub fn stack(inputs: &[&ModelInput], hours: usize) -> Result<Batch, ModelError> {
    let b = inputs.len();
    let d1 = inputs.first().map_or(0, |x| x.notes.len() / hours.max(1));
    let d2 = inputs.first().map_or(0, |x| x.ts.len() / hours.max(1));
    let mut notes = Vec::with_capacity(b * hours * d1);
    let mut ts = Vec::with_capacity(b * hours * d2);
    let mut mask = Vec::with_capacity(b * hours);
    for x in inputs {
        notes.extend_from_slice(&x.notes);
        ts.extend_from_slice(&x.ts);
        mask.extend_from_slice(&x.mask);
    }
    Ok(Batch {
        notes: Tensor::new(vec![b, hours, d1], notes)?,
        ts: Tensor::new(vec![b, hours, d2], ts)?,
        mask,
        labels: inputs.iter().map(|x| x.label).collect(),
    })
}
