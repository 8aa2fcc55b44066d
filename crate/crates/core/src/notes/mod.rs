//! Per-hour note embeddings: the binary embedding file and a seeded hash
//! embedder that stands in for a frozen language model.

mod file;
mod hash;

pub use file::{
    load_embeddings, read_embeddings, write_embeddings, EMBEDDING_MAGIC, EMBEDDING_VERSION,
};
pub use hash::{hash_embed, hash_token_vector, HashEmbedder};

use crate::data::{hour_bucket, DataError, NoteEvent};

#[derive(Debug, thiserror::Error)]
pub enum NotesError {
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported embedding file version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated payload while reading {0}")]
    Truncated(&'static str),
    #[error("episode id is not valid UTF-8")]
    InvalidId,
    #[error("duplicate episode id {0:?}")]
    DuplicateEpisode(String),
    #[error("presence bitmap of {id:?} marks {expected} rows but {actual} are stored")]
    RowCountMismatch {
        id: String,
        expected: usize,
        actual: usize,
    },
    #[error("trailing bytes after the last episode")]
    TrailingBytes,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("embedding dimension must be at least 8, got {0}")]
    DimensionTooSmall(usize),
    #[error("no embedding for episode {0:?}")]
    MissingEpisode(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `hours × dim` note embeddings with a presence mask. Absent rows are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct NotesEmbeddingSequence {
    pub hours: usize,
    pub dim: usize,
    pub data: Vec<f64>,
    pub presence: Vec<bool>,
}

impl NotesEmbeddingSequence {
    pub fn empty(hours: usize, dim: usize) -> Self {
        Self {
            hours,
            dim,
            data: vec![0.0; hours * dim],
            presence: vec![false; hours],
        }
    }

    pub fn row(&self, hour: usize) -> &[f64] {
        &self.data[hour * self.dim..(hour + 1) * self.dim]
    }

    pub fn set_row(&mut self, hour: usize, values: &[f64]) {
        self.data[hour * self.dim..(hour + 1) * self.dim].copy_from_slice(values);
        self.presence[hour] = true;
    }

    pub fn present_hours(&self) -> usize {
        self.presence.iter().filter(|&&p| p).count()
    }

    /// Presence mask as 0/1 floats.
    pub fn mask(&self) -> Vec<f64> {
        self.presence
            .iter()
            .map(|&p| f64::from(u8::from(p)))
            .collect()
    }
}

/// Maps one hour's token list to a fixed-width vector.
pub trait NoteEmbedder {
    fn dim(&self) -> usize;
    fn embed(&self, tokens: &[String]) -> Vec<f64>;
}

/// Concatenates each hour's notes in event order and embeds them.
pub fn align_to_hours(
    note_events: &[NoteEvent],
    hours: usize,
    embedder: &dyn NoteEmbedder,
) -> Result<NotesEmbeddingSequence, NotesError> {
    let buckets = hour_tokens(note_events, hours)?;
    let mut seq = NotesEmbeddingSequence::empty(hours, embedder.dim());
    for (h, tokens) in buckets.iter().enumerate() {
        if let Some(tokens) = tokens {
            seq.set_row(h, &embedder.embed(tokens));
        }
    }
    Ok(seq)
}

/// Per-hour concatenated token lists; `None` for hours without a note.
pub fn hour_tokens(
    note_events: &[NoteEvent],
    hours: usize,
) -> Result<Vec<Option<Vec<String>>>, NotesError> {
    let mut buckets: Vec<Option<Vec<String>>> = vec![None; hours];
    let mut order: Vec<(usize, usize)> = note_events
        .iter()
        .enumerate()
        .map(|(i, n)| hour_bucket(n.hour, hours).map(|h| (h, i)))
        .collect::<Result<_, _>>()?;
    // stable on hour, ties keep input order
    order.sort_by(|a, b| {
        note_events[a.1]
            .hour
            .total_cmp(&note_events[b.1].hour)
            .then(a.1.cmp(&b.1))
    });
    for (h, i) in order {
        buckets[h]
            .get_or_insert_with(Vec::new)
            .extend(note_events[i].tokens.iter().cloned());
    }
    Ok(buckets)
}
