//! Run configuration and note-embedding sources.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ehr_fusion::data::VariableSchema;
use ehr_fusion::model::{ModelConfig, NotesSource};
use ehr_fusion::notes::{load_embeddings, HashEmbedder, NotesEmbeddingSequence, NotesError};
use ehr_fusion::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HashConfig {
    pub dim: usize,
    pub seed: u64,
}

impl Default for HashConfig {
    fn default() -> Self {
        Self { dim: 64, seed: 0 }
    }
}

/// JSON config accepted by `train --config`. `hours`, `notes_dim` and
/// `ts_dim` are always taken from the data and the embedding source.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub hash: HashConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            Some(p) => crate::io::read_json(p),
            None => Ok(Self::default()),
        }
    }
}

/// `--embeddings` value: `hash` or `file:PATH`.
#[derive(Clone, Debug, PartialEq)]
pub enum EmbeddingSpec {
    Hash,
    File(PathBuf),
}

impl std::str::FromStr for EmbeddingSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "hash" {
            return Ok(Self::Hash);
        }
        match s.strip_prefix("file:") {
            Some(p) if !p.is_empty() => Ok(Self::File(PathBuf::from(p))),
            _ => Err(format!("expected `hash` or `file:PATH`, got {s:?}")),
        }
    }
}

/// Stored in checkpoints so later commands rebuild the same embeddings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbeddingDescriptor {
    Hash { dim: usize, seed: u64 },
    File { path: PathBuf, dim: usize },
}

pub enum Embeddings {
    Hash(HashEmbedder),
    File {
        path: PathBuf,
        dim: usize,
        sequences: BTreeMap<String, NotesEmbeddingSequence>,
    },
}

impl Embeddings {
    pub fn open(spec: &EmbeddingSpec, hash: &HashConfig) -> Result<Self, CliError> {
        match spec {
            EmbeddingSpec::Hash => Ok(Self::Hash(HashEmbedder::new(hash.dim, hash.seed)?)),
            EmbeddingSpec::File(path) => Self::from_file(path),
        }
    }

    fn from_file(path: &Path) -> Result<Self, CliError> {
        let sequences = load_embeddings(path).map_err(|e| match e {
            NotesError::Io(source) => CliError::io(path, source),
            other => other.into(),
        })?;
        let dim = sequences.values().next().map(|s| s.dim).unwrap_or(0);
        Ok(Self::File {
            path: path.to_path_buf(),
            dim,
            sequences,
        })
    }

    pub fn from_descriptor(d: &EmbeddingDescriptor) -> Result<Self, CliError> {
        match d {
            EmbeddingDescriptor::Hash { dim, seed } => {
                Ok(Self::Hash(HashEmbedder::new(*dim, *seed)?))
            }
            EmbeddingDescriptor::File { path, .. } => Self::from_file(path),
        }
    }

    pub fn descriptor(&self) -> EmbeddingDescriptor {
        match self {
            Self::Hash(e) => EmbeddingDescriptor::Hash {
                dim: e.dim,
                seed: e.seed,
            },
            Self::File { path, dim, .. } => EmbeddingDescriptor::File {
                path: path.clone(),
                dim: *dim,
            },
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Hash(e) => e.dim,
            Self::File { dim, .. } => *dim,
        }
    }

    pub fn hours(&self) -> Option<usize> {
        match self {
            Self::Hash(_) => None,
            Self::File { sequences, .. } => sequences.values().next().map(|s| s.hours),
        }
    }

    pub fn source(&self) -> NotesSource<'_> {
        match self {
            Self::Hash(e) => NotesSource::Embedder(e),
            Self::File { sequences, .. } => NotesSource::Precomputed(sequences),
        }
    }

    pub fn hash(&self) -> Option<&HashEmbedder> {
        match self {
            Self::Hash(e) => Some(e),
            Self::File { .. } => None,
        }
    }
}

/// Fill the data-determined dimensions of a model config.
pub fn bind_model_config(
    mut cfg: ModelConfig,
    schema: &VariableSchema,
    embeddings: &Embeddings,
) -> Result<ModelConfig, CliError> {
    if let Some(h) = embeddings.hours() {
        if h != schema.hours {
            return Err(CliError::ConfigMismatch(format!(
                "embedding file has {h} hours, schema has {}",
                schema.hours
            )));
        }
    }
    cfg.hours = schema.hours;
    cfg.ts_dim = schema.width();
    cfg.notes_dim = embeddings.dim();
    cfg.validate()?;
    Ok(cfg)
}

/// Reject a checkpoint whose dimensions disagree with the data.
pub fn check_compatible(
    cfg: &ModelConfig,
    schema: &VariableSchema,
    embeddings: &Embeddings,
) -> Result<(), CliError> {
    let checks = [
        ("hours", cfg.hours, schema.hours),
        ("ts_dim", cfg.ts_dim, schema.width()),
        ("notes_dim", cfg.notes_dim, embeddings.dim()),
    ];
    for (name, model, data) in checks {
        if model != data {
            return Err(CliError::ConfigMismatch(format!(
                "{name}: checkpoint {model}, data {data}"
            )));
        }
    }
    Ok(())
}
