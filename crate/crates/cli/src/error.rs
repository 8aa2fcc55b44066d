use std::path::PathBuf;

use ehr_fusion::attribution::AttributionError;
use ehr_fusion::data::DataError;
use ehr_fusion::model::ModelError;
use ehr_fusion::notes::NotesError;
use ehr_fusion::train::TrainError;

use crate::io::OUT_DIR_ENV;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Notes(#[from] NotesError),
    #[error(transparent)]
    Attribution(#[from] AttributionError),
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("checkpoint does not match the data: {0}")]
    ConfigMismatch(String),
    #[error("output {0} is missing or empty after writing")]
    OutputValidation(PathBuf),
    #[error("no output directory: pass --out or set {OUT_DIR_ENV}")]
    NoOutputDir,
    #[error("worker thread panicked")]
    WorkerPanic,
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable kind printed with every failure.
    pub fn code(&self) -> &'static str {
        match self {
            Self::Io { .. } => "io",
            Self::Data(_) => "data",
            Self::Model(_) => "model",
            Self::Train(TrainError::SingleClass) => "single_class",
            Self::Train(TrainError::Diverged { .. }) => "diverged",
            Self::Train(_) => "train",
            Self::Notes(NotesError::Io(_)) => "embedding_file",
            Self::Notes(_) => "notes",
            Self::Attribution(_) => "attribution",
            Self::Json { .. } => "json",
            Self::Csv(_) => "csv",
            Self::InvalidArgument(_) => "invalid_argument",
            Self::ConfigMismatch(_) => "config_mismatch",
            Self::OutputValidation(_) => "output_validation",
            Self::NoOutputDir => "no_output_dir",
            Self::WorkerPanic => "worker_panic",
        }
    }
}
