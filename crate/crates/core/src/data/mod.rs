//! Clinical episodes, the variable schema, time-series encoding and splits.

mod encode;
mod episode;
mod schema;
mod split;
mod synthetic;

pub use encode::{absent_value_block, encode_variables, EncodedTimeSeries};
pub use episode::{
    hour_bucket, read_episodes, write_episodes, ClinicalEpisode, NoteEvent, Observation, RawValue,
};
pub use schema::*;
pub use split::{read_split_ids, DatasetSplit, DatasetStats, SplitIds, SplitName, SplitStats};
pub use synthetic::{
    generate_synthetic, PlantedFactors, SignalConfig, SyntheticDataset, FILLER_WORDS,
    NUMERIC_TOKENS, SEPARATOR_TOKENS, SHORT_TOKENS, SUBWORD_PHRASE,
};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("unknown category {label:?} for variable {variable:?}")]
    UnknownCategory { variable: String, label: String },
    #[error("wrong value type for variable {variable:?}")]
    WrongValueType { variable: String },
    #[error("hour {hour} outside [0, {hours})")]
    HourOutOfRange { hour: f64, hours: usize },
    #[error("episode {id}: label {label} is not 0 or 1")]
    InvalidLabel { id: String, label: u8 },
    #[error("duplicate episode id {0:?}")]
    DuplicateEpisode(String),
    #[error("json error at line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("unknown split {0:?}")]
    UnknownSplit(String),
    #[error("episode {0:?} appears in more than one split")]
    OverlappingSplits(String),
    #[error("episode {0:?} listed in a split but not found")]
    MissingEpisode(String),
    #[error("invalid signal configuration: {0}")]
    InvalidSignal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
