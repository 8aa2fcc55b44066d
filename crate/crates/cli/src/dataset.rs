//! On-disk dataset layout written by `gen-data`.

use std::path::Path;

use ehr_fusion::data::{read_episodes, read_split_ids, DatasetSplit, SplitName, VariableSchema};
use ehr_fusion::data::ClinicalEpisode;

use crate::error::CliError;
use crate::io::read_json;

pub const EPISODES_FILE: &str = "episodes.jsonl";
pub const SCHEMA_FILE: &str = "schema.json";
pub const SPLITS_FILE: &str = "splits.json";
pub const PLANTED_FILE: &str = "planted.json";
pub const SIGNAL_FILE: &str = "signal.json";

pub struct Dataset {
    pub schema: VariableSchema,
    pub split: DatasetSplit,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let schema: VariableSchema = read_json(&dir.join(SCHEMA_FILE))?;
        schema.validate()?;
        let episodes = read_episodes(&dir.join(EPISODES_FILE))?;
        for ep in &episodes {
            ep.validate(&schema)?;
        }
        let ids = read_split_ids(&dir.join(SPLITS_FILE))?;
        let split = DatasetSplit::from_ids(episodes, &ids)?;
        Ok(Self { schema, split })
    }

    pub fn episodes(&self, split: SplitName) -> &[ClinicalEpisode] {
        self.split.get(split)
    }
}
