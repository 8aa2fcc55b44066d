use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::episode::ClinicalEpisode;
use super::DataError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl std::str::FromStr for SplitName {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Self::Train),
            "validation" | "val" => Ok(Self::Validation),
            "test" => Ok(Self::Test),
            other => Err(DataError::UnknownSplit(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub total: usize,
    pub positive: usize,
    pub negative: usize,
    pub prevalence: f64,
}

impl SplitStats {
    pub fn of(episodes: &[ClinicalEpisode]) -> Self {
        let positive = episodes.iter().filter(|e| e.label == 1).count();
        let total = episodes.len();
        Self {
            total,
            positive,
            negative: total - positive,
            prevalence: if total == 0 {
                0.0
            } else {
                positive as f64 / total as f64
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<ClinicalEpisode>,
    pub validation: Vec<ClinicalEpisode>,
    pub test: Vec<ClinicalEpisode>,
}

/// Episode ids per split, as stored next to the episode file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitIds {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub train: SplitStats,
    pub validation: SplitStats,
    pub test: SplitStats,
    pub overall: SplitStats,
}

impl DatasetSplit {
    pub fn get(&self, split: SplitName) -> &[ClinicalEpisode] {
        match split {
            SplitName::Train => &self.train,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }

    pub fn all(&self) -> impl Iterator<Item = &ClinicalEpisode> {
        self.train.iter().chain(&self.validation).chain(&self.test)
    }

    pub fn stats(&self) -> DatasetStats {
        let all: Vec<ClinicalEpisode> = self.all().cloned().collect();
        DatasetStats {
            train: SplitStats::of(&self.train),
            validation: SplitStats::of(&self.validation),
            test: SplitStats::of(&self.test),
            overall: SplitStats::of(&all),
        }
    }

    pub fn ids(&self) -> SplitIds {
        let ids = |v: &[ClinicalEpisode]| v.iter().map(|e| e.id.clone()).collect();
        SplitIds {
            train: ids(&self.train),
            validation: ids(&self.validation),
            test: ids(&self.test),
        }
    }

    /// Reassemble splits from a flat episode list and stored ids.
    pub fn from_ids(episodes: Vec<ClinicalEpisode>, ids: &SplitIds) -> Result<Self, DataError> {
        let mut seen = HashSet::new();
        for id in ids.train.iter().chain(&ids.validation).chain(&ids.test) {
            if !seen.insert(id.as_str()) {
                return Err(DataError::OverlappingSplits(id.clone()));
            }
        }
        let mut by_id: HashMap<String, ClinicalEpisode> =
            episodes.into_iter().map(|e| (e.id.clone(), e)).collect();
        let mut take = |list: &[String]| -> Result<Vec<ClinicalEpisode>, DataError> {
            list.iter()
                .map(|id| {
                    by_id
                        .remove(id)
                        .ok_or_else(|| DataError::MissingEpisode(id.clone()))
                })
                .collect()
        };
        Ok(Self {
            train: take(&ids.train)?,
            validation: take(&ids.validation)?,
            test: take(&ids.test)?,
        })
    }
}

pub fn read_split_ids(path: &Path) -> Result<SplitIds, DataError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|source| DataError::Json { line: 0, source })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ep(id: &str, label: u8) -> ClinicalEpisode {
        ClinicalEpisode {
            id: id.into(),
            label,
            observations: vec![],
            note_events: vec![],
        }
    }

    #[test]
    fn from_ids_rejects_overlap_and_missing() {
        let eps = vec![ep("a", 0), ep("b", 1)];
        let overlap = SplitIds {
            train: vec!["a".into()],
            validation: vec!["a".into()],
            test: vec![],
        };
        assert!(matches!(
            DatasetSplit::from_ids(eps.clone(), &overlap),
            Err(DataError::OverlappingSplits(_))
        ));
        let missing = SplitIds {
            train: vec!["c".into()],
            validation: vec![],
            test: vec![],
        };
        assert!(matches!(
            DatasetSplit::from_ids(eps.clone(), &missing),
            Err(DataError::MissingEpisode(_))
        ));
        let ok = SplitIds {
            train: vec!["b".into()],
            validation: vec![],
            test: vec!["a".into()],
        };
        let split = DatasetSplit::from_ids(eps, &ok).unwrap();
        assert_eq!(split.stats().train.positive, 1);
        assert_eq!(split.stats().overall.prevalence, 0.5);
    }
}
