use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::schema::{VariableKind, VariableSchema};
use super::DataError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawValue {
    Number(f64),
    Label(String),
}

/// `[hour, variable_name, value]` on the wire.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, String, RawValue)", into = "(f64, String, RawValue)")]
pub struct Observation {
    pub hour: f64,
    pub variable: String,
    pub value: RawValue,
}

impl From<(f64, String, RawValue)> for Observation {
    fn from((hour, variable, value): (f64, String, RawValue)) -> Self {
        Self {
            hour,
            variable,
            value,
        }
    }
}

impl From<Observation> for (f64, String, RawValue) {
    fn from(o: Observation) -> Self {
        (o.hour, o.variable, o.value)
    }
}

/// `[hour, [tokens...]]` on the wire.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, Vec<String>)", into = "(f64, Vec<String>)")]
pub struct NoteEvent {
    pub hour: f64,
    pub tokens: Vec<String>,
}

impl From<(f64, Vec<String>)> for NoteEvent {
    fn from((hour, tokens): (f64, Vec<String>)) -> Self {
        Self { hour, tokens }
    }
}

impl From<NoteEvent> for (f64, Vec<String>) {
    fn from(n: NoteEvent) -> Self {
        (n.hour, n.tokens)
    }
}

/// One ICU stay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClinicalEpisode {
    pub id: String,
    pub label: u8,
    pub observations: Vec<Observation>,
    pub note_events: Vec<NoteEvent>,
}

/// Hour bucket of a timestamp, or an error if outside `[0, hours)`.
pub fn hour_bucket(hour: f64, hours: usize) -> Result<usize, DataError> {
    if hour.is_finite() && hour >= 0.0 && hour < hours as f64 {
        Ok(hour.floor() as usize)
    } else {
        Err(DataError::HourOutOfRange { hour, hours })
    }
}

impl ClinicalEpisode {
    pub fn validate(&self, schema: &VariableSchema) -> Result<(), DataError> {
        if self.label > 1 {
            return Err(DataError::InvalidLabel {
                id: self.id.clone(),
                label: self.label,
            });
        }
        for obs in &self.observations {
            hour_bucket(obs.hour, schema.hours)?;
            let idx = schema
                .index_of(&obs.variable)
                .ok_or_else(|| DataError::UnknownVariable(obs.variable.clone()))?;
            match (&schema.variables[idx].kind, &obs.value) {
                (VariableKind::Continuous { .. }, RawValue::Number(v)) if v.is_finite() => {}
                (VariableKind::Categorical { categories }, RawValue::Label(l)) => {
                    if !categories.contains(l) {
                        return Err(DataError::UnknownCategory {
                            variable: obs.variable.clone(),
                            label: l.clone(),
                        });
                    }
                }
                _ => {
                    return Err(DataError::WrongValueType {
                        variable: obs.variable.clone(),
                    })
                }
            }
        }
        for note in &self.note_events {
            hour_bucket(note.hour, schema.hours)?;
        }
        Ok(())
    }
}

pub fn read_episodes(path: &Path) -> Result<Vec<ClinicalEpisode>, DataError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ep: ClinicalEpisode =
            serde_json::from_str(&line).map_err(|source| DataError::Json {
                line: i + 1,
                source,
            })?;
        if !seen.insert(ep.id.clone()) {
            return Err(DataError::DuplicateEpisode(ep.id));
        }
        out.push(ep);
    }
    Ok(out)
}

pub fn write_episodes(path: &Path, episodes: &[ClinicalEpisode]) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path)?);
    for ep in episodes {
        let line =
            serde_json::to_string(ep).map_err(|source| DataError::Json { line: 0, source })?;
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
