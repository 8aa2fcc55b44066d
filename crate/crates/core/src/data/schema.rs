use serde::{Deserialize, Serialize};

use super::DataError;

/// Hours of ICU stay covered by one episode.
pub const EPISODE_HOURS: usize = 48;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VariableKind {
    Continuous {
        mean: f64,
        std: f64,
        min: f64,
        max: f64,
        /// Raw value used before the first observation.
        impute: f64,
    },
    /// Imputation before the first observation is an all-zero block.
    Categorical { categories: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    #[serde(flatten)]
    pub kind: VariableKind,
}

impl Variable {
    fn continuous(name: &str, mean: f64, std: f64, min: f64, max: f64) -> Self {
        Self {
            name: name.to_string(),
            kind: VariableKind::Continuous {
                mean,
                std,
                min,
                max,
                impute: mean,
            },
        }
    }

    fn categorical(name: &str, categories: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            kind: VariableKind::Categorical {
                categories: categories.iter().map(|c| c.to_string()).collect(),
            },
        }
    }

    /// Number of value channels this variable occupies.
    pub fn width(&self) -> usize {
        match &self.kind {
            VariableKind::Continuous { .. } => 1,
            VariableKind::Categorical { categories } => categories.len(),
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, VariableKind::Categorical { .. })
    }
}

/// Ordered clinical-variable descriptors. Encoded layout: value blocks in
/// variable order, followed by one mask channel per variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableSchema {
    pub hours: usize,
    pub variables: Vec<Variable>,
}

pub const CAPILLARY_REFILL: &str = "Capillary refill rate";
pub const DIASTOLIC_BP: &str = "Diastolic blood pressure";
pub const FIO2: &str = "Fraction inspired oxygen";
pub const GCS_EYE: &str = "Glascow coma scale eye opening";
pub const GCS_MOTOR: &str = "Glascow coma scale motor response";
pub const GCS_TOTAL: &str = "Glascow coma scale total";
pub const GCS_VERBAL: &str = "Glascow coma scale verbal response";
pub const GLUCOSE: &str = "Glucose";
pub const HEART_RATE: &str = "Heart Rate";
pub const HEIGHT: &str = "Height";
pub const MEAN_BP: &str = "Mean blood pressure";
pub const SPO2: &str = "Oxygen saturation";
pub const RESP_RATE: &str = "Respiratory rate";
pub const SYSTOLIC_BP: &str = "Systolic blood pressure";
pub const TEMPERATURE: &str = "Temperature";
pub const WEIGHT: &str = "Weight";
pub const PH: &str = "pH";

/// The 17 benchmark variables; categorical cardinalities {2, 8, 12, 13, 12}
/// give 12 + 47 + 17 = 76 encoded channels.
pub fn default_schema() -> VariableSchema {
    let variables = vec![
        Variable::categorical(CAPILLARY_REFILL, &["0.0", "1.0"]),
        Variable::continuous(DIASTOLIC_BP, 59.0, 14.0, 0.0, 300.0),
        Variable::continuous(FIO2, 0.54, 0.2, 0.21, 1.0),
        Variable::categorical(
            GCS_EYE,
            &[
                "1 No Response",
                "2 To pain",
                "3 To speech",
                "4 Spontaneously",
                "None",
                "To Pain",
                "To Speech",
                "Spontaneously",
            ],
        ),
        Variable::categorical(
            GCS_MOTOR,
            &[
                "1 No Response",
                "2 Abnorm extensn",
                "3 Abnorm flexion",
                "4 Flex-withdraws",
                "5 Localizes Pain",
                "6 Obeys Commands",
                "No response",
                "Abnormal extension",
                "Abnormal Flexion",
                "Flex-withdraws",
                "Localizes Pain",
                "Obeys Commands",
            ],
        ),
        Variable::categorical(
            GCS_TOTAL,
            &[
                "3", "4", "5", "6", "7", "8", "9", "10", "11", "12", "13", "14", "15",
            ],
        ),
        Variable::categorical(
            GCS_VERBAL,
            &[
                "1 No Response",
                "1.0 ET/Trach",
                "2 Incomp sounds",
                "3 Inapprop words",
                "4 Confused",
                "5 Oriented",
                "No Response",
                "No Response-ETT",
                "Incomprehensible sounds",
                "Inappropriate Words",
                "Confused",
                "Oriented",
            ],
        ),
        Variable::continuous(GLUCOSE, 140.0, 50.0, 0.0, 2000.0),
        Variable::continuous(HEART_RATE, 86.0, 18.0, 0.0, 350.0),
        Variable::continuous(HEIGHT, 170.0, 10.0, 0.0, 275.0),
        Variable::continuous(MEAN_BP, 78.0, 15.0, 0.0, 375.0),
        Variable::continuous(SPO2, 97.0, 3.0, 0.0, 100.0),
        Variable::continuous(RESP_RATE, 19.0, 6.0, 0.0, 330.0),
        Variable::continuous(SYSTOLIC_BP, 120.0, 22.0, 0.0, 375.0),
        Variable::continuous(TEMPERATURE, 37.0, 0.8, 14.2, 47.0),
        Variable::continuous(WEIGHT, 82.0, 24.0, 0.0, 250.0),
        Variable::continuous(PH, 7.39, 0.07, 6.3, 10.0),
    ];
    VariableSchema {
        hours: EPISODE_HOURS,
        variables,
    }
}

impl VariableSchema {
    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    /// Total encoded channels: value blocks plus one mask per variable.
    pub fn width(&self) -> usize {
        self.value_width() + self.variables.len()
    }

    pub fn value_width(&self) -> usize {
        self.variables.iter().map(Variable::width).sum()
    }

    /// Start of each variable's value block.
    pub fn offsets(&self) -> Vec<usize> {
        self.variables
            .iter()
            .scan(0, |acc, v| {
                let start = *acc;
                *acc += v.width();
                Some(start)
            })
            .collect()
    }

    pub fn mask_channel(&self, variable: usize) -> usize {
        self.value_width() + variable
    }

    /// All encoded channels belonging to one variable (value block and mask).
    pub fn channels_of(&self, variable: usize) -> Vec<usize> {
        let start = self.offsets()[variable];
        let mut chans: Vec<usize> = (start..start + self.variables[variable].width()).collect();
        chans.push(self.mask_channel(variable));
        chans
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.hours == 0 {
            return Err(DataError::InvalidSchema("hours must be positive".into()));
        }
        for v in &self.variables {
            match &v.kind {
                VariableKind::Continuous { std, .. } if !(*std > 0.0) => {
                    return Err(DataError::InvalidSchema(format!(
                        "{}: std must be positive",
                        v.name
                    )))
                }
                VariableKind::Categorical { categories } if categories.is_empty() => {
                    return Err(DataError::InvalidSchema(format!(
                        "{}: no categories",
                        v.name
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schema_has_17_variables_and_76_channels() {
        let s = default_schema();
        assert_eq!(s.len(), 17);
        assert_eq!(s.width(), 76);
        let categorical: usize = s
            .variables
            .iter()
            .filter(|v| v.is_categorical())
            .map(Variable::width)
            .sum();
        assert_eq!(categorical, 47);
        assert_eq!(
            s.variables.iter().filter(|v| !v.is_categorical()).count(),
            12
        );
    }

    #[test]
    fn channels_of_covers_every_channel_once() {
        let s = default_schema();
        let mut all: Vec<usize> = (0..s.len()).flat_map(|v| s.channels_of(v)).collect();
        all.sort_unstable();
        assert_eq!(all, (0..76).collect::<Vec<_>>());
    }

    #[test]
    fn schema_json_round_trips() {
        let s = default_schema();
        let json = serde_json::to_string(&s).unwrap();
        let back: VariableSchema = serde_json::from_str(&json).unwrap();
        assert_eq!(s, back);
    }
}
