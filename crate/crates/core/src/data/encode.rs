use super::episode::{hour_bucket, ClinicalEpisode, RawValue};
use super::schema::{VariableKind, VariableSchema};
use super::DataError;

/// `hours × width` matrix: value blocks per variable, then one mask channel
/// per variable.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedTimeSeries {
    pub hours: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl EncodedTimeSeries {
    pub fn row(&self, hour: usize) -> &[f64] {
        &self.data[hour * self.width..(hour + 1) * self.width]
    }

    pub fn get(&self, hour: usize, channel: usize) -> f64 {
        self.data[hour * self.width + channel]
    }
}

/// Never-observed encoding of one variable at every hour: imputation default
/// in the value block and mask 0.
pub fn absent_value_block(schema: &VariableSchema, variable: usize) -> Vec<f64> {
    match &schema.variables[variable].kind {
        VariableKind::Continuous {
            mean, std, impute, ..
        } => vec![(impute - mean) / std],
        VariableKind::Categorical { categories } => vec![0.0; categories.len()],
    }
}

/// Encode an episode's observations into the fixed-width time series.
///
/// Continuous values are z-normalized with the schema statistics. Hours
/// without an observation repeat the most recent value (forward fill), or the
/// imputation default before the first one. The mask is 1 only at hours that
/// carry a real observation; several observations in one hour resolve to the
/// last.
pub fn encode_variables(
    episode: &ClinicalEpisode,
    schema: &VariableSchema,
) -> Result<EncodedTimeSeries, DataError> {
    let hours = schema.hours;
    let width = schema.width();
    let offsets = schema.offsets();
    let nvars = schema.len();

    // per variable, per hour: the encoded value block observed in that hour
    let mut observed: Vec<Vec<Option<Vec<f64>>>> = vec![vec![None; hours]; nvars];
    for obs in &episode.observations {
        let h = hour_bucket(obs.hour, hours)?;
        let v = schema
            .index_of(&obs.variable)
            .ok_or_else(|| DataError::UnknownVariable(obs.variable.clone()))?;
        let block = match (&schema.variables[v].kind, &obs.value) {
            (VariableKind::Continuous { mean, std, .. }, RawValue::Number(x)) if x.is_finite() => {
                vec![(x - mean) / std]
            }
            (VariableKind::Categorical { categories }, RawValue::Label(l)) => {
                let idx = categories.iter().position(|c| c == l).ok_or_else(|| {
                    DataError::UnknownCategory {
                        variable: obs.variable.clone(),
                        label: l.clone(),
                    }
                })?;
                let mut b = vec![0.0; categories.len()];
                b[idx] = 1.0;
                b
            }
            _ => {
                return Err(DataError::WrongValueType {
                    variable: obs.variable.clone(),
                })
            }
        };
        observed[v][h] = Some(block);
    }

    let mut data = vec![0.0; hours * width];
    for v in 0..nvars {
        let mut current = absent_value_block(schema, v);
        let mask = schema.mask_channel(v);
        for h in 0..hours {
            let row = &mut data[h * width..(h + 1) * width];
            if let Some(block) = &observed[v][h] {
                current.clone_from(block);
                row[mask] = 1.0;
            }
            row[offsets[v]..offsets[v] + current.len()].copy_from_slice(&current);
        }
    }
    Ok(EncodedTimeSeries { hours, width, data })
}
