use serde::{Deserialize, Serialize};

use super::shapley::{shapley_exact, shapley_sampled, Game};
use super::AttributionError;
use crate::data::{absent_value_block, VariableSchema};
use crate::model::{sigmoid, stack, Model, ModelInput};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapleyEstimator {
    Exact,
    Sampled { permutations: usize, seed: u64 },
}

impl ShapleyEstimator {
    pub fn name(&self) -> &'static str {
        match self {
            ShapleyEstimator::Exact => "exact",
            ShapleyEstimator::Sampled { .. } => "sampled",
        }
    }
}

/// Copy of an encoded `L × width` series where every variable outside
/// `present` takes its never-observed encoding at all hours: imputation
/// default in its value block and 0 in its mask channel.
pub fn with_absent_variables(ts: &[f64], schema: &VariableSchema, present: u32) -> Vec<f64> {
    let width = schema.width();
    let offsets = schema.offsets();
    let mut out = ts.to_vec();
    for v in (0..schema.len()).filter(|&v| present >> v & 1 == 0) {
        let block = absent_value_block(schema, v);
        let mask = schema.mask_channel(v);
        for row in out.chunks_exact_mut(width) {
            row[offsets[v]..offsets[v] + block.len()].copy_from_slice(&block);
            row[mask] = 0.0;
        }
    }
    out
}

/// Players are clinical variables; a coalition's value is the predicted
/// probability with the other variables absent.
pub struct VariableGame<'a> {
    pub model: &'a Model,
    pub input: &'a ModelInput,
    pub schema: &'a VariableSchema,
}

impl Game for VariableGame<'_> {
    fn players(&self) -> usize {
        self.schema.len()
    }

    fn values(&mut self, coalitions: &[u32]) -> Result<Vec<f64>, AttributionError> {
        let variants: Vec<ModelInput> = coalitions
            .iter()
            .map(|&c| ModelInput {
                ts: with_absent_variables(&self.input.ts, self.schema, c),
                ..self.input.clone()
            })
            .collect();
        let refs: Vec<&ModelInput> = variants.iter().collect();
        let batch = stack(&refs, self.model.config.hours).map_err(AttributionError::from)?;
        Ok(self
            .model
            .logits(&batch)?
            .into_iter()
            .map(sigmoid)
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeShapley {
    pub id: String,
    pub label: f64,
    /// Value of the full coalition: the model's prediction.
    pub prediction: f64,
    /// Value of the empty coalition: every variable absent.
    pub baseline: f64,
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableSummary {
    pub variable: String,
    pub mean_abs: f64,
    pub mean_signed: f64,
    /// Standard error of `mean_signed` across episodes.
    pub stderr: f64,
    pub ci95: (f64, f64),
    pub estimator: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapleyReport {
    pub estimator: ShapleyEstimator,
    /// One summary per variable, in schema order.
    pub variables: Vec<VariableSummary>,
    pub episodes: Vec<EpisodeShapley>,
    pub warnings: Vec<String>,
}

impl ShapleyReport {
    /// Summaries by descending mean |φ|, ties by name.
    pub fn ranking(&self) -> Vec<&VariableSummary> {
        let mut r: Vec<&VariableSummary> = self.variables.iter().collect();
        r.sort_by(|a, b| {
            b.mean_abs
                .total_cmp(&a.mean_abs)
                .then_with(|| a.variable.cmp(&b.variable))
        });
        r
    }
}

fn episode_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Per-episode Shapley values over the schema's variables and their
/// dataset-level summary.
pub fn variable_shapley(
    model: &Model,
    inputs: &[ModelInput],
    schema: &VariableSchema,
    estimator: ShapleyEstimator,
    trained: bool,
) -> Result<ShapleyReport, AttributionError> {
    let n = schema.len();
    let mut episodes = Vec::with_capacity(inputs.len());
    for (idx, input) in inputs.iter().enumerate() {
        let mut game = VariableGame {
            model,
            input,
            schema,
        };
        let full = if n >= 32 { u32::MAX } else { (1u32 << n) - 1 };
        let ends = game.values(&[full, 0])?;
        let (values, std_errors) = match estimator {
            ShapleyEstimator::Exact => (shapley_exact(&mut game)?, vec![0.0; n]),
            ShapleyEstimator::Sampled { permutations, seed } => {
                let s = shapley_sampled(&mut game, permutations, episode_seed(seed, idx))?;
                (s.values, s.std_errors)
            }
        };
        episodes.push(EpisodeShapley {
            id: input.id.clone(),
            label: input.label,
            prediction: ends[0],
            baseline: ends[1],
            values,
            std_errors,
        });
    }
    let count = episodes.len() as f64;
    let variables = schema
        .variables
        .iter()
        .enumerate()
        .map(|(v, var)| {
            let phi: Vec<f64> = episodes.iter().map(|e| e.values[v]).collect();
            let mean_signed = phi.iter().sum::<f64>() / count;
            let mean_abs = phi.iter().map(|p| p.abs()).sum::<f64>() / count;
            let stderr = if phi.len() < 2 {
                0.0
            } else {
                let var =
                    phi.iter().map(|p| (p - mean_signed).powi(2)).sum::<f64>() / (count - 1.0);
                (var / count).sqrt()
            };
            VariableSummary {
                variable: var.name.clone(),
                mean_abs,
                mean_signed,
                stderr,
                ci95: (mean_signed - 1.96 * stderr, mean_signed + 1.96 * stderr),
                estimator: estimator.name().to_string(),
            }
        })
        .collect();
    let mut warnings = Vec::new();
    if !trained {
        warnings.push("model has not been trained; values reflect random initialization".into());
    }
    if inputs.is_empty() {
        warnings.push("no episodes to attribute".into());
    }
    Ok(ShapleyReport {
        estimator,
        variables,
        episodes,
        warnings,
    })
}
