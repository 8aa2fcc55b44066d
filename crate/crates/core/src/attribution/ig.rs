use serde::{Deserialize, Serialize};

use super::AttributionError;
use crate::model::{forward_logits, Model, ModelInput};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IgConfig {
    pub steps: usize,
    /// Path points evaluated per batched forward pass.
    pub chunk: usize,
}

impl Default for IgConfig {
    fn default() -> Self {
        Self {
            steps: 256,
            chunk: 64,
        }
    }
}

impl IgConfig {
    pub const MIN_STEPS: usize = 8;

    pub fn validate(&self) -> Result<(), AttributionError> {
        if self.steps < Self::MIN_STEPS {
            return Err(AttributionError::InvalidSteps {
                steps: self.steps,
                min: Self::MIN_STEPS,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IgResult {
    /// `(x − x′) ⊙ mean path gradient`, shaped like `x`.
    pub attributions: Tensor,
    /// Mean gradient over the midpoints of the path.
    pub mean_gradient: Tensor,
    pub output: f64,
    pub baseline_output: f64,
    /// `|Σ attributions − (F(x) − F(x′))|`.
    pub residual: f64,
    pub steps: usize,
}

fn stacked(rows: &[Vec<f64>], shape: &[usize]) -> Result<Tensor, AttributionError> {
    let mut full = vec![rows.len()];
    full.extend_from_slice(shape);
    Ok(Tensor::new(full, rows.concat())?)
}

/// Integrated Gradients with the midpoint rule:
/// `IG_i = (x_i − x′_i) · (1/m) Σ_k ∂F/∂x_i (x′ + (k − ½)/m · (x − x′))`.
///
/// `f` maps a stack `[k, ..shape]` of inputs to the `[k]` outputs; rows must
/// not interact. Up to `chunk` path points are evaluated per call.
pub fn integrated_gradients<F>(
    f: &F,
    x: &Tensor,
    baseline: &Tensor,
    steps: usize,
    chunk: usize,
) -> Result<IgResult, AttributionError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, AttributionError>,
{
    if steps == 0 {
        return Err(AttributionError::InvalidSteps { steps, min: 1 });
    }
    if x.shape() != baseline.shape() {
        return Err(AttributionError::BaselineShape {
            input: x.shape().to_vec(),
            baseline: baseline.shape().to_vec(),
        });
    }
    let shape = x.shape();
    let n = x.numel();
    let delta: Vec<f64> = x
        .data()
        .iter()
        .zip(baseline.data())
        .map(|(a, b)| a - b)
        .collect();

    let mut tape = Tape::new();
    let ends = tape.constant(stacked(
        &[x.data().to_vec(), baseline.data().to_vec()],
        shape,
    )?);
    let out = f(&mut tape, ends)?;
    let (output, baseline_output) = (tape.value(out).data()[0], tape.value(out).data()[1]);

    let mut grad_sum = vec![0.0; n];
    let alphas: Vec<f64> = (1..=steps)
        .map(|k| (k as f64 - 0.5) / steps as f64)
        .collect();
    for block in alphas.chunks(chunk.max(1)) {
        let rows: Vec<Vec<f64>> = block
            .iter()
            .map(|&a| {
                baseline
                    .data()
                    .iter()
                    .zip(&delta)
                    .map(|(b, d)| b + a * d)
                    .collect()
            })
            .collect();
        let mut tape = Tape::new();
        let points = tape.leaf(stacked(&rows, shape)?);
        let out = f(&mut tape, points)?;
        let total = tape.sum(out)?;
        let grads = tape.backward(total)?;
        let zero = Tensor::zeros(tape.shape(points));
        let g = grads.get(points).unwrap_or(&zero);
        for (r, &alpha) in block.iter().enumerate() {
            let row = &g.data()[r * n..(r + 1) * n];
            if row.iter().any(|v| !v.is_finite()) {
                return Err(AttributionError::NonFiniteGradient { alpha });
            }
            for (s, v) in grad_sum.iter_mut().zip(row) {
                *s += v;
            }
        }
    }
    let mean: Vec<f64> = grad_sum.iter().map(|s| s / steps as f64).collect();
    let attr: Vec<f64> = mean.iter().zip(&delta).map(|(g, d)| g * d).collect();
    let residual = (attr.iter().sum::<f64>() - (output - baseline_output)).abs();
    Ok(IgResult {
        attributions: Tensor::new(shape.to_vec(), attr)?,
        mean_gradient: Tensor::new(shape.to_vec(), mean)?,
        output,
        baseline_output,
        residual,
        steps,
    })
}

/// IG of the predicted probability with respect to the `L × D1` note
/// embeddings, against all-zero rows. Variables and the presence mask stay
/// at their observed values.
pub fn notes_integrated_gradients(
    model: &Model,
    input: &ModelInput,
    cfg: &IgConfig,
) -> Result<IgResult, AttributionError> {
    cfg.validate()?;
    let c = &model.config;
    let x = Tensor::new(vec![c.hours, c.notes_dim], input.notes.clone())?;
    let baseline = Tensor::zeros(x.shape());
    let f = |tape: &mut Tape, notes: Var| -> Result<Var, AttributionError> {
        let k = tape.shape(notes)[0];
        let p = model.params.bind(tape, false);
        let ts = tape.constant(Tensor::new(vec![k, c.hours, c.ts_dim], input.ts.repeat(k))?);
        let mask = input.mask.repeat(k);
        let logits = forward_logits(tape, &p, model.kind, c, notes, ts, &mask)?;
        Ok(tape.sigmoid(logits)?)
    };
    integrated_gradients(&f, &x, &baseline, cfg.steps, cfg.chunk)
}
