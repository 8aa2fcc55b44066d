use thiserror::Error;

use super::{Tape, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum GradCheckError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("function value is not finite at element {index} (offset {offset:+e})")]
    NonFinite { index: usize, offset: f64 },
    #[error("analytic gradient missing for the checked input")]
    MissingGradient,
}

/// Compares the tape gradient of a scalar function against central
/// differences with step `h`.
///
/// `f` receives a fresh tape and the leaf holding `x`, and returns the scalar
/// output node. The result is `max_i |analytic_i − central_i| / max(1, |central_i|)`.
pub fn grad_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64, GradCheckError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, TensorError>,
{
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let out = f(&mut tape, xv)?;
    let grads = tape.backward(out)?;
    let analytic = grads
        .get(xv)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(x.shape()));
    if analytic.shape() != x.shape() {
        return Err(GradCheckError::MissingGradient);
    }

    let eval = |probe: &Tensor, index: usize, offset: f64| -> Result<f64, GradCheckError> {
        let mut tape = Tape::new();
        let v = tape.constant(probe.clone());
        let out = f(&mut tape, v).map_err(|e| match e {
            TensorError::NonFinite { .. } => GradCheckError::NonFinite { index, offset },
            other => other.into(),
        })?;
        let value = tape
            .value(out)
            .item()
            .ok_or_else(|| TensorError::NonScalarLoss(tape.shape(out).to_vec()))?;
        if !value.is_finite() {
            return Err(GradCheckError::NonFinite { index, offset });
        }
        Ok(value)
    };

    let mut worst: f64 = 0.0;
    let mut probe = x.clone();
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = eval(&probe, i, h)?;
        probe.data_mut()[i] = orig - h;
        let minus = eval(&probe, i, -h)?;
        probe.data_mut()[i] = orig;
        let central = (plus - minus) / (2.0 * h);
        let err = (analytic.data()[i] - central).abs() / central.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}
