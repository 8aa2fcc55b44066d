use super::ModelError;
use crate::tensor::Tensor;

/// `[positions, dim]` table with `pe[p, 2i] = sin(p / 10000^(2i/dim))` and
/// `pe[p, 2i+1] = cos(p / 10000^(2i/dim))`. Position 0 is the CLS slot.
pub fn sinusoidal_positions(positions: usize, dim: usize) -> Result<Tensor, ModelError> {
    if dim == 0 || dim % 2 != 0 {
        return Err(ModelError::OddPositionDim(dim));
    }
    let mut data = vec![0.0; positions * dim];
    for p in 0..positions {
        for i in 0..dim / 2 {
            let angle = p as f64 / 10000f64.powf((2 * i) as f64 / dim as f64);
            data[p * dim + 2 * i] = angle.sin();
            data[p * dim + 2 * i + 1] = angle.cos();
        }
    }
    Ok(Tensor::new(vec![positions, dim], data)?)
}
