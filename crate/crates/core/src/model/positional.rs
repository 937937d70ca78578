//! Sinusoidal positional encoding.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// The classic sinusoidal table: entry (pos, 2i) = sin(pos / 10000^(2i/dim)),
/// entry (pos, 2i+1) = cos of the same argument.
pub fn positional_encoding(length: usize, dim: usize) -> Result<Tensor> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::shape(format!("positional encoding dim must be even, got {dim}")));
    }
    if length == 0 {
        return Err(Error::shape("positional encoding length must be positive"));
    }
    let mut data = vec![0.0; length * dim];
    for pos in 0..length {
        for i in 0..dim / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / dim as f64);
            data[pos * dim + 2 * i] = angle.sin();
            data[pos * dim + 2 * i + 1] = angle.cos();
        }
    }
    Tensor::new(vec![length, dim], data)
}
