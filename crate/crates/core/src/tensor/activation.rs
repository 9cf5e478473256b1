use rand::Rng;

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn relu_forward<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    input.map("relu_forward", |v| v.max(T::zero()))
}

/// Passes `upstream` where `input > 0`. The subgradient at exactly 0 is 0.
pub fn relu_vjp<T: Scalar>(input: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    input.zip_map(upstream, "relu_vjp", |x, u| if x > T::zero() { u } else { T::zero() })
}

/// Inverted dropout: kept units are scaled by `1 / (1 - rate)`.
///
/// Returns the output and the multiplicative mask, which is what the
/// vector-Jacobian product needs.
pub fn dropout_forward<T: Scalar, R: Rng + ?Sized>(
    input: &Tensor<T>,
    rate: f64,
    rng: &mut R,
) -> Result<(Tensor<T>, Tensor<T>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")));
    }
    let keep = T::of(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..input.len())
        .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
        .collect();
    let mask = Tensor::from_kernel("dropout_forward", input.shape().to_vec(), mask)?;
    let out = input.zip_map(&mask, "dropout_forward", |x, m| x * m)?;
    Ok((out, mask))
}

pub fn dropout_vjp<T: Scalar>(mask: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    upstream.zip_map(mask, "dropout_vjp", |u, m| u * m)
}
