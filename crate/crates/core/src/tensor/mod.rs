//! Dense tensors and the forward/vector-Jacobian kernels the network needs.
//!
//! Images and activations use the `N x C x H x W` layout in row-major order.
//! Every kernel is a pure function of its inputs and checks its output for
//! non-finite values before returning it.

mod activation;
mod conv;
mod gradcheck;
mod linear;
mod pool;
mod softmax;

pub use activation::{dropout_forward, dropout_vjp, relu_forward, relu_vjp};
pub use conv::{conv2d_forward, conv2d_vjp, conv2d_vjp_input, ConvGrads, ConvParams};
pub use gradcheck::{finite_diff_check, smooth, GradCheck};
pub use linear::{linear_forward, linear_vjp, LinearGrads};
pub use pool::{avgpool2d_forward, avgpool2d_vjp};
pub use softmax::{softmax_cross_entropy, softmax_cross_entropy_batch};

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAX_RANK: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > MAX_RANK {
        return Err(Error::InvalidArgument(format!(
            "tensor rank must be 1..={MAX_RANK}, got shape {shape:?}"
        )));
    }
    if shape.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "tensor dimensions must be positive, got {shape:?}"
        )));
    }
    Ok(shape.iter().product())
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let len = check_shape(shape)?;
        if data.len() != len {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape:?} needs {len} values, got {}", data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "tensor" });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| T::of(v)).collect())
    }

    pub fn full(shape: &[usize], value: T) -> Result<Self> {
        let len = check_shape(shape)?;
        Self::new(shape, vec![value; len])
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, T::zero())
    }

    pub fn zeros_like(other: &Tensor<T>) -> Self {
        Tensor {
            shape: other.shape.clone(),
            data: vec![T::zero(); other.data.len()],
        }
    }

    /// Samples every element uniformly from `[lo, hi)`.
    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Result<Self> {
        let len = check_shape(shape)?;
        if !(lo < hi) {
            return Err(Error::InvalidArgument(format!("empty sampling range [{lo}, {hi})")));
        }
        let data = (0..len).map(|_| T::of(rng.gen_range(lo..hi))).collect();
        Self::new(shape, data)
    }

    /// Wraps kernel output, rejecting non-finite values.
    pub(crate) fn from_kernel(op: &'static str, shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op });
        }
        Ok(Tensor { shape, data })
    }

    pub(crate) fn from_wide(op: &'static str, shape: Vec<usize>, data: &[f64]) -> Result<Self> {
        Self::from_kernel(op, shape, data.iter().map(|&v| T::of(v)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.wide()).collect()
    }

    /// Returns `(n, c, h, w)` for a rank-4 tensor.
    pub fn dims4(&self, op: &'static str) -> Result<(usize, usize, usize, usize)> {
        match *self.shape.as_slice() {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(Error::shape(op, format!("expected an NxCxHxW tensor, got {:?}", self.shape))),
        }
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != self.data.len() {
            return Err(Error::shape(
                "reshape",
                format!("cannot view {:?} as {shape:?}", self.shape),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    /// Flattens to rank 1.
    pub fn flatten(&self) -> Self {
        Tensor {
            shape: vec![self.data.len()],
            data: self.data.clone(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::of(v.wide())).collect(),
        }
    }

    pub fn map(&self, op: &'static str, f: impl Fn(T) -> T) -> Result<Self> {
        Self::from_kernel(op, self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Tensor<T>, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.expect_same_shape(other, op)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Self::from_kernel(op, self.shape.clone(), data)
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Self> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Self> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn scale(&self, factor: f64) -> Result<Self> {
        let f = T::of(factor);
        self.map("scale", |v| v * f)
    }

    /// `self += factor * other`.
    pub fn add_scaled_assign(&mut self, other: &Tensor<T>, factor: f64) -> Result<()> {
        self.expect_same_shape(other, "add_scaled")?;
        let f = T::of(factor);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += f * b;
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "add_scaled" });
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|v| v.wide()).sum()
    }

    pub fn dot(&self, other: &Tensor<T>) -> Result<f64> {
        self.expect_same_shape(other, "dot")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.wide() * b.wide())
            .sum())
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v.wide() * v.wide()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.wide().abs()))
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> Result<f64> {
        self.expect_same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a.wide() - b.wide()).abs())))
    }

    pub fn get(&self, index: usize) -> T {
        self.data[index]
    }

    /// Returns a copy with element `index` replaced.
    pub fn with_value(&self, index: usize, value: T) -> Self {
        let mut out = self.clone();
        out.data[index] = value;
        out
    }

    /// Stacks rank-4 tensors with identical `C x H x W` along the batch axis.
    pub fn stack_batch(items: &[&Tensor<T>]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot stack an empty list".into()))?;
        let (_, c, h, w) = first.dims4("stack_batch")?;
        let mut data = Vec::new();
        let mut n = 0;
        for t in items {
            let (tn, tc, th, tw) = t.dims4("stack_batch")?;
            if (tc, th, tw) != (c, h, w) {
                return Err(Error::shape(
                    "stack_batch",
                    format!("{:?} vs {:?}", first.shape, t.shape),
                ));
            }
            n += tn;
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor {
            shape: vec![n, c, h, w],
            data,
        })
    }

    pub(crate) fn expect_same_shape(&self, other: &Tensor<T>, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(op, format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(())
    }

    pub(crate) fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor::<f32>::new(&[2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::<f32>::zeros(&[]).is_err());
        assert!(Tensor::<f32>::zeros(&[1, 0]).is_err());
        assert!(Tensor::<f32>::zeros(&[1, 1, 1, 1, 1]).is_err());
    }

    #[test]
    fn rejects_non_finite_data() {
        let err = Tensor::<f32>::new(&[2], vec![1.0, f32::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
        let t = Tensor::<f32>::full(&[1], f32::MAX).unwrap();
        assert!(t.scale(10.0).is_err());
    }

    #[test]
    fn stack_concatenates_batches() {
        let a = Tensor::<f64>::full(&[1, 1, 1, 2], 1.0).unwrap();
        let b = Tensor::<f64>::full(&[2, 1, 1, 2], 2.0).unwrap();
        let s = Tensor::stack_batch(&[&a, &b]).unwrap();
        assert_eq!(s.shape(), &[3, 1, 1, 2]);
        assert_eq!(s.to_f64_vec(), vec![1.0, 1.0, 2.0, 2.0, 2.0, 2.0]);
    }
}
