use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct LinearGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Checks `weights: out x in` and `bias: out` against an input whose first
/// axis is the batch; trailing axes are flattened into the feature vector.
fn dims<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>, op: &'static str) -> Result<(usize, usize, usize)> {
    let (out_f, in_f) = match *weights.shape() {
        [o, i] => (o, i),
        _ => return Err(Error::shape(op, format!("weights must be out x in, got {:?}", weights.shape()))),
    };
    if bias.shape() != [out_f] {
        return Err(Error::shape(op, format!("bias {:?} vs weights {:?}", bias.shape(), weights.shape())));
    }
    let batch = if input.rank() == 1 { 1 } else { input.shape()[0] };
    if input.len() != batch * in_f {
        return Err(Error::shape(
            op,
            format!("input {:?} does not carry {in_f} features per row for weights {:?}", input.shape(), weights.shape()),
        ));
    }
    Ok((batch, in_f, out_f))
}

/// `y = W x + b` for each batch row. Output shape is `batch x out`.
pub fn linear_forward<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (batch, in_f, out_f) = dims(input, weights, bias, "linear_forward")?;
    let (x, w, b) = (input.data(), weights.data(), bias.data());
    let mut out = Vec::with_capacity(batch * out_f);
    for row in x.chunks(in_f) {
        for (o, wrow) in w.chunks(in_f).enumerate() {
            let s: f64 = wrow.iter().zip(row).map(|(a, b)| a.wide() * b.wide()).sum();
            out.push(s + b[o].wide());
        }
    }
    Tensor::from_wide("linear_forward", vec![batch, out_f], &out)
}

/// Returns `W^T u`, `u x^T` and `u`, summed over the batch.
pub fn linear_vjp<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    upstream: &Tensor<T>,
) -> Result<LinearGrads<T>> {
    let (batch, in_f, out_f) = dims(input, weights, bias, "linear_vjp")?;
    if upstream.shape() != [batch, out_f] {
        return Err(Error::shape(
            "linear_vjp",
            format!("upstream {:?} vs output {:?}", upstream.shape(), [batch, out_f]),
        ));
    }
    let (x, w, u) = (input.data(), weights.data(), upstream.data());
    let mut gi = vec![0.0f64; batch * in_f];
    let mut gw = vec![0.0f64; out_f * in_f];
    let mut gb = vec![0.0f64; out_f];
    for n in 0..batch {
        let xrow = &x[n * in_f..][..in_f];
        let girow = &mut gi[n * in_f..][..in_f];
        for o in 0..out_f {
            let uv = u[n * out_f + o].wide();
            if uv == 0.0 {
                continue;
            }
            gb[o] += uv;
            let wrow = &w[o * in_f..][..in_f];
            let gwrow = &mut gw[o * in_f..][..in_f];
            for i in 0..in_f {
                girow[i] += wrow[i].wide() * uv;
                gwrow[i] += uv * xrow[i].wide();
            }
        }
    }
    Ok(LinearGrads {
        input: Tensor::from_wide("linear_vjp", input.shape().to_vec(), &gi)?,
        weights: Tensor::from_wide("linear_vjp", weights.shape().to_vec(), &gw)?,
        bias: Tensor::from_wide("linear_vjp", vec![out_f], &gb)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_pass_input() {
        let x = Tensor::<f32>::from_f64(&[2, 3], &[1.0, -2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let eye = Tensor::from_f64(&[3, 3], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::zeros(&[3]).unwrap();
        assert_eq!(linear_forward(&x, &eye, &b).unwrap(), x);
    }

    #[test]
    fn zero_input_gives_bias() {
        let x = Tensor::<f32>::zeros(&[1, 4]).unwrap();
        let w = Tensor::full(&[2, 4], 0.7).unwrap();
        let b = Tensor::from_f64(&[2], &[0.5, -1.5]).unwrap();
        assert_eq!(linear_forward(&x, &w, &b).unwrap().to_f64_vec(), vec![0.5, -1.5]);
    }

    #[test]
    fn flattens_trailing_axes() {
        let x = Tensor::<f64>::full(&[2, 2, 1, 1], 1.0).unwrap();
        let w = Tensor::full(&[1, 2], 1.0).unwrap();
        let b = Tensor::zeros(&[1]).unwrap();
        let y = linear_forward(&x, &w, &b).unwrap();
        assert_eq!(y.shape(), &[2, 1]);
        let g = linear_vjp(&x, &w, &b, &Tensor::full(&[2, 1], 1.0).unwrap()).unwrap();
        assert_eq!(g.input.shape(), x.shape());
        assert_eq!(g.weights.to_f64_vec(), vec![2.0, 2.0]);
        assert_eq!(g.bias.to_f64_vec(), vec![2.0]);
    }

    #[test]
    fn rejects_feature_mismatch() {
        let x = Tensor::<f32>::zeros(&[1, 5]).unwrap();
        let w = Tensor::zeros(&[2, 4]).unwrap();
        let b = Tensor::zeros(&[2]).unwrap();
        assert!(linear_forward(&x, &w, &b).is_err());
    }
}
