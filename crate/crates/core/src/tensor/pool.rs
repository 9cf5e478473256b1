use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn pooled_dims<T: Scalar>(input: &Tensor<T>, op: &'static str) -> Result<(usize, usize, usize, usize)> {
    let (n, c, h, w) = input.dims4(op)?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(
            op,
            format!(
                "spatial size {h}x{w} of {:?} is not divisible by 2; resize the input so both \
                 sides are multiples of 2 per pooling stage",
                input.shape()
            ),
        ));
    }
    Ok((n, c, h, w))
}

/// 2x2 average pooling with stride 2.
pub fn avgpool2d_forward<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = pooled_dims(input, "avgpool2d_forward")?;
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for plane in x.chunks(h * w) {
        for oy in 0..oh {
            for ox in 0..ow {
                let (y, xx) = (2 * oy, 2 * ox);
                let s = plane[y * w + xx].wide()
                    + plane[y * w + xx + 1].wide()
                    + plane[(y + 1) * w + xx].wide()
                    + plane[(y + 1) * w + xx + 1].wide();
                out.push(s * 0.25);
            }
        }
    }
    Tensor::from_wide("avgpool2d_forward", vec![n, c, oh, ow], &out)
}

/// Spreads each upstream value evenly over its 2x2 window.
pub fn avgpool2d_vjp<T: Scalar>(input: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = pooled_dims(input, "avgpool2d_vjp")?;
    let (oh, ow) = (h / 2, w / 2);
    if upstream.shape() != [n, c, oh, ow] {
        return Err(Error::shape(
            "avgpool2d_vjp",
            format!("upstream {:?} vs pooled output {:?}", upstream.shape(), [n, c, oh, ow]),
        ));
    }
    let quarter = T::of(0.25);
    let mut out = vec![T::zero(); input.len()];
    for (plane, up) in out.chunks_mut(h * w).zip(upstream.data().chunks(oh * ow)) {
        for y in 0..h {
            for x in 0..w {
                plane[y * w + x] = up[(y / 2) * ow + x / 2] * quarter;
            }
        }
    }
    Tensor::from_kernel("avgpool2d_vjp", input.shape().to_vec(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_input_stays_constant() {
        let x = Tensor::<f32>::full(&[2, 3, 4, 6], 1.5).unwrap();
        let y = avgpool2d_forward(&x).unwrap();
        assert_eq!(y.shape(), &[2, 3, 2, 3]);
        assert!(y.data().iter().all(|&v| v == 1.5));
    }

    #[test]
    fn single_window_mean() {
        let x = Tensor::<f32>::from_f64(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(avgpool2d_forward(&x).unwrap().to_f64_vec(), vec![2.5]);
    }

    #[test]
    fn vjp_of_ones_is_quarter_everywhere() {
        let x = Tensor::<f64>::zeros(&[1, 2, 4, 4]).unwrap();
        let up = Tensor::full(&[1, 2, 2, 2], 1.0).unwrap();
        let g = avgpool2d_vjp(&x, &up).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn odd_size_asks_for_resize() {
        let x = Tensor::<f32>::zeros(&[1, 1, 3, 4]).unwrap();
        let msg = avgpool2d_forward(&x).unwrap_err().to_string();
        assert!(msg.contains("resize"), "{msg}");
    }
}
