use rayon::prelude::*;

use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Parameters of a 2-D cross-correlation with zero padding.
#[derive(Clone, Copy, Debug)]
pub struct ConvParams<'a, T> {
    /// `out_c x in_c x kh x kw`.
    pub weights: &'a Tensor<T>,
    /// `out_c`.
    pub bias: &'a Tensor<T>,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

struct Geometry {
    n: usize,
    in_c: usize,
    h: usize,
    w: usize,
    out_c: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    pad: usize,
}

impl Geometry {
    /// Input row for output row `o` and kernel row `k`, or `None` inside the padding.
    #[inline]
    fn src(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + k).checked_sub(self.pad)?;
        (pos < extent).then_some(pos)
    }
}

impl<'a, T: Scalar> ConvParams<'a, T> {
    pub fn new(weights: &'a Tensor<T>, bias: &'a Tensor<T>, stride: usize, padding: usize) -> Result<Self> {
        let p = ConvParams {
            weights,
            bias,
            stride,
            padding,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        let (out_c, _, _, _) = self.weights.dims4("conv2d")?;
        if self.bias.shape() != [out_c] {
            return Err(Error::shape(
                "conv2d",
                format!(
                    "bias {:?} does not match weights {:?}",
                    self.bias.shape(),
                    self.weights.shape()
                ),
            ));
        }
        if self.stride == 0 {
            return Err(Error::InvalidArgument("conv2d stride must be positive".into()));
        }
        Ok(())
    }

    fn geometry(&self, input: &Tensor<T>) -> Result<Geometry> {
        self.validate()?;
        let (n, in_c, h, w) = input.dims4("conv2d")?;
        let (out_c, w_in_c, kh, kw) = self.weights.dims4("conv2d")?;
        if in_c != w_in_c {
            return Err(Error::shape(
                "conv2d",
                format!(
                    "input {:?} has {in_c} channels but weights {:?} expect {w_in_c}",
                    input.shape(),
                    self.weights.shape()
                ),
            ));
        }
        let (ph, pw) = (h + 2 * self.padding, w + 2 * self.padding);
        if ph < kh || pw < kw {
            return Err(Error::shape(
                "conv2d",
                format!(
                    "padded input {ph}x{pw} of {:?} is smaller than kernel {:?}",
                    input.shape(),
                    self.weights.shape()
                ),
            ));
        }
        Ok(Geometry {
            n,
            in_c,
            h,
            w,
            out_c,
            kh,
            kw,
            oh: (ph - kh) / self.stride + 1,
            ow: (pw - kw) / self.stride + 1,
            stride: self.stride,
            pad: self.padding,
        })
    }

    pub fn output_shape(&self, input: &Tensor<T>) -> Result<[usize; 4]> {
        let g = self.geometry(input)?;
        Ok([g.n, g.out_c, g.oh, g.ow])
    }
}

pub fn conv2d_forward<T: Scalar>(input: &Tensor<T>, p: &ConvParams<'_, T>) -> Result<Tensor<T>> {
    let g = p.geometry(input)?;
    let x = input.data();
    let wt = p.weights.data();
    let b = p.bias.data();
    let plane = g.oh * g.ow;
    let mut out = vec![0.0f64; g.n * g.out_c * plane];

    out.par_chunks_mut(plane).enumerate().for_each(|(idx, acc)| {
        let (n, oc) = (idx / g.out_c, idx % g.out_c);
        acc.fill(b[oc].wide());
        for ic in 0..g.in_c {
            let src = &x[(n * g.in_c + ic) * g.h * g.w..][..g.h * g.w];
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let wv = wt[((oc * g.in_c + ic) * g.kh + ky) * g.kw + kx].wide();
                    if wv == 0.0 {
                        continue;
                    }
                    for oy in 0..g.oh {
                        let Some(iy) = g.src(oy, ky, g.h) else { continue };
                        let row = &src[iy * g.w..][..g.w];
                        let out_row = &mut acc[oy * g.ow..][..g.ow];
                        for (ox, o) in out_row.iter_mut().enumerate() {
                            if let Some(ix) = g.src(ox, kx, g.w) {
                                *o += wv * row[ix].wide();
                            }
                        }
                    }
                }
            }
        }
    });
    Tensor::from_wide("conv2d_forward", vec![g.n, g.out_c, g.oh, g.ow], &out)
}

fn check_upstream<T: Scalar>(g: &Geometry, upstream: &Tensor<T>) -> Result<()> {
    let expected = [g.n, g.out_c, g.oh, g.ow];
    if upstream.shape() != expected {
        return Err(Error::shape(
            "conv2d_vjp",
            format!(
                "upstream gradient {:?} does not match output {expected:?}",
                upstream.shape()
            ),
        ));
    }
    Ok(())
}

fn grad_input<T: Scalar>(g: &Geometry, p: &ConvParams<'_, T>, up: &[T]) -> Vec<f64> {
    let wt = p.weights.data();
    let plane = g.h * g.w;
    let oplane = g.oh * g.ow;
    let mut gi = vec![0.0f64; g.n * g.in_c * plane];
    gi.par_chunks_mut(plane).enumerate().for_each(|(idx, acc)| {
        let (n, ic) = (idx / g.in_c, idx % g.in_c);
        for oc in 0..g.out_c {
            let u = &up[(n * g.out_c + oc) * oplane..][..oplane];
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let wv = wt[((oc * g.in_c + ic) * g.kh + ky) * g.kw + kx].wide();
                    if wv == 0.0 {
                        continue;
                    }
                    for oy in 0..g.oh {
                        let Some(iy) = g.src(oy, ky, g.h) else { continue };
                        for ox in 0..g.ow {
                            if let Some(ix) = g.src(ox, kx, g.w) {
                                acc[iy * g.w + ix] += wv * u[oy * g.ow + ox].wide();
                            }
                        }
                    }
                }
            }
        }
    });
    gi
}

/// Gradient with respect to the input only; skips the parameter reductions.
pub fn conv2d_vjp_input<T: Scalar>(
    input: &Tensor<T>,
    p: &ConvParams<'_, T>,
    upstream: &Tensor<T>,
) -> Result<Tensor<T>> {
    let g = p.geometry(input)?;
    check_upstream(&g, upstream)?;
    let gi = grad_input(&g, p, upstream.data());
    Tensor::from_wide("conv2d_vjp", input.shape().to_vec(), &gi)
}

pub fn conv2d_vjp<T: Scalar>(
    input: &Tensor<T>,
    p: &ConvParams<'_, T>,
    upstream: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let g = p.geometry(input)?;
    check_upstream(&g, upstream)?;
    let up = upstream.data();
    let x = input.data();
    let gi = grad_input(&g, p, up);

    let ksize = g.in_c * g.kh * g.kw;
    let oplane = g.oh * g.ow;
    let mut gw = vec![0.0f64; g.out_c * ksize];
    gw.par_chunks_mut(ksize).enumerate().for_each(|(oc, acc)| {
        for n in 0..g.n {
            let u = &up[(n * g.out_c + oc) * oplane..][..oplane];
            for ic in 0..g.in_c {
                let src = &x[(n * g.in_c + ic) * g.h * g.w..][..g.h * g.w];
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        let mut s = 0.0;
                        for oy in 0..g.oh {
                            let Some(iy) = g.src(oy, ky, g.h) else { continue };
                            for ox in 0..g.ow {
                                if let Some(ix) = g.src(ox, kx, g.w) {
                                    s += u[oy * g.ow + ox].wide() * src[iy * g.w + ix].wide();
                                }
                            }
                        }
                        acc[(ic * g.kh + ky) * g.kw + kx] += s;
                    }
                }
            }
        }
    });

    let gb: Vec<f64> = (0..g.out_c)
        .map(|oc| {
            (0..g.n)
                .map(|n| {
                    up[(n * g.out_c + oc) * oplane..][..oplane]
                        .iter()
                        .map(|v| v.wide())
                        .sum::<f64>()
                })
                .sum()
        })
        .collect();

    Ok(ConvGrads {
        input: Tensor::from_wide("conv2d_vjp", input.shape().to_vec(), &gi)?,
        weights: Tensor::from_wide("conv2d_vjp", p.weights.shape().to_vec(), &gw)?,
        bias: Tensor::from_wide("conv2d_vjp", vec![g.out_c], &gb)?,
    })
}
