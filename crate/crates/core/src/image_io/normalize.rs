use super::raster::RasterImage;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const IMAGENET_MEAN: [f64; 3] = [123.68, 116.779, 103.939];

/// How 0-255 pixel values map to tensor values. Exactly one mode is active.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Normalization {
    /// `v - mean[c]`, values stay on the 0-255 scale.
    MeanSubtract { mean: [f64; 3] },
    /// `v * factor` (typically `1/255`).
    Scale { factor: f64 },
}

impl Normalization {
    fn forward(&self, c: usize, v: f64) -> f64 {
        match *self {
            Normalization::MeanSubtract { mean } => v - mean[c],
            Normalization::Scale { factor } => v * factor,
        }
    }

    fn inverse(&self, c: usize, v: f64) -> f64 {
        match *self {
            Normalization::MeanSubtract { mean } => v + mean[c],
            Normalization::Scale { factor } => v / factor,
        }
    }
}

/// Per-channel bounds of valid normalized pixel values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelRange {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizationSpec {
    pub mode: Normalization,
    pub target_height: usize,
    pub target_width: usize,
}

impl Default for NormalizationSpec {
    fn default() -> Self {
        NormalizationSpec {
            mode: Normalization::MeanSubtract { mean: IMAGENET_MEAN },
            target_height: 224,
            target_width: 224,
        }
    }
}

impl NormalizationSpec {
    /// 16x16 mean-subtracted input for desk-scale runs.
    pub fn toy() -> Self {
        NormalizationSpec {
            target_height: 16,
            target_width: 16,
            ..Self::default()
        }
    }

    /// Checks the target size is divisible by `2^pool_depth` and the mode is usable.
    pub fn validate(&self, pool_depth: usize) -> Result<()> {
        let m = 1usize << pool_depth;
        if self.target_height == 0 || self.target_width == 0 || self.target_height % m != 0 || self.target_width % m != 0 {
            return Err(Error::InvalidArgument(format!(
                "target size {}x{} must be positive and divisible by {m}",
                self.target_height, self.target_width
            )));
        }
        match self.mode {
            Normalization::Scale { factor } if !(factor.is_finite() && factor > 0.0) => {
                Err(Error::InvalidArgument(format!("pixel scale {factor} must be positive")))
            }
            Normalization::MeanSubtract { mean } if mean.iter().any(|m| !m.is_finite()) => {
                Err(Error::InvalidArgument("channel means must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn pixel_range(&self) -> PixelRange {
        let lo = [0, 1, 2].map(|c| self.mode.forward(c, 0.0));
        let hi = [0, 1, 2].map(|c| self.mode.forward(c, 255.0));
        PixelRange { lo, hi }
    }
}

/// Bilinear resize of one channel plane with corner-aligned sampling: the
/// first and last output samples sit on the first and last input samples.
/// A single output sample along an axis sits at the input's centre.
pub fn resize_bilinear(plane: &[f64], in_w: usize, in_h: usize, out_w: usize, out_h: usize) -> Vec<f64> {
    assert_eq!(plane.len(), in_w * in_h, "plane size");
    if (in_w, in_h) == (out_w, out_h) {
        return plane.to_vec();
    }
    let coord = |o: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
        let src = if n_out == 1 {
            (n_in - 1) as f64 / 2.0
        } else {
            o as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
        };
        let i0 = (src.floor() as usize).min(n_in - 1);
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, src - i0 as f64)
    };
    let mut out = Vec::with_capacity(out_w * out_h);
    for oy in 0..out_h {
        let (y0, y1, fy) = coord(oy, in_h, out_h);
        for ox in 0..out_w {
            let (x0, x1, fx) = coord(ox, in_w, out_w);
            let top = plane[y0 * in_w + x0] * (1.0 - fx) + plane[y0 * in_w + x1] * fx;
            let bottom = plane[y1 * in_w + x0] * (1.0 - fx) + plane[y1 * in_w + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Resizes to the target size and normalizes into a `1 x 3 x H x W` tensor.
pub fn to_tensor<T: Scalar>(img: &RasterImage, norm: &NormalizationSpec) -> Result<Tensor<T>> {
    let (w, h) = (img.width(), img.height());
    let (tw, th) = (norm.target_width, norm.target_height);
    if tw == 0 || th == 0 {
        return Err(Error::InvalidArgument("target size must be positive".into()));
    }
    let mut data = Vec::with_capacity(3 * tw * th);
    for c in 0..3 {
        let plane: Vec<f64> = img.pixels().iter().skip(c).step_by(3).map(|&v| v as f64).collect();
        let resized = resize_bilinear(&plane, w, h, tw, th);
        data.extend(resized.into_iter().map(|v| norm.mode.forward(c, v)));
    }
    Tensor::from_f64(&[1, 3, th, tw], &data)
}

/// Undoes the normalization, clamps to `[0, 255]` and rounds to 8 bits.
/// The output has the tensor's spatial size.
pub fn from_tensor<T: Scalar>(t: &Tensor<T>, norm: &NormalizationSpec) -> Result<RasterImage> {
    let (n, c, h, w) = t.dims4("from_tensor")?;
    if n != 1 || c != 3 {
        return Err(Error::shape("from_tensor", format!("expected 1x3xHxW, got {:?}", t.shape())));
    }
    let data = t.data();
    let mut pixels = Vec::with_capacity(3 * h * w);
    for i in 0..h * w {
        for ch in 0..3 {
            let v = norm.mode.inverse(ch, data[ch * h * w + i].wide());
            pixels.push(v.clamp(0.0, 255.0).round() as u8);
        }
    }
    RasterImage::new(w, h, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_color_minus_mean() {
        let img = RasterImage::filled(5, 3, [200, 100, 50]).unwrap();
        let norm = NormalizationSpec {
            target_height: 4,
            target_width: 6,
            ..NormalizationSpec::default()
        };
        let t: Tensor<f64> = to_tensor(&img, &norm).unwrap();
        assert_eq!(t.shape(), &[1, 3, 4, 6]);
        for (c, v) in [200.0, 100.0, 50.0].iter().enumerate() {
            let expected = v - IMAGENET_MEAN[c];
            assert!(t.data()[c * 24..(c + 1) * 24].iter().all(|&x| (x - expected).abs() < 1e-12));
        }
    }

    #[test]
    fn two_by_two_to_one_averages() {
        let out = resize_bilinear(&[0.0, 0.0, 0.0, 255.0], 2, 2, 1, 1);
        assert_eq!(out, vec![63.75]);
    }

    #[test]
    fn corner_aligned_endpoints() {
        let out = resize_bilinear(&[0.0, 10.0], 2, 1, 3, 1);
        assert_eq!(out, vec![0.0, 5.0, 10.0]);
    }

    #[test]
    fn round_trip_at_native_size() {
        let pixels: Vec<u8> = (0..4 * 4 * 3).map(|i| (i * 37 % 256) as u8).collect();
        let img = RasterImage::new(4, 4, pixels).unwrap();
        for mode in [
            Normalization::MeanSubtract { mean: IMAGENET_MEAN },
            Normalization::Scale { factor: 1.0 / 255.0 },
        ] {
            let norm = NormalizationSpec {
                mode,
                target_height: 4,
                target_width: 4,
            };
            let t: Tensor<f32> = to_tensor(&img, &norm).unwrap();
            assert_eq!(from_tensor(&t, &norm).unwrap(), img);
        }
    }

    #[test]
    fn from_tensor_clamps() {
        let norm = NormalizationSpec {
            mode: Normalization::Scale { factor: 1.0 / 255.0 },
            target_height: 1,
            target_width: 1,
        };
        let t = Tensor::<f32>::from_f64(&[1, 3, 1, 1], &[-0.5, 2.0, 0.5]).unwrap();
        assert_eq!(from_tensor(&t, &norm).unwrap().pixel(0, 0), [0, 255, 128]);
    }

    #[test]
    fn pixel_range_per_mode() {
        let r = NormalizationSpec::default().pixel_range();
        assert_eq!(r.lo[0], -123.68);
        assert!((r.hi[2] - (255.0 - 103.939)).abs() < 1e-12);
        let s = NormalizationSpec {
            mode: Normalization::Scale { factor: 1.0 / 255.0 },
            ..NormalizationSpec::toy()
        };
        assert_eq!(s.pixel_range(), PixelRange { lo: [0.0; 3], hi: [1.0; 3] });
    }

    #[test]
    fn validates_divisibility() {
        assert!(NormalizationSpec::default().validate(5).is_ok());
        assert!(NormalizationSpec::toy().validate(4).is_ok());
        assert!(NormalizationSpec::toy().validate(5).is_err());
    }
}
