//! Finite-difference checks of every hand-written gradient, in `f64`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::image_io::PixelRange;
use crate::nst::{content_loss, layer_style_loss, transfer_gradient, ContentTarget, NstConfig, StyleLayerTarget};
use crate::rng::{rng_from, sub_rng, JobRng};
use crate::tensor::{
    avgpool2d_forward, avgpool2d_vjp, conv2d_forward, conv2d_vjp, dropout_forward, dropout_vjp, finite_diff_check, linear_forward,
    linear_vjp, relu_forward, relu_vjp, smooth, softmax_cross_entropy_batch, ConvParams, GradCheck, Tensor,
};
use crate::vgg::{forward_trace, LayerDesc, LayerKind, Mode, NetworkSpec, WeightStore};

/// Relative error a check must stay under.
pub const GRADCHECK_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct NamedCheck {
    pub name: String,
    pub result: GradCheck,
}

#[derive(Clone, Debug)]
pub struct GradcheckReport {
    pub eps: f64,
    pub tolerance: f64,
    pub checks: Vec<NamedCheck>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.result.passes(self.tolerance))
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        writeln!(s, "gradient check, eps {:e}, tolerance {:e}", self.eps, self.tolerance).unwrap();
        for c in &self.checks {
            let verdict = if c.result.passes(self.tolerance) { "ok" } else { "FAIL" };
            writeln!(
                s,
                "{:<28} max rel err {:.3e}  checked {:>4}  skipped {:>3}  {verdict}",
                c.name, c.result.max_relative_error, c.result.checked, c.result.skipped
            )
            .unwrap();
        }
        writeln!(s, "{}", if self.passed() { "all checks passed" } else { "gradient check FAILED" }).unwrap();
        s
    }
}

type T = f64;

fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut JobRng) -> Result<Tensor<T>> {
    Tensor::uniform(shape, lo, hi, rng)
}

/// True when some coordinate changes sign between the two tensors.
fn sign_flip(a: &Tensor<T>, b: &Tensor<T>) -> bool {
    a.data().iter().zip(b.data()).any(|(x, y)| (*x > 0.0) != (*y > 0.0))
}

struct Harness {
    eps: f64,
    checks: Vec<NamedCheck>,
}

impl Harness {
    fn push(&mut self, name: &str, result: GradCheck) {
        self.checks.push(NamedCheck {
            name: name.to_string(),
            result,
        });
    }

    /// Checks `x -> <forward(x), r>` against a supplied analytic gradient.
    fn projected(
        &mut self,
        name: &str,
        x: &Tensor<T>,
        r: &Tensor<T>,
        forward: impl Fn(&Tensor<T>) -> Result<Tensor<T>>,
        analytic: Tensor<T>,
    ) -> Result<()> {
        let f = |v: &Tensor<T>| forward(v)?.dot(r);
        let res = finite_diff_check(f, x, &analytic, self.eps, smooth)?;
        self.push(name, res);
        Ok(())
    }
}

fn check_conv(h: &mut Harness, rng: &mut JobRng) -> Result<()> {
    for (stride, padding) in [(1, 1), (2, 0)] {
        let x = uniform(&[2, 2, 5, 5], -1.0, 1.0, rng)?;
        let w = uniform(&[3, 2, 3, 3], -1.0, 1.0, rng)?;
        let b = uniform(&[3], -1.0, 1.0, rng)?;
        let p = ConvParams::new(&w, &b, stride, padding)?;
        let out = conv2d_forward(&x, &p)?;
        let r = uniform(out.shape(), -1.0, 1.0, rng)?;
        let g = conv2d_vjp(&x, &p, &r)?;
        let tag = format!("s{stride}p{padding}");
        h.projected(&format!("conv2d input {tag}"), &x, &r, |v| conv2d_forward(v, &p), g.input)?;
        h.projected(
            &format!("conv2d weights {tag}"),
            &w,
            &r,
            |v| conv2d_forward(&x, &ConvParams::new(v, &b, stride, padding)?),
            g.weights,
        )?;
        h.projected(
            &format!("conv2d bias {tag}"),
            &b,
            &r,
            |v| conv2d_forward(&x, &ConvParams::new(&w, v, stride, padding)?),
            g.bias,
        )?;
    }
    Ok(())
}

fn check_relu(h: &mut Harness, rng: &mut JobRng) -> Result<()> {
    let x = uniform(&[1, 2, 4, 4], -1.0, 1.0, rng)?;
    let r = uniform(x.shape(), -1.0, 1.0, rng)?;
    let analytic = relu_vjp(&x, &r)?;
    let f = |v: &Tensor<T>| relu_forward(v)?.dot(&r);
    let res = finite_diff_check(f, &x, &analytic, h.eps, |a, b| Ok(sign_flip(a, b)))?;
    h.push("relu", res);
    Ok(())
}

fn check_pool(h: &mut Harness, rng: &mut JobRng) -> Result<()> {
    let x = uniform(&[2, 3, 4, 6], -1.0, 1.0, rng)?;
    let r = uniform(&[2, 3, 2, 3], -1.0, 1.0, rng)?;
    let g = avgpool2d_vjp(&x, &r)?;
    h.projected("avgpool2d", &x, &r, avgpool2d_forward, g)
}

fn check_linear(h: &mut Harness, rng: &mut JobRng) -> Result<()> {
    let x = uniform(&[3, 5], -1.0, 1.0, rng)?;
    let w = uniform(&[4, 5], -1.0, 1.0, rng)?;
    let b = uniform(&[4], -1.0, 1.0, rng)?;
    let r = uniform(&[3, 4], -1.0, 1.0, rng)?;
    let g = linear_vjp(&x, &w, &b, &r)?;
    h.projected("linear input", &x, &r, |v| linear_forward(v, &w, &b), g.input)?;
    h.projected("linear weights", &w, &r, |v| linear_forward(&x, v, &b), g.weights)?;
    h.projected("linear bias", &b, &r, |v| linear_forward(&x, &w, v), g.bias)
}

fn check_softmax(h: &mut Harness, rng: &mut JobRng) -> Result<()> {
    let logits = uniform(&[3, 5], -3.0, 3.0, rng)?;
    let labels = [0, 4, 2];
    let (_, g) = softmax_cross_entropy_batch(&logits, &labels)?;
    let f = |v: &Tensor<T>| Ok(softmax_cross_entropy_batch(v, &labels)?.0);
    let res = finite_diff_check(f, &logits, &g, h.eps, smooth)?;
    h.push("softmax cross-entropy", res);
    Ok(())
}

fn check_dropout(h: &mut Harness, rng: &mut JobRng, seed: u64) -> Result<()> {
    let x = uniform(&[2, 8], -1.0, 1.0, rng)?;
    let r = uniform(x.shape(), -1.0, 1.0, rng)?;
    // Re-seeding per call keeps the mask fixed while x moves.
    let forward = |v: &Tensor<T>| Ok(dropout_forward(v, 0.5, &mut sub_rng(seed, "dropout", 0))?.0);
    let (_, mask) = dropout_forward(&x, 0.5, &mut sub_rng(seed, "dropout", 0))?;
    let g = dropout_vjp(&mask, &r)?;
    h.projected("dropout", &x, &r, forward, g)
}

fn check_losses(h: &mut Harness, rng: &mut JobRng) -> Result<()> {
    let a = uniform(&[1, 3, 3, 4], 0.0, 1.0, rng)?;
    let target = ContentTarget {
        layer: "t".into(),
        activation: uniform(a.shape(), 0.0, 1.0, rng)?,
    };
    let (_, g) = content_loss(&a, &target)?;
    let res = finite_diff_check(|v| Ok(content_loss(v, &target)?.0), &a, &g, h.eps, smooth)?;
    h.push("content loss", res);

    let style = StyleLayerTarget::from_activation("t", &uniform(a.shape(), 0.0, 1.0, rng)?)?;
    let (_, g) = layer_style_loss(&a, &style)?;
    let res = finite_diff_check(|v| Ok(layer_style_loss(v, &style)?.0), &a, &g, h.eps, smooth)?;
    h.push("style layer loss", res);
    Ok(())
}

/// Two 3x3 convolutions with ReLUs on an 8x8 RGB input.
pub fn toy_two_conv_net() -> Result<NetworkSpec> {
    NetworkSpec::from_layers(
        vec![
            LayerDesc::conv3x3("a", 3, 4),
            LayerDesc::new("a_relu", LayerKind::Relu),
            LayerDesc::conv3x3("b", 4, 4),
            LayerDesc::new("b_relu", LayerKind::Relu),
        ],
        [3, 8, 8],
        1,
    )
}

/// Image gradient of the total transfer loss on the two-conv net. Inputs
/// whose perturbation flips the sign of any pre-ReLU value are skipped.
fn check_end_to_end(h: &mut Harness, rng: &mut JobRng, seed: u64) -> Result<()> {
    let spec = toy_two_conv_net()?;
    let store = WeightStore::<T>::random(&spec, seed)?;
    let content = uniform(&[1, 3, 8, 8], -1.0, 1.0, rng)?;
    let style = uniform(&[1, 3, 8, 8], -1.0, 1.0, rng)?;
    let image = uniform(&[1, 3, 8, 8], -1.0, 1.0, rng)?;
    let cfg = NstConfig {
        content_layer: "b".into(),
        style_layers: vec!["a".into(), "b".into()],
        layer_weights: vec![0.5, 0.5],
        pixel_range: PixelRange {
            lo: [-1.0; 3],
            hi: [1.0; 3],
        },
        ..NstConfig::default()
    };
    let (_, analytic) = transfer_gradient(&content, &style, &image, &spec, &store, &cfg)?;
    let f = |v: &Tensor<T>| Ok(transfer_gradient(&content, &style, v, &spec, &store, &cfg)?.0.total);
    let pre_relu = |v: &Tensor<T>| -> Result<Vec<Tensor<T>>> {
        let trace = forward_trace(&spec, &store, v, None, Mode::Inference)?;
        Ok([0, 2]
            .iter()
            .map(|&i| trace.get(crate::vgg::TapPoint::Layer(i)).expect("layer ran").clone())
            .collect())
    };
    let kink = |a: &Tensor<T>, b: &Tensor<T>| -> Result<bool> {
        Ok(pre_relu(a)?.iter().zip(&pre_relu(b)?).any(|(x, y)| sign_flip(x, y)))
    };
    let res = finite_diff_check(f, &image, &analytic, h.eps, kink)?;
    h.push("end-to-end transfer loss", res);
    Ok(())
}

/// Runs every check with step `eps` on fixtures drawn from `seed`.
pub fn run_gradcheck(eps: f64, seed: u64) -> Result<GradcheckReport> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {eps}")));
    }
    let mut h = Harness { eps, checks: Vec::new() };
    let mut rng = rng_from(seed);
    check_conv(&mut h, &mut rng)?;
    check_relu(&mut h, &mut rng)?;
    check_pool(&mut h, &mut rng)?;
    check_linear(&mut h, &mut rng)?;
    check_softmax(&mut h, &mut rng)?;
    check_dropout(&mut h, &mut rng, seed)?;
    check_losses(&mut h, &mut rng)?;
    check_end_to_end(&mut h, &mut rng, seed)?;
    Ok(GradcheckReport {
        eps,
        tolerance: GRADCHECK_TOLERANCE,
        checks: h.checks,
    })
}
