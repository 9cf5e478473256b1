use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::adam::{adam_update, AdamConfig, AdamState};
use super::loss::{content_loss, style_loss, total_loss, ContentTarget, LossReport, StyleTarget};
use crate::error::{Error, Result};
use crate::image_io::{NormalizationSpec, PixelRange};
use crate::rng::rng_from;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::vgg::{backward, forward_trace, Mode, NetworkSpec, ParamGrads, TapPoint, WeightStore, CONTENT_LAYER, STYLE_LAYERS};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitMode {
    /// Uniform noise over the valid pixel range.
    WhiteNoise,
    ContentCopy,
}

impl FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "white_noise" => Ok(InitMode::WhiteNoise),
            "content_copy" => Ok(InitMode::ContentCopy),
            other => Err(Error::InvalidArgument(format!("init must be white_noise or content_copy, got `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NstConfig {
    /// Content weight.
    pub alpha: f64,
    /// Style weight.
    pub beta: f64,
    pub content_layer: String,
    pub style_layers: Vec<String>,
    /// One weight per style layer.
    pub layer_weights: Vec<f64>,
    pub iterations: usize,
    pub adam: AdamConfig,
    pub init: InitMode,
    /// Valid normalized pixel values; used for the noise init and the clamp after each step.
    pub pixel_range: PixelRange,
    pub seed: u64,
}

impl Default for NstConfig {
    fn default() -> Self {
        NstConfig {
            alpha: 1e-3,
            beta: 1.0,
            content_layer: CONTENT_LAYER.to_string(),
            style_layers: STYLE_LAYERS.iter().map(|s| s.to_string()).collect(),
            layer_weights: vec![0.2; STYLE_LAYERS.len()],
            iterations: 100,
            adam: AdamConfig::default(),
            init: InitMode::WhiteNoise,
            pixel_range: NormalizationSpec::default().pixel_range(),
            seed: 0,
        }
    }
}

impl NstConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layer_weights.len() != self.style_layers.len() {
            return Err(Error::InvalidArgument(format!(
                "{} style weights for {} style layers",
                self.layer_weights.len(),
                self.style_layers.len()
            )));
        }
        let weights_ok = [self.alpha, self.beta]
            .iter()
            .chain(&self.layer_weights)
            .all(|w| w.is_finite() && *w >= 0.0);
        if !weights_ok {
            return Err(Error::InvalidArgument("loss weights must be finite and non-negative".into()));
        }
        if (0..3).any(|c| !(self.pixel_range.lo[c] < self.pixel_range.hi[c])) {
            return Err(Error::InvalidArgument(format!("empty pixel range {:?}", self.pixel_range)));
        }
        self.adam.validate()
    }
}

/// Generated image plus the loss at the start of every iteration and at the end.
#[derive(Clone, Debug)]
pub struct TransferOutcome<T> {
    pub image: Tensor<T>,
    pub trace: Vec<LossReport>,
    pub final_loss: LossReport,
}

/// Precomputed targets and tap layout for one content/style pair.
struct Objective<'a, T> {
    spec: &'a NetworkSpec,
    store: &'a WeightStore<T>,
    cfg: &'a NstConfig,
    content: ContentTarget<T>,
    style: StyleTarget<T>,
    taps: BTreeMap<String, TapPoint>,
    last: Option<usize>,
}

impl<'a, T: Scalar> Objective<'a, T> {
    fn new(spec: &'a NetworkSpec, store: &'a WeightStore<T>, cfg: &'a NstConfig, content_img: &Tensor<T>, style_img: &Tensor<T>) -> Result<Self> {
        let names: BTreeSet<&str> = cfg
            .style_layers
            .iter()
            .map(String::as_str)
            .chain([cfg.content_layer.as_str()])
            .collect();
        let taps = names
            .into_iter()
            .map(|n| spec.tap(n).map(|p| (n.to_string(), p)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let last = taps
            .values()
            .filter_map(|p| match p {
                TapPoint::Layer(i) => Some(*i),
                TapPoint::Input => None,
            })
            .max();
        let mut obj = Objective {
            spec,
            store,
            cfg,
            content: ContentTarget {
                layer: cfg.content_layer.clone(),
                activation: Tensor::zeros(&[1])?,
            },
            style: StyleTarget { layers: Vec::new() },
            taps,
            last,
        };
        let content_acts = obj.activations(content_img)?.1;
        obj.content.activation = content_acts[&cfg.content_layer].clone();
        let style_acts = obj.activations(style_img)?.1;
        obj.style = StyleTarget::from_activations(&cfg.style_layers, &style_acts)?;
        Ok(obj)
    }

    fn activations(&self, image: &Tensor<T>) -> Result<(crate::vgg::ForwardTrace<T>, BTreeMap<String, Tensor<T>>)> {
        let trace = match self.last {
            Some(i) => forward_trace(self.spec, self.store, image, Some(i), Mode::Inference)?,
            None => forward_trace(self.spec, self.store, image, Some(0), Mode::Inference)?,
        };
        let acts = self
            .taps
            .iter()
            .map(|(n, p)| (n.clone(), trace.get(*p).expect("tap inside trace").clone()))
            .collect();
        Ok((trace, acts))
    }

    /// Loss report and image-space gradient of the total loss.
    fn evaluate(&self, image: &Tensor<T>) -> Result<(LossReport, Tensor<T>)> {
        let cfg = self.cfg;
        let (trace, acts) = self.activations(image)?;
        let (lc, gc) = content_loss(&acts[&cfg.content_layer], &self.content)?;
        let ls = style_loss(&acts, &self.style, &cfg.layer_weights)?;
        let report = total_loss(lc, &ls.per_layer, &cfg.layer_weights, cfg.alpha, cfg.beta)?;

        let mut seeds: BTreeMap<TapPoint, Tensor<T>> = BTreeMap::new();
        let mut add = |point: TapPoint, g: Tensor<T>, factor: f64| -> Result<()> {
            let g = g.scale(factor)?;
            match seeds.get_mut(&point) {
                Some(acc) => *acc = acc.add(&g)?,
                None => {
                    seeds.insert(point, g);
                }
            }
            Ok(())
        };
        if cfg.alpha != 0.0 {
            add(self.taps[&cfg.content_layer], gc, cfg.alpha)?;
        }
        if cfg.beta != 0.0 {
            for (layer, g) in ls.grads {
                add(self.taps[&layer], g, cfg.beta)?;
            }
        }
        let grad = backward(self.spec, self.store, &trace, &seeds, ParamGrads::None)?.input;
        Ok((report, grad))
    }
}

fn initial_image<T: Scalar>(content: &Tensor<T>, cfg: &NstConfig) -> Result<Tensor<T>> {
    match cfg.init {
        InitMode::ContentCopy => Ok(content.clone()),
        InitMode::WhiteNoise => {
            let (n, c, h, w) = content.dims4("run_transfer")?;
            if c != 3 {
                return Err(Error::shape("run_transfer", format!("expected RGB images, got {:?}", content.shape())));
            }
            let mut rng = rng_from(cfg.seed);
            let mut data = Vec::with_capacity(content.len());
            for _ in 0..n {
                for ch in 0..c {
                    let (lo, hi) = (cfg.pixel_range.lo[ch], cfg.pixel_range.hi[ch]);
                    let plane = Tensor::<T>::uniform(&[h * w], lo, hi, &mut rng)?;
                    data.extend_from_slice(plane.data());
                }
            }
            Tensor::new(content.shape(), data)
        }
    }
}

/// Image gradient of the total loss at `image` for a content/style pair.
/// Exposed for gradient checking.
pub fn transfer_gradient<T: Scalar>(
    content_img: &Tensor<T>,
    style_img: &Tensor<T>,
    image: &Tensor<T>,
    spec: &NetworkSpec,
    store: &WeightStore<T>,
    cfg: &NstConfig,
) -> Result<(LossReport, Tensor<T>)> {
    cfg.validate()?;
    Objective::new(spec, store, cfg, content_img, style_img)?.evaluate(image)
}

/// Optimizes an image so its content-layer activation matches the content
/// image and its style-layer Gram matrices match the style image.
///
/// Targets are computed once; each iteration runs one forward/backward pass
/// and one Adam step followed by the pixel clamp.
pub fn run_transfer<T: Scalar>(
    content_img: &Tensor<T>,
    style_img: &Tensor<T>,
    spec: &NetworkSpec,
    store: &WeightStore<T>,
    cfg: &NstConfig,
) -> Result<TransferOutcome<T>> {
    cfg.validate()?;
    let (n, ..) = content_img.dims4("run_transfer")?;
    if n != 1 || content_img.shape() != style_img.shape() {
        return Err(Error::shape(
            "run_transfer",
            format!(
                "content {:?} and style {:?} must be single images of the same shape",
                content_img.shape(),
                style_img.shape()
            ),
        ));
    }
    let objective = Objective::new(spec, store, cfg, content_img, style_img)?;
    let mut image = initial_image(content_img, cfg)?;
    let mut state = AdamState::new(&image);
    let mut trace = Vec::with_capacity(cfg.iterations);
    for iter in 0..cfg.iterations {
        let (report, grad) = objective.evaluate(&image)?;
        if !report.total.is_finite() {
            return Err(Error::Numerical(format!("total loss is not finite at iteration {iter}")));
        }
        trace.push(report);
        adam_update(&mut image, &grad, &mut state, &cfg.adam, Some(&cfg.pixel_range))?;
    }
    let (final_loss, _) = objective.evaluate(&image)?;
    Ok(TransferOutcome {
        image,
        trace,
        final_loss,
    })
}

/// One `iter,content,style,total` line per iteration.
pub fn format_loss_trace(trace: &[LossReport]) -> String {
    let mut out = String::new();
    for (i, r) in trace.iter().enumerate() {
        writeln!(out, "{i},{},{},{}", r.content, r.style, r.total).unwrap();
    }
    out
}

pub fn write_loss_trace(trace: &[LossReport], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_loss_trace(trace)).map_err(|e| Error::io(path, e))
}
