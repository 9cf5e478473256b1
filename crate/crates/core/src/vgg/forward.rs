use std::collections::BTreeMap;

use super::spec::{LayerKind, NetworkSpec, TapPoint, DESCRIPTOR_LAYER};
use super::weights::WeightStore;
use crate::error::{Error, Result};
use crate::rng::JobRng;
use crate::scalar::Scalar;
use crate::tensor::{
    avgpool2d_forward, avgpool2d_vjp, conv2d_forward, conv2d_vjp, conv2d_vjp_input, dropout_forward, dropout_vjp,
    linear_forward, linear_vjp, relu_forward, relu_vjp, ConvParams, Tensor,
};

/// Inference runs dropout as the identity; training samples inverted-dropout masks.
pub enum Mode<'r> {
    Inference,
    Train { dropout_rate: f64, rng: &'r mut JobRng },
}

/// Activations recorded by a forward pass, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace<T> {
    input: Tensor<T>,
    outputs: Vec<Tensor<T>>,
    masks: BTreeMap<usize, Tensor<T>>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn get(&self, tap: TapPoint) -> Option<&Tensor<T>> {
        match tap {
            TapPoint::Input => Some(&self.input),
            TapPoint::Layer(i) => self.outputs.get(i),
        }
    }

    /// Output of the last layer that was run.
    pub fn last(&self) -> &Tensor<T> {
        self.outputs.last().unwrap_or(&self.input)
    }

    fn input_of(&self, i: usize) -> &Tensor<T> {
        if i == 0 {
            &self.input
        } else {
            &self.outputs[i - 1]
        }
    }
}

/// Which parameter gradients the backward pass should produce.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGrads {
    None,
    All,
    /// Linear layers only (conv layers frozen).
    LinearOnly,
}

#[derive(Clone, Debug)]
pub struct Backward<T> {
    pub input: Tensor<T>,
    /// `[weights, bias]` gradients per layer name.
    pub params: BTreeMap<String, [Tensor<T>; 2]>,
}

fn check_image<T: Scalar>(spec: &NetworkSpec, image: &Tensor<T>) -> Result<()> {
    let (_, c, h, w) = image.dims4("forward")?;
    if [c, h, w] != spec.input_shape() {
        return Err(Error::shape(
            "forward",
            format!("image {:?} does not match network input {:?}", image.shape(), spec.input_shape()),
        ));
    }
    Ok(())
}

/// Runs layers `0..=last` (all layers when `last` is `None`).
pub fn forward_trace<T: Scalar>(
    spec: &NetworkSpec,
    store: &WeightStore<T>,
    image: &Tensor<T>,
    last: Option<usize>,
    mut mode: Mode<'_>,
) -> Result<ForwardTrace<T>> {
    check_image(spec, image)?;
    let count = match last {
        Some(i) if i >= spec.layers().len() => {
            return Err(Error::InvalidArgument(format!("layer index {i} out of range")))
        }
        Some(i) => i + 1,
        None => spec.layers().len(),
    };
    let mut outputs: Vec<Tensor<T>> = Vec::with_capacity(count);
    let mut masks = BTreeMap::new();
    for (i, layer) in spec.layers()[..count].iter().enumerate() {
        let x = outputs.last().unwrap_or(image);
        let y = match layer.kind {
            LayerKind::Conv { stride, padding, .. } => {
                let (w, b) = store.layer(&layer.name)?;
                conv2d_forward(x, &ConvParams::new(w, b, stride, padding)?)?
            }
            LayerKind::Relu => relu_forward(x)?,
            LayerKind::AvgPool => avgpool2d_forward(x)?,
            LayerKind::Linear { .. } => {
                let (w, b) = store.layer(&layer.name)?;
                linear_forward(x, w, b)?
            }
            LayerKind::Dropout => match &mut mode {
                Mode::Inference => x.clone(),
                Mode::Train { dropout_rate, rng } => {
                    let (y, mask) = dropout_forward(x, *dropout_rate, &mut **rng)?;
                    masks.insert(i, mask);
                    y
                }
            },
        };
        outputs.push(y);
    }
    Ok(ForwardTrace {
        input: image.clone(),
        outputs,
        masks,
    })
}

/// Runs the network far enough to read every tap and returns the tapped
/// activations (post-ReLU for conv/linear names). Dropout is the identity.
pub fn forward_collect<T: Scalar, S: AsRef<str>>(
    spec: &NetworkSpec,
    store: &WeightStore<T>,
    image: &Tensor<T>,
    taps: &[S],
) -> Result<BTreeMap<String, Tensor<T>>> {
    let points = taps
        .iter()
        .map(|t| spec.tap(t.as_ref()).map(|p| (t.as_ref().to_string(), p)))
        .collect::<Result<Vec<_>>>()?;
    let last = points.iter().filter_map(|(_, p)| match p {
        TapPoint::Layer(i) => Some(*i),
        TapPoint::Input => None,
    });
    let trace = match last.max() {
        Some(i) => forward_trace(spec, store, image, Some(i), Mode::Inference)?,
        None => {
            check_image(spec, image)?;
            ForwardTrace {
                input: image.clone(),
                outputs: Vec::new(),
                masks: BTreeMap::new(),
            }
        }
    };
    Ok(points
        .into_iter()
        .map(|(name, p)| (name, trace.get(p).expect("tap within trace").clone()))
        .collect())
}

/// Post-ReLU output of `fc6` for a single image, flattened. The
/// classification head is never run.
pub fn extract_descriptor<T: Scalar>(spec: &NetworkSpec, store: &WeightStore<T>, image: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, ..) = image.dims4("extract_descriptor")?;
    if n != 1 {
        return Err(Error::shape("extract_descriptor", format!("expected a single image, got {:?}", image.shape())));
    }
    let acts = forward_collect(spec, store, image, &[DESCRIPTOR_LAYER])?;
    Ok(acts[DESCRIPTOR_LAYER].flatten())
}

/// Back-propagates gradients seeded at tap points through the recorded trace.
///
/// Seeds at the same point are expected to be pre-summed. Layers after the
/// deepest seed are skipped.
pub fn backward<T: Scalar>(
    spec: &NetworkSpec,
    store: &WeightStore<T>,
    trace: &ForwardTrace<T>,
    seeds: &BTreeMap<TapPoint, Tensor<T>>,
    params: ParamGrads,
) -> Result<Backward<T>> {
    for (point, g) in seeds {
        let act = trace
            .get(*point)
            .ok_or_else(|| Error::InvalidArgument(format!("seed at {point:?} lies beyond the forward trace")))?;
        act.expect_same_shape(g, "backward")?;
    }
    let deepest = seeds.keys().filter_map(|p| match p {
        TapPoint::Layer(i) => Some(*i),
        TapPoint::Input => None,
    });
    let mut grad: Option<Tensor<T>> = None;
    let mut param_grads = BTreeMap::new();
    if let Some(top) = deepest.max() {
        for i in (0..=top).rev() {
            if let Some(seed) = seeds.get(&TapPoint::Layer(i)) {
                grad = Some(match grad {
                    Some(g) => g.add(seed)?,
                    None => seed.clone(),
                });
            }
            let Some(up) = grad.take() else { continue };
            let layer = &spec.layers()[i];
            let x = trace.input_of(i);
            let down = match layer.kind {
                LayerKind::Conv { stride, padding, .. } => {
                    let (w, b) = store.layer(&layer.name)?;
                    let p = ConvParams::new(w, b, stride, padding)?;
                    if params == ParamGrads::All {
                        let g = conv2d_vjp(x, &p, &up)?;
                        param_grads.insert(layer.name.clone(), [g.weights, g.bias]);
                        g.input
                    } else {
                        conv2d_vjp_input(x, &p, &up)?
                    }
                }
                LayerKind::Relu => relu_vjp(x, &up)?,
                LayerKind::AvgPool => avgpool2d_vjp(x, &up)?,
                LayerKind::Linear { .. } => {
                    let (w, b) = store.layer(&layer.name)?;
                    let g = linear_vjp(x, w, b, &up)?;
                    if params != ParamGrads::None {
                        param_grads.insert(layer.name.clone(), [g.weights, g.bias]);
                    }
                    g.input
                }
                LayerKind::Dropout => match trace.masks.get(&i) {
                    Some(mask) => dropout_vjp(mask, &up)?,
                    None => up,
                },
            };
            grad = Some(down);
        }
    }
    let mut input = grad.unwrap_or_else(|| Tensor::zeros_like(&trace.input));
    if let Some(seed) = seeds.get(&TapPoint::Input) {
        input = input.add(seed)?;
    }
    Ok(Backward {
        input,
        params: param_grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vgg::spec::{LayerDesc, Scale};

    #[test]
    fn input_tap_is_identity() {
        let spec = NetworkSpec::vgg16(Scale::Eighth, 16, 16, 2).unwrap();
        let store = WeightStore::<f32>::random(&spec, 0).unwrap();
        let img = Tensor::uniform(&[1, 3, 16, 16], -1.0, 1.0, &mut crate::rng::rng_from(1)).unwrap();
        let acts = forward_collect(&spec, &store, &img, &["input"]).unwrap();
        assert_eq!(acts["input"], img);
    }

    #[test]
    fn zero_image_with_zero_biases_gives_zero_taps() {
        let spec = NetworkSpec::vgg16(Scale::Eighth, 16, 16, 2).unwrap();
        let store = WeightStore::<f32>::random(&spec, 0).unwrap();
        let img = Tensor::zeros(&[1, 3, 16, 16]).unwrap();
        let acts = forward_collect(&spec, &store, &img, &["conv1_1", "conv3_1", "conv5_2", "fc6", "fc8"]).unwrap();
        for (name, t) in acts {
            assert_eq!(t.max_abs(), 0.0, "{name}");
        }
    }

    #[test]
    fn rejects_unknown_tap_and_wrong_image() {
        let spec = NetworkSpec::vgg16(Scale::Eighth, 16, 16, 2).unwrap();
        let store = WeightStore::<f32>::random(&spec, 0).unwrap();
        let img = Tensor::zeros(&[1, 3, 16, 16]).unwrap();
        assert!(matches!(forward_collect(&spec, &store, &img, &["conv6_1"]), Err(Error::UnknownLayer(_))));
        let wrong = Tensor::zeros(&[1, 3, 8, 8]).unwrap();
        assert!(forward_collect(&spec, &store, &wrong, &["conv1_1"]).is_err());
    }

    #[test]
    fn backward_without_seeds_is_zero() {
        let spec = NetworkSpec::from_layers(vec![LayerDesc::conv3x3("c", 3, 2)], [3, 4, 4], 1).unwrap();
        let store = WeightStore::<f64>::random(&spec, 0).unwrap();
        let img = Tensor::full(&[1, 3, 4, 4], 1.0).unwrap();
        let trace = forward_trace(&spec, &store, &img, None, Mode::Inference).unwrap();
        let b = backward(&spec, &store, &trace, &BTreeMap::new(), ParamGrads::All).unwrap();
        assert_eq!(b.input.max_abs(), 0.0);
        assert!(b.params.is_empty());
    }
}
