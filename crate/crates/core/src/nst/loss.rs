//! Content, Gram-matrix style and total losses with their activation gradients.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Activation of the content image at the content layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ContentTarget<T> {
    pub layer: String,
    pub activation: Tensor<T>,
}

/// Gram matrix of the style image at one layer, with its feature-map count
/// `channels` (N) and flattened spatial size `positions` (M).
#[derive(Clone, Debug, PartialEq)]
pub struct StyleLayerTarget<T> {
    pub layer: String,
    pub gram: Tensor<T>,
    pub channels: usize,
    pub positions: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StyleTarget<T> {
    pub layers: Vec<StyleLayerTarget<T>>,
}

impl<T: Scalar> StyleLayerTarget<T> {
    pub fn from_activation(layer: impl Into<String>, activation: &Tensor<T>) -> Result<Self> {
        let (channels, positions) = feature_dims(activation, "style_target")?;
        Ok(StyleLayerTarget {
            layer: layer.into(),
            gram: gram(activation)?,
            channels,
            positions,
        })
    }
}

impl<T: Scalar> StyleTarget<T> {
    /// Builds per-layer targets from style-image activations, in `layers` order.
    pub fn from_activations<S: AsRef<str>>(layers: &[S], acts: &BTreeMap<String, Tensor<T>>) -> Result<Self> {
        let layers = layers
            .iter()
            .map(|l| {
                let act = acts
                    .get(l.as_ref())
                    .ok_or_else(|| Error::UnknownLayer(l.as_ref().to_string()))?;
                StyleLayerTarget::from_activation(l.as_ref(), act)
            })
            .collect::<Result<_>>()?;
        Ok(StyleTarget { layers })
    }
}

/// `(N, M)` of a `C x H x W` (or `1 x C x H x W`) activation.
fn feature_dims<T: Scalar>(act: &Tensor<T>, op: &'static str) -> Result<(usize, usize)> {
    match *act.shape() {
        [c, h, w] | [1, c, h, w] => Ok((c, h * w)),
        _ => Err(Error::shape(op, format!("expected a single C x H x W activation, got {:?}", act.shape()))),
    }
}

/// Channel inner products `F[m][n] = sum_o A[m][o] A[n][o]` over flattened
/// positions. Not normalized.
pub fn gram<T: Scalar>(activation: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, m) = feature_dims(activation, "gram")?;
    let a = activation.data();
    let mut g = vec![0.0f64; n * n];
    for i in 0..n {
        let ai = &a[i * m..][..m];
        for j in i..n {
            let aj = &a[j * m..][..m];
            let s: f64 = ai.iter().zip(aj).map(|(x, y)| x.wide() * y.wide()).sum();
            g[i * n + j] = s;
            g[j * n + i] = s;
        }
    }
    Tensor::from_wide("gram", vec![n, n], &g)
}

/// `0.5 * sum (A(g) - A(c))^2` and its gradient `A(g) - A(c)`.
pub fn content_loss<T: Scalar>(gen_act: &Tensor<T>, target: &ContentTarget<T>) -> Result<(f64, Tensor<T>)> {
    let diff = gen_act.sub(&target.activation).map_err(|_| {
        Error::shape(
            "content_loss",
            format!("generated {:?} vs target {:?}", gen_act.shape(), target.activation.shape()),
        )
    })?;
    Ok((0.5 * diff.norm_sq(), diff))
}

/// `E = sum (F(g) - F(s))^2 / (4 N^2 M^2)` and `dE/dA = (F(g) - F(s)) A / (N^2 M^2)`.
pub fn layer_style_loss<T: Scalar>(gen_act: &Tensor<T>, target: &StyleLayerTarget<T>) -> Result<(f64, Tensor<T>)> {
    let (n, m) = feature_dims(gen_act, "layer_style_loss")?;
    if (n, m) != (target.channels, target.positions) {
        return Err(Error::shape(
            "layer_style_loss",
            format!(
                "activation {:?} has N={n}, M={m}; target `{}` expects N={}, M={}",
                gen_act.shape(),
                target.layer,
                target.channels,
                target.positions
            ),
        ));
    }
    if target.gram.shape() != [n, n] {
        return Err(Error::shape("layer_style_loss", format!("target gram {:?} for N={n}", target.gram.shape())));
    }
    let g = gram(gen_act)?;
    let diff: Vec<f64> = g
        .data()
        .iter()
        .zip(target.gram.data())
        .map(|(a, b)| a.wide() - b.wide())
        .collect();
    let (nf, mf) = (n as f64, m as f64);
    let norm = nf * nf * mf * mf;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / (4.0 * norm);

    let a = gen_act.data();
    let mut grad = vec![0.0f64; n * m];
    for i in 0..n {
        let out = &mut grad[i * m..][..m];
        for j in 0..n {
            let d = diff[i * n + j];
            if d == 0.0 {
                continue;
            }
            for (o, x) in out.iter_mut().zip(&a[j * m..][..m]) {
                *o += d * x.wide();
            }
        }
        for o in out.iter_mut() {
            *o /= norm;
        }
    }
    Ok((loss, Tensor::from_wide("layer_style_loss", gen_act.shape().to_vec(), &grad)?))
}

#[derive(Clone, Debug)]
pub struct StyleLoss<T> {
    /// `sum_l w_l E_l`.
    pub total: f64,
    /// Unweighted `E_l` in target-layer order.
    pub per_layer: Vec<f64>,
    /// `w_l dE_l/dA_l` per layer name.
    pub grads: BTreeMap<String, Tensor<T>>,
}

pub fn style_loss<T: Scalar>(
    gen_acts: &BTreeMap<String, Tensor<T>>,
    target: &StyleTarget<T>,
    weights: &[f64],
) -> Result<StyleLoss<T>> {
    if weights.len() != target.layers.len() {
        return Err(Error::InvalidArgument(format!(
            "{} style weights for {} style layers",
            weights.len(),
            target.layers.len()
        )));
    }
    let mut out = StyleLoss {
        total: 0.0,
        per_layer: Vec::with_capacity(weights.len()),
        grads: BTreeMap::new(),
    };
    for (layer, &w) in target.layers.iter().zip(weights) {
        let act = gen_acts
            .get(&layer.layer)
            .ok_or_else(|| Error::UnknownLayer(layer.layer.clone()))?;
        let (e, g) = layer_style_loss(act, layer)?;
        out.total += w * e;
        out.per_layer.push(e);
        let g = g.scale(w)?;
        match out.grads.get_mut(&layer.layer) {
            Some(acc) => *acc = acc.add(&g)?,
            None => {
                out.grads.insert(layer.layer.clone(), g);
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    pub content: f64,
    /// `sum_l w_l E_l`.
    pub style: f64,
    pub per_layer: Vec<f64>,
    pub total: f64,
}

/// `alpha * content + beta * sum_l w_l E_l`.
pub fn total_loss(content: f64, per_layer: &[f64], weights: &[f64], alpha: f64, beta: f64) -> Result<LossReport> {
    if per_layer.len() != weights.len() {
        return Err(Error::InvalidArgument(format!(
            "{} layer losses for {} weights",
            per_layer.len(),
            weights.len()
        )));
    }
    let style: f64 = per_layer.iter().zip(weights).map(|(e, w)| w * e).sum();
    let total = alpha * content + beta * style;
    if !total.is_finite() {
        return Err(Error::NonFinite { op: "total_loss" });
    }
    Ok(LossReport {
        content,
        style,
        per_layer: per_layer.to_vec(),
        total,
    })
}
