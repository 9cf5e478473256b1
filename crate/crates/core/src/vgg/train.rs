use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::forward::{backward, forward_trace, Mode, ParamGrads};
use super::spec::{LayerKind, NetworkSpec, TapPoint};
use super::weights::WeightStore;
use crate::error::{Error, Result};
use crate::nst::adam::{adam_update, AdamConfig, AdamState};
use crate::rng::sub_rng;
use crate::scalar::Scalar;
use crate::tensor::{softmax_cross_entropy_batch, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Coefficient of the `l2/2 * |w|^2` penalty on weights (biases excluded).
    pub l2_coefficient: f64,
    pub dropout_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    /// Keep convolution parameters fixed and train the fully-connected layers only.
    pub freeze_convs: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            learning_rate: 1e-3,
            l2_coefficient: 5e-4,
            dropout_rate: 0.5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 16,
            freeze_convs: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidArgument(format!("dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        if !(self.l2_coefficient >= 0.0 && self.l2_coefficient.is_finite()) {
            return Err(Error::InvalidArgument(format!("l2 coefficient {} must be >= 0", self.l2_coefficient)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        self.adam().validate()
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LabeledImage<T> {
    /// `1 x C x H x W`.
    pub image: Tensor<T>,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Mean cross-entropy over the dataset before the first update (inference mode).
    pub initial_loss: f64,
    /// Mean data loss over each epoch's batches (training mode, before each update).
    pub epoch_losses: Vec<f64>,
    pub final_loss: f64,
    pub final_accuracy: f64,
}

/// Mean cross-entropy and top-1 accuracy of the classifier head, dropout off.
pub fn evaluate_classifier<T: Scalar>(
    spec: &NetworkSpec,
    store: &WeightStore<T>,
    dataset: &[LabeledImage<T>],
) -> Result<(f64, f64)> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let mut loss = 0.0;
    let mut correct = 0;
    for item in dataset {
        let trace = forward_trace(spec, store, &item.image, None, Mode::Inference)?;
        let logits = trace.last();
        let (l, _) = softmax_cross_entropy_batch(logits, &[item.label])?;
        loss += l;
        let best = logits
            .data()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
            .map(|(k, _)| k);
        if best == Some(item.label) {
            correct += 1;
        }
    }
    let n = dataset.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Fine-tunes every layer (or only the fully-connected ones) with Adam on
/// cross-entropy plus an L2 penalty on weights, with inverted dropout on
/// the dropout layers during training. Deterministic for a fixed seed.
pub fn fine_tune<T: Scalar>(
    spec: &NetworkSpec,
    store: &WeightStore<T>,
    dataset: &[LabeledImage<T>],
    cfg: &TrainConfig,
) -> Result<(WeightStore<T>, TrainReport)> {
    cfg.validate()?;
    store.validate(spec)?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("cannot fine-tune on an empty dataset".into()));
    }
    if let Some(bad) = dataset.iter().find(|d| d.label >= spec.class_count()) {
        return Err(Error::InvalidArgument(format!(
            "label {} out of range for {} classes",
            bad.label,
            spec.class_count()
        )));
    }
    let (initial_loss, _) = evaluate_classifier(spec, store, dataset)?;
    let mut store = store.clone();
    let trainable: Vec<String> = spec
        .param_layers()
        .filter(|l| !(cfg.freeze_convs && matches!(l.kind, LayerKind::Conv { .. })))
        .map(|l| l.name.clone())
        .collect();
    let mut states: BTreeMap<String, [AdamState<T>; 2]> = trainable
        .iter()
        .map(|name| {
            let (w, b) = store.layer(name)?;
            Ok((name.clone(), [AdamState::new(w), AdamState::new(b)]))
        })
        .collect::<Result<_>>()?;
    let wants = if cfg.freeze_convs { ParamGrads::LinearOnly } else { ParamGrads::All };
    let adam = cfg.adam();
    let last = TapPoint::Layer(spec.layers().len() - 1);

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut rng = sub_rng(cfg.seed, "fine_tune", epoch as u64);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let images: Vec<&Tensor<T>> = batch.iter().map(|&i| &dataset[i].image).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| dataset[i].label).collect();
            let x = Tensor::stack_batch(&images)?;
            let trace = forward_trace(
                spec,
                &store,
                &x,
                None,
                Mode::Train {
                    dropout_rate: cfg.dropout_rate,
                    rng: &mut rng,
                },
            )?;
            let (loss, grad) = softmax_cross_entropy_batch(trace.last(), &labels)?;
            epoch_loss += loss * batch.len() as f64;
            let seeds = BTreeMap::from([(last, grad)]);
            let grads = backward(spec, &store, &trace, &seeds, wants)?;
            for (name, [gw, gb]) in grads.params {
                let Some([sw, sb]) = states.get_mut(&name) else { continue };
                let tensors = store.get_mut(&name).expect("validated layer");
                let mut gw = gw;
                if cfg.l2_coefficient > 0.0 {
                    gw.add_scaled_assign(&tensors[0], cfg.l2_coefficient)?;
                }
                adam_update(&mut tensors[0], &gw, sw, &adam, None)?;
                adam_update(&mut tensors[1], &gb, sb, &adam, None)?;
            }
        }
        let mean = epoch_loss / dataset.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Numerical(format!("training loss diverged at epoch {epoch}")));
        }
        epoch_losses.push(mean);
    }
    let (final_loss, final_accuracy) = evaluate_classifier(spec, &store, dataset)?;
    Ok((
        store,
        TrainReport {
            initial_loss,
            epoch_losses,
            final_loss,
            final_accuracy,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vgg::spec::Scale;

    fn toy() -> (NetworkSpec, WeightStore<f32>) {
        let spec = NetworkSpec::vgg16(Scale::Eighth, 16, 16, 2).unwrap();
        let store = WeightStore::random(&spec, 4).unwrap();
        (spec, store)
    }

    #[test]
    fn zero_epochs_keep_weights() {
        let (spec, store) = toy();
        let data = vec![LabeledImage {
            image: Tensor::full(&[1, 3, 16, 16], 1.0).unwrap(),
            label: 1,
        }];
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (out, report) = fine_tune(&spec, &store, &data, &cfg).unwrap();
        assert_eq!(out, store);
        assert!(report.epoch_losses.is_empty());
    }

    #[test]
    fn rejects_empty_and_out_of_range() {
        let (spec, store) = toy();
        let cfg = TrainConfig::default();
        assert!(fine_tune(&spec, &store, &[], &cfg).is_err());
        let data = vec![LabeledImage {
            image: Tensor::zeros(&[1, 3, 16, 16]).unwrap(),
            label: 2,
        }];
        assert!(fine_tune(&spec, &store, &data, &cfg).is_err());
        let bad = TrainConfig {
            dropout_rate: 1.0,
            ..cfg
        };
        assert!(bad.validate().is_err());
    }
}
