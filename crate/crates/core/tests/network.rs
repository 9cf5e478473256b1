use std::collections::BTreeMap;

use egoreid::rng::rng_from;
use egoreid::tensor::*;
use egoreid::vgg::*;
use egoreid::{TensorF64, WeightStoreF32, WeightStoreF64};

fn two_layer() -> NetworkSpec {
    NetworkSpec::from_layers(
        vec![
            LayerDesc::conv3x3("c1", 3, 4),
            LayerDesc::new("c1_relu", LayerKind::Relu),
            LayerDesc::new("pool", LayerKind::AvgPool),
            LayerDesc::new("fc", LayerKind::Linear { in_features: 4 * 2 * 2, out_features: 3 }),
        ],
        [3, 4, 4],
        3,
    )
    .unwrap()
}

fn image(shape: &[usize], seed: u64) -> TensorF64 {
    TensorF64::uniform(shape, -1.0, 1.0, &mut rng_from(seed)).unwrap()
}

#[test]
fn taps_match_manual_composition() {
    let spec = two_layer();
    let store = WeightStoreF64::random(&spec, 4).unwrap();
    let x = image(&[1, 3, 4, 4], 1);
    let acts = forward_collect(&spec, &store, &x, &["input", "c1", "pool", "fc"]).unwrap();

    let (w, b) = store.layer("c1").unwrap();
    let c1 = relu_forward(&conv2d_forward(&x, &ConvParams::new(w, b, 1, 1).unwrap()).unwrap()).unwrap();
    let pool = avgpool2d_forward(&c1).unwrap();
    let (fw, fb) = store.layer("fc").unwrap();
    let fc = linear_forward(&pool, fw, fb).unwrap();

    assert_eq!(acts["input"], x);
    assert_eq!(acts["c1"], c1);
    assert_eq!(acts["pool"], pool);
    assert_eq!(acts["fc"], fc);
}

#[test]
fn zero_image_with_zero_biases_gives_zero_taps() {
    let spec = NetworkSpec::vgg16(Scale::Eighth, 16, 16, 2).unwrap();
    let store = WeightStoreF32::random(&spec, 1).unwrap();
    let x = egoreid::TensorF32::zeros(&[1, 3, 16, 16]).unwrap();
    let mut taps: Vec<&str> = STYLE_LAYERS.to_vec();
    taps.extend([CONTENT_LAYER, DESCRIPTOR_LAYER]);
    for (name, act) in forward_collect(&spec, &store, &x, &taps).unwrap() {
        assert_eq!(act.max_abs(), 0.0, "{name}");
    }
}

#[test]
fn scaled_layouts_and_descriptor_lengths() {
    let spec = NetworkSpec::vgg16(Scale::Eighth, 16, 16, 2).unwrap();
    let pools = spec.layers().iter().filter(|l| l.kind == LayerKind::AvgPool).count();
    assert_eq!(pools, 4);
    assert_eq!(spec.descriptor_len().unwrap(), 512);
    assert_eq!(NetworkSpec::vgg16(Scale::Quarter, 32, 32, 2).unwrap().descriptor_len().unwrap(), 1024);
    let full = NetworkSpec::vgg16(Scale::Full, 224, 224, 10).unwrap();
    assert_eq!(full.layers().iter().filter(|l| l.kind == LayerKind::AvgPool).count(), 5);
    assert_eq!(full.descriptor_len().unwrap(), 4096);
    assert_eq!(full.param_layers().filter(|l| matches!(l.kind, LayerKind::Conv { .. })).count(), 13);

    let store = WeightStoreF32::random(&spec, 2).unwrap();
    let d = extract_descriptor(&spec, &store, &image(&[1, 3, 16, 16], 3).cast()).unwrap();
    assert_eq!(d.shape(), &[512]);
    assert!(d.data().iter().all(|&v| v >= 0.0));
}

#[test]
fn parameter_gradients_match_finite_differences() {
    let spec = two_layer();
    let mut store = WeightStoreF64::random(&spec, 8).unwrap();
    // An O(1) head keeps the conv gradients well above finite-difference noise.
    store.insert("fc", vec![image(&[3, 16], 7), image(&[3], 8)]);
    let x = image(&[2, 3, 4, 4], 5);
    let labels = [2, 0];
    let loss_with = |s: &WeightStoreF64| -> egoreid::Result<f64> {
        let t = forward_trace(&spec, s, &x, None, Mode::Inference)?;
        Ok(softmax_cross_entropy_batch(t.last(), &labels)?.0)
    };
    let trace = forward_trace(&spec, &store, &x, None, Mode::Inference).unwrap();
    let (_, g) = softmax_cross_entropy_batch(trace.last(), &labels).unwrap();
    let seeds = BTreeMap::from([(TapPoint::Layer(spec.layers().len() - 1), g)]);
    let grads = backward(&spec, &store, &trace, &seeds, ParamGrads::All).unwrap();

    for layer in ["c1", "fc"] {
        for (k, analytic) in grads.params[layer].iter().enumerate() {
            let base = store.get(layer).unwrap().to_vec();
            let f = |v: &TensorF64| {
                let mut s = store.clone();
                let mut tensors = base.clone();
                tensors[k] = v.clone();
                s.insert(layer, tensors);
                loss_with(&s)
            };
            let kink = |a: &TensorF64, b: &TensorF64| -> egoreid::Result<bool> {
                let pre = |v: &TensorF64| {
                    let mut s = store.clone();
                    let mut tensors = base.clone();
                    tensors[k] = v.clone();
                    s.insert(layer, tensors);
                    forward_trace(&spec, &s, &x, Some(0), Mode::Inference).map(|t| t.last().clone())
                };
                let (pa, pb) = (pre(a)?, pre(b)?);
                Ok(pa.data().iter().zip(pb.data()).any(|(p, q)| (*p > 0.0) != (*q > 0.0)))
            };
            let check = finite_diff_check(f, &base[k], analytic, 1e-6, kink).unwrap();
            assert!(check.passes(1e-5), "{layer}[{k}]: {check:?}");
        }
    }
}

#[test]
fn weight_files_round_trip_and_validate() {
    let spec = NetworkSpec::vgg16(Scale::Eighth, 16, 16, 3).unwrap();
    let store = WeightStoreF32::random(&spec, 6).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.nstw");
    save_weights(&store, &path).unwrap();
    let back: WeightStoreF32 = load_weights_for(&spec, &path).unwrap();
    assert_eq!(back, store);
    assert_eq!(back.to_bytes().unwrap(), std::fs::read(&path).unwrap());

    let other = NetworkSpec::vgg16(Scale::Eighth, 16, 16, 4).unwrap();
    assert!(load_weights_for::<f32>(&other, &path).is_err());
}

#[test]
fn zero_epochs_leave_weights_unchanged() {
    let spec = NetworkSpec::vgg16(Scale::Eighth, 16, 16, 2).unwrap();
    let store = WeightStoreF32::random(&spec, 1).unwrap();
    let data = vec![LabeledImage {
        image: image(&[1, 3, 16, 16], 2).cast(),
        label: 1,
    }];
    let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
    let (out, report) = fine_tune(&spec, &store, &data, &cfg).unwrap();
    assert_eq!(out, store);
    assert!(report.epoch_losses.is_empty());
}

#[test]
fn weight_decay_alone_shrinks_the_weight_norm() {
    // A zero image gives zero activations, so the only weight gradient is the L2 term.
    let spec = NetworkSpec::vgg16(Scale::Eighth, 16, 16, 2).unwrap();
    let store = WeightStoreF32::random(&spec, 3).unwrap();
    let data = vec![LabeledImage {
        image: egoreid::TensorF32::zeros(&[1, 3, 16, 16]).unwrap(),
        label: 0,
    }];
    let mut last = store.weight_norm_sq();
    for epochs in 1..=4 {
        let cfg = TrainConfig { epochs, seed: 9, ..TrainConfig::default() };
        let (out, _) = fine_tune(&spec, &store, &data, &cfg).unwrap();
        let norm = out.weight_norm_sq();
        assert!(norm < last, "epoch {epochs}: {norm} !< {last}");
        last = norm;
    }
}

#[test]
fn training_is_deterministic_per_seed() {
    let spec = NetworkSpec::vgg16(Scale::Eighth, 16, 16, 2).unwrap();
    let store = WeightStoreF32::random(&spec, 3).unwrap();
    let data: Vec<_> = (0..4)
        .map(|i| LabeledImage {
            image: image(&[1, 3, 16, 16], 40 + i).scale(100.0).unwrap().cast(),
            label: i as usize % 2,
        })
        .collect();
    let cfg = TrainConfig { epochs: 3, batch_size: 2, seed: 5, ..TrainConfig::default() };
    let (a, ra) = fine_tune(&spec, &store, &data, &cfg).unwrap();
    let (b, rb) = fine_tune(&spec, &store, &data, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    let (c, _) = fine_tune(&spec, &store, &data, &TrainConfig { seed: 6, ..cfg }).unwrap();
    assert_ne!(a, c);
}
