use egoreid::rng::rng_from;
use egoreid::tensor::*;
use egoreid::TensorF64;
use proptest::prelude::*;
use rand::Rng;

/// Direct six-loop cross-correlation with zero padding.
fn naive_conv(x: &TensorF64, w: &TensorF64, b: &TensorF64, stride: usize, pad: usize) -> Vec<f64> {
    let (n, c, h, wd) = x.dims4("oracle").unwrap();
    let (oc, _, kh, kw) = w.dims4("oracle").unwrap();
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    let (xd, wdat) = (x.data(), w.data());
    let mut out = vec![0.0; n * oc * oh * ow];
    for ni in 0..n {
        for o in 0..oc {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut s = b.data()[o];
                    for ci in 0..c {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (y * stride + ky) as isize - pad as isize;
                                let ix = (xo * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                s += xd[((ni * c + ci) * h + iy as usize) * wd + ix as usize]
                                    * wdat[((o * c + ci) * kh + ky) * kw + kx];
                            }
                        }
                    }
                    out[((ni * oc + o) * oh + y) * ow + xo] = s;
                }
            }
        }
    }
    out
}

fn rand_tensor(shape: &[usize], rng: &mut impl Rng) -> TensorF64 {
    let data: Vec<f64> = (0..shape.iter().product::<usize>()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    TensorF64::new(shape, data).unwrap()
}

#[test]
fn conv_matches_naive_oracle_on_random_shapes() {
    let mut rng = rng_from(11);
    for _ in 0..20 {
        let (n, c, oc) = (rng.gen_range(1..3), rng.gen_range(1..4), rng.gen_range(1..4));
        let k = [1, 3, 5][rng.gen_range(0..3)];
        let (stride, pad) = (rng.gen_range(1..3), rng.gen_range(0..=k / 2));
        let (h, w) = (rng.gen_range(k..k + 6), rng.gen_range(k..k + 6));
        let x = rand_tensor(&[n, c, h, w], &mut rng);
        let wt = rand_tensor(&[oc, c, k, k], &mut rng);
        let b = rand_tensor(&[oc], &mut rng);
        let got = conv2d_forward(&x, &ConvParams::new(&wt, &b, stride, pad).unwrap()).unwrap();
        let want = naive_conv(&x, &wt, &b, stride, pad);
        assert_eq!(got.len(), want.len());
        for (g, e) in got.data().iter().zip(&want) {
            assert!((g - e).abs() < 1e-12, "{g} vs {e}");
        }
    }
}

#[test]
fn conv_is_additive_in_the_input() {
    let mut rng = rng_from(3);
    let (x1, x2) = (rand_tensor(&[1, 2, 6, 6], &mut rng), rand_tensor(&[1, 2, 6, 6], &mut rng));
    let w = rand_tensor(&[3, 2, 3, 3], &mut rng);
    let zero = TensorF64::zeros(&[3]).unwrap();
    let p = ConvParams::new(&w, &zero, 1, 1).unwrap();
    let sum = conv2d_forward(&x1.add(&x2).unwrap(), &p).unwrap();
    let parts = conv2d_forward(&x1, &p).unwrap().add(&conv2d_forward(&x2, &p).unwrap()).unwrap();
    assert!(sum.max_abs_diff(&parts).unwrap() < 1e-12);
}

#[test]
fn vjps_agree_with_finite_differences_on_random_shapes() {
    let mut rng = rng_from(5);
    for _ in 0..5 {
        let (c, oc) = (rng.gen_range(1..3), rng.gen_range(1..3));
        let x = rand_tensor(&[1, c, 4, 6], &mut rng);
        let w = rand_tensor(&[oc, c, 3, 3], &mut rng);
        let b = rand_tensor(&[oc], &mut rng);
        let p = ConvParams::new(&w, &b, 1, 1).unwrap();
        let r = rand_tensor(&[1, oc, 4, 6], &mut rng);
        let g = conv2d_vjp(&x, &p, &r).unwrap();
        let check = finite_diff_check(|v| conv2d_forward(v, &p)?.dot(&r), &x, &g.input, 1e-6, smooth).unwrap();
        assert!(check.passes(1e-6), "{check:?}");

        let r = rand_tensor(&[1, c, 2, 3], &mut rng);
        let g = avgpool2d_vjp(&x, &r).unwrap();
        let check = finite_diff_check(|v| avgpool2d_forward(v)?.dot(&r), &x, &g, 1e-6, smooth).unwrap();
        assert!(check.passes(1e-6), "{check:?}");
    }
}

#[test]
fn softmax_gradient_rows_sum_to_zero_and_large_logits_are_finite() {
    let logits = TensorF64::from_f64(&[2, 3], &[1000.0, 0.0, -1000.0, 5.0, 5.0, 5.0]).unwrap();
    let (loss, g) = softmax_cross_entropy_batch(&logits, &[0, 1]).unwrap();
    assert!(loss.is_finite());
    assert!((loss - 3f64.ln() / 2.0).abs() < 1e-12);
    for row in g.data().chunks(3) {
        assert!(row.iter().sum::<f64>().abs() < 1e-15);
    }
}

#[test]
fn dropout_preserves_the_mean() {
    let x = TensorF64::full(&[100_000], 1.0).unwrap();
    let (y, mask) = dropout_forward(&x, 0.5, &mut rng_from(9)).unwrap();
    let mean = y.sum() / y.len() as f64;
    assert!((mean - 1.0).abs() < 0.02, "{mean}");
    assert!(mask.data().iter().all(|&m| m == 0.0 || m == 2.0));
    let (same, _) = dropout_forward(&x, 0.0, &mut rng_from(9)).unwrap();
    assert_eq!(same, x);
}

#[test]
fn f32_and_f64_kernels_agree() {
    let mut rng = rng_from(21);
    let x = rand_tensor(&[1, 2, 4, 4], &mut rng);
    let w = rand_tensor(&[2, 2, 3, 3], &mut rng);
    let b = rand_tensor(&[2], &mut rng);
    let y64 = conv2d_forward(&x, &ConvParams::new(&w, &b, 1, 1).unwrap()).unwrap();
    let (x32, w32, b32) = (x.cast::<f32>(), w.cast::<f32>(), b.cast::<f32>());
    let y32 = conv2d_forward(&x32, &ConvParams::new(&w32, &b32, 1, 1).unwrap()).unwrap();
    assert!(y64.max_abs_diff(&y32.cast()).unwrap() < 1e-5);
}

proptest! {
    #[test]
    fn relu_is_idempotent_and_non_negative(v in prop::collection::vec(-10.0f64..10.0, 1..64)) {
        let x = TensorF64::new(&[v.len()], v).unwrap();
        let y = relu_forward(&x).unwrap();
        prop_assert!(y.data().iter().all(|&a| a >= 0.0));
        prop_assert_eq!(relu_forward(&y).unwrap(), y);
    }

    #[test]
    fn avgpool_preserves_the_total_over_four(v in prop::collection::vec(-5.0f64..5.0, 16)) {
        let x = TensorF64::new(&[1, 1, 4, 4], v).unwrap();
        let y = avgpool2d_forward(&x).unwrap();
        prop_assert!((4.0 * y.sum() - x.sum()).abs() < 1e-9);
    }

    #[test]
    fn linear_matches_matrix_product(
        x in prop::collection::vec(-3.0f64..3.0, 6),
        w in prop::collection::vec(-3.0f64..3.0, 12),
        b in prop::collection::vec(-3.0f64..3.0, 4),
    ) {
        let xt = TensorF64::new(&[2, 3], x.clone()).unwrap();
        let wt = TensorF64::new(&[4, 3], w.clone()).unwrap();
        let bt = TensorF64::new(&[4], b.clone()).unwrap();
        let y = linear_forward(&xt, &wt, &bt).unwrap();
        for n in 0..2 {
            for o in 0..4 {
                let e: f64 = b[o] + (0..3).map(|i| w[o * 3 + i] * x[n * 3 + i]).sum::<f64>();
                prop_assert!((y.data()[n * 4 + o] - e).abs() < 1e-12);
            }
        }
    }
}
