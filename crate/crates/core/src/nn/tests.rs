use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::gradcheck::{grad_check, GradCheckConfig};
use crate::tensor::Tensor;

fn random(shape: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// `sum(y ⊙ r)` for a fixed random `r`, so every output coordinate
/// contributes a distinct weight to the objective.
fn weighted_sum(g: &mut Graph<f64>, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = random(g.shape(y), &mut rng);
    let r = g.constant(r)?;
    let p = g.mul(y, r)?;
    g.sum(p)
}

fn scalar_op(f: impl Fn(&mut Graph<f64>, Var) -> Result<Var>, x: f64) -> f64 {
    let mut g = Graph::new();
    let v = g.constant(Tensor::scalar(x)).unwrap();
    let y = f(&mut g, v).unwrap();
    g.value(y).item().unwrap()
}

#[test]
fn relu_examples() {
    assert_eq!(scalar_op(|g, v| g.relu(v), -2.0), 0.0);
    assert_eq!(scalar_op(|g, v| g.relu(v), 0.0), 0.0);
    assert_eq!(scalar_op(|g, v| g.relu(v), 3.5), 3.5);
}

#[test]
fn relu_subgradient_at_zero_is_zero() {
    let mut g = Graph::<f64>::new();
    let x = g
        .input(Tensor::from_slice(&[-1.0, 0.0, 2.0]), true)
        .unwrap();
    let y = g.relu(x).unwrap();
    let l = g.sum(y).unwrap();
    let grads = g.backward(l).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[0.0, 0.0, 1.0]);
}

#[test]
fn sigmoid_examples() {
    assert_eq!(scalar_op(|g, v| g.sigmoid(v), 0.0), 0.5);
    assert!((scalar_op(|g, v| g.sigmoid(v), 3f64.ln()) - 0.75).abs() < 1e-15);
    let s = scalar_op(|g, v| g.sigmoid(v), 2.7) + scalar_op(|g, v| g.sigmoid(v), -2.7);
    assert!((s - 1.0).abs() < 1e-15);
    // saturates without NaN
    assert_eq!(scalar_op(|g, v| g.sigmoid(v), 1e4), 1.0);
    assert_eq!(scalar_op(|g, v| g.sigmoid(v), -1e4), 0.0);
}

#[test]
fn softmax_examples() {
    let soft = |xs: &[f64]| {
        let mut g = Graph::new();
        let v = g
            .constant(Tensor::new(vec![1, xs.len()], xs.to_vec()).unwrap())
            .unwrap();
        let y = g.softmax(v, 1).unwrap();
        g.value(y).data().to_vec()
    };
    for p in soft(&[0.0, 0.0, 0.0]) {
        assert!((p - 1.0 / 3.0).abs() < 1e-15);
    }
    let shifted = soft(&[100.5, 99.25]);
    let base = soft(&[0.5, -0.75]);
    for (a, b) in shifted.iter().zip(&base) {
        assert!((a - b).abs() < 1e-12);
    }
    let p = soft(&[1.0, 2.0, 3.0]);
    for (got, want) in p.iter().zip([0.0900, 0.2447, 0.6652]) {
        assert!((got - want).abs() < 1e-4, "{p:?}");
    }
}

/// Brute-force sliding-window cross-correlation.
fn naive_conv(
    x: &Tensor<f64>,
    w: &Tensor<f64>,
    b: &[f64],
    stride: usize,
    pad: usize,
) -> Tensor<f64> {
    let [n, c, h, wd] = x.shape().try_into().unwrap();
    let [o, _, k, _] = w.shape().try_into().unwrap();
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (wd + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; n * o * ho * wo];
    for s in 0..n {
        for oc in 0..o {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b[oc];
                    for ic in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                    acc += x[((s * c + ic) * h + iy as usize) * wd + ix as usize]
                                        * w[((oc * c + ic) * k + ky) * k + kx];
                                }
                            }
                        }
                    }
                    out[((s * o + oc) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    Tensor::new(vec![n, o, ho, wo], out).unwrap()
}

#[test]
fn conv_identity_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&[2, 1, 4, 5], &mut rng);
    let mut g = Graph::new();
    let xv = g.constant(x.clone()).unwrap();
    let w = g.constant(Tensor::ones(vec![1, 1, 1, 1]).unwrap()).unwrap();
    let b = g.constant(Tensor::zeros(vec![1]).unwrap()).unwrap();
    let y = g.conv2d(xv, w, Some(b), 1, 0).unwrap();
    assert_eq!(g.value(y), &x);
}

#[test]
fn conv_all_ones_on_constant_image() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::ones(vec![1, 1, 5, 5]).unwrap()).unwrap();
    let w = g.constant(Tensor::ones(vec![1, 1, 3, 3]).unwrap()).unwrap();
    let y = g.conv2d(x, w, None, 1, 0).unwrap();
    assert_eq!(g.shape(y), &[1, 1, 3, 3]);
    assert!(g.value(y).data().iter().all(|&v| v == 9.0));
}

#[test]
fn conv_output_size_224() {
    let mut g = Graph::<f32>::new();
    let x = g
        .constant(Tensor::zeros(vec![1, 1, 224, 224]).unwrap())
        .unwrap();
    let w = g
        .constant(Tensor::zeros(vec![2, 1, 3, 3]).unwrap())
        .unwrap();
    let y = g.conv2d(x, w, None, 2, 1).unwrap();
    assert_eq!(g.shape(y), &[1, 2, 112, 112]);
}

#[test]
fn conv_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for &(stride, pad, k) in &[(1, 0, 3), (1, 1, 3), (2, 1, 3), (2, 0, 1), (3, 2, 5)] {
        let x = random(&[2, 3, 7, 6], &mut rng);
        let w = random(&[4, 3, k, k], &mut rng);
        let b: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut g = Graph::new();
        let xv = g.constant(x.clone()).unwrap();
        let wv = g.constant(w.clone()).unwrap();
        let bv = g.constant(Tensor::from_slice(&b)).unwrap();
        let y = g.conv2d(xv, wv, Some(bv), stride, pad).unwrap();
        let want = naive_conv(&x, &w, &b, stride, pad);
        assert_eq!(g.shape(y), want.shape());
        for (a, b) in g.value(y).data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn conv_rejects_incompatible_shapes() {
    let mut g = Graph::<f32>::new();
    let x = g
        .constant(Tensor::zeros(vec![1, 2, 4, 4]).unwrap())
        .unwrap();
    let w = g
        .constant(Tensor::zeros(vec![1, 3, 3, 3]).unwrap())
        .unwrap();
    assert!(g.conv2d(x, w, None, 1, 0).is_err());
    let w = g
        .constant(Tensor::zeros(vec![1, 2, 5, 5]).unwrap())
        .unwrap();
    assert!(g.conv2d(x, w, None, 1, 0).is_err());
}

fn bn_run(x: Tensor<f64>, shift: f64, mode: Mode) -> (Tensor<f64>, BatchNorm2d<f64>) {
    let mut store = ParamStore::new();
    let c = x.shape()[1];
    let mut bn = BatchNorm2d::new("bn", c, true, &mut store).unwrap();
    store
        .set_value(bn.shift, Tensor::full(vec![c], shift).unwrap())
        .unwrap();
    let mut g = Graph::new();
    let xv = g.constant(x).unwrap();
    let y = bn.forward(&mut g, &store, xv, mode).unwrap();
    (g.value(y).clone(), bn)
}

#[test]
fn batchnorm_examples() {
    let (y, _) = bn_run(
        Tensor::full(vec![2, 3, 2, 2], 4.0).unwrap(),
        0.0,
        Mode::Train,
    );
    assert!(y.data().iter().all(|&v| v == 0.0));
    let (y, _) = bn_run(
        Tensor::full(vec![2, 3, 2, 2], 4.0).unwrap(),
        5.0,
        Mode::Train,
    );
    assert!(y.data().iter().all(|&v| v == 5.0));
    let (y, _) = bn_run(
        Tensor::new(vec![2, 1, 1, 1], vec![-1.0, 1.0]).unwrap(),
        0.0,
        Mode::Train,
    );
    assert!(
        (y[0] + 0.99999).abs() < 1e-4 && (y[1] - 0.99999).abs() < 1e-4,
        "{y:?}"
    );
}

#[test]
fn batchnorm_running_stats() {
    let x = Tensor::new(vec![2, 1, 1, 2], vec![1.0, 3.0, 5.0, 7.0]).unwrap();
    let (_, bn) = bn_run(x.clone(), 0.0, Mode::Train);
    // batch mean 4, biased var 5
    assert!((bn.running_mean[0] - 0.4).abs() < 1e-12);
    assert!((bn.running_var[0] - (0.9 + 0.5)).abs() < 1e-12);
    let (y, bn) = bn_run(x, 0.0, Mode::Infer);
    assert_eq!(bn.running_mean[0], 0.0);
    assert_eq!(bn.running_var[0], 1.0);
    let expect = 1.0 / (1.0 + BN_EPSILON).sqrt();
    assert!((y[0] - expect).abs() < 1e-12);
}

#[test]
fn frozen_batchnorm_ignores_batch_statistics() {
    let mut store = ParamStore::<f64>::new();
    let mut bn = BatchNorm2d::new("bn", 1, false, &mut store).unwrap();
    let mut g = Graph::new();
    let x = g
        .constant(Tensor::new(vec![2, 1, 1, 1], vec![3.0, 5.0]).unwrap())
        .unwrap();
    let y = bn.forward(&mut g, &store, x, Mode::Train).unwrap();
    assert!(g.value(y)[0] > 2.9);
    assert_eq!(bn.running_mean[0], 0.0);
}

#[test]
fn pool_examples() {
    let mut g = Graph::<f64>::new();
    let x = g
        .constant(Tensor::full(vec![2, 3, 4, 5], 2.5).unwrap())
        .unwrap();
    let y = g.global_avg_pool(x).unwrap();
    assert_eq!(g.shape(y), &[2, 3]);
    assert!(g.value(y).data().iter().all(|&v| v == 2.5));

    let x = g
        .input(
            Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            true,
        )
        .unwrap();
    let y = g.max_pool2d(x, 2, 2, 0).unwrap();
    assert_eq!(g.value(y).data(), &[4.0]);
    let l = g.sum(y).unwrap();
    let grads = g.backward(l).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[0.0, 0.0, 0.0, 1.0]);

    let small = g
        .constant(Tensor::zeros(vec![1, 1, 2, 2]).unwrap())
        .unwrap();
    assert!(g.max_pool2d(small, 3, 1, 0).is_err());
}

#[test]
fn padded_max_pool_ignores_padding() {
    let mut g = Graph::<f64>::new();
    let x = g
        .constant(Tensor::full(vec![1, 1, 3, 3], -5.0).unwrap())
        .unwrap();
    let y = g.max_pool2d(x, 3, 2, 1).unwrap();
    assert_eq!(g.shape(y), &[1, 1, 2, 2]);
    assert!(g.value(y).data().iter().all(|&v| v == -5.0));
}

#[test]
fn dense_examples() {
    let mut g = Graph::<f64>::new();
    let x = g
        .constant(Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap())
        .unwrap();
    let w = g
        .constant(Tensor::new(vec![2, 1], vec![2.0, 3.0]).unwrap())
        .unwrap();
    let b = g.constant(Tensor::from_slice(&[1.0])).unwrap();
    let y = g.dense(x, w, b).unwrap();
    assert_eq!(g.value(y).data(), &[6.0]);

    let x2 = g
        .constant(Tensor::new(vec![1, 2], vec![0.5, -4.0]).unwrap())
        .unwrap();
    let eye = g.constant(Tensor::eye(2).unwrap()).unwrap();
    let zero = g.constant(Tensor::zeros(vec![2]).unwrap()).unwrap();
    let y = g.dense(x2, eye, zero).unwrap();
    assert_eq!(g.value(y).data(), &[0.5, -4.0]);

    assert!(g.dense(x, eye, b).is_err());

    let mut store = ParamStore::<f32>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let d = Dense::new("fc", 64, 64, true, &mut store, &mut rng).unwrap();
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(vec![5, 64]).unwrap()).unwrap();
    let y = d.forward(&mut g, &store, x).unwrap();
    assert_eq!(g.shape(y), &[5, 64]);
}

fn block(
    in_c: usize,
    out_c: usize,
    stride: usize,
    seed: u64,
) -> (ResidualBlock<f64>, ParamStore<f64>) {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = ResidualBlock::new(
        "blk",
        in_c,
        out_c,
        stride,
        Shortcut::Auto,
        true,
        &mut store,
        &mut rng,
    )
    .unwrap();
    (b, store)
}

#[test]
fn residual_with_zero_branch_is_identity_on_nonnegative_input() {
    let (mut b, mut store) = block(3, 3, 1, 2);
    assert!(b.projection.is_none());
    b.zero_residual_branch(&mut store).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(&[2, 3, 4, 4], &mut rng).map(f64::abs);
    for mode in [Mode::Train, Mode::Infer] {
        let mut g = Graph::new();
        let xv = g.constant(x.clone()).unwrap();
        let y = b.forward(&mut g, &store, xv, mode).unwrap();
        assert_eq!(g.value(y), &x);
    }
}

#[test]
fn residual_with_zero_branch_applies_final_relu() {
    let (mut b, mut store) = block(2, 2, 1, 4);
    b.zero_residual_branch(&mut store).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random(&[1, 2, 3, 3], &mut rng);
    let mut g = Graph::new();
    let xv = g.constant(x.clone()).unwrap();
    let y = b.forward(&mut g, &store, xv, Mode::Train).unwrap();
    assert_eq!(g.value(y), &x.map(|v| v.max(0.0)));
}

#[test]
fn residual_shortcut_rule() {
    assert!(block(4, 8, 1, 0).0.projection.is_some());
    assert!(block(4, 4, 2, 0).0.projection.is_some());
    assert!(block(4, 4, 1, 0).0.projection.is_none());
    let spec = LayerSpec::Residual {
        in_channels: 4,
        out_channels: 8,
        stride: 1,
        shortcut: Shortcut::Identity,
    };
    assert!(spec.validate().is_err());
    let mut store = ParamStore::<f32>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(Layer::build(&spec, "r", true, &mut store, &mut rng).is_err());
}

#[test]
fn layer_spec_rejects_degenerate_hyperparameters() {
    let bad = [
        LayerSpec::Conv2d {
            in_channels: 1,
            out_channels: 1,
            kernel: 3,
            stride: 0,
            padding: 0,
            bias: true,
        },
        LayerSpec::Dense {
            inputs: 0,
            units: 4,
        },
        LayerSpec::MaxPool2d {
            window: 2,
            stride: 2,
            padding: 2,
        },
        LayerSpec::BatchNorm2d { channels: 0 },
    ];
    for spec in bad {
        assert!(spec.validate().is_err(), "{spec:?}");
    }
}

#[test]
fn cross_entropy_examples() {
    let ce = |y: &[f64], t: &[f64]| {
        let mut g = Graph::new();
        let yv = g
            .constant(Tensor::new(vec![1, y.len()], y.to_vec()).unwrap())
            .unwrap();
        let l = g.cross_entropy(yv, Tensor::new(vec![1, t.len()], t.to_vec()).unwrap())?;
        Ok::<_, Error>(g.value(l).item().unwrap())
    };
    assert!(ce(&[1.0 - 1e-7, 5e-8, 5e-8], &[1.0, 0.0, 0.0]).unwrap() < 1e-6);
    let third = 1.0 / 3.0;
    assert!((ce(&[third; 3], &[1.0, 0.0, 0.0]).unwrap() - 3f64.ln()).abs() < 1e-12);
    assert!(ce(&[third; 3], &[1.0, 1.0, 0.0]).is_err());
    assert!(ce(&[third; 3], &[0.5, 0.5, 0.0]).is_err());

    let mut g = Graph::new();
    let y = g
        .constant(Tensor::new(vec![1, 1], vec![0.5]).unwrap())
        .unwrap();
    let l = g
        .binary_cross_entropy(y, Tensor::new(vec![1, 1], vec![1.0]).unwrap())
        .unwrap();
    assert!((g.value(l).item().unwrap() - 2f64.ln()).abs() < 1e-12);
    assert!(g
        .binary_cross_entropy(y, Tensor::new(vec![1, 1], vec![1.5]).unwrap())
        .is_err());
}

#[test]
fn cross_entropy_clips_zero_probability() {
    let mut g = Graph::<f32>::new();
    let y = g
        .constant(Tensor::new(vec![1, 2], vec![0.0, 1.0]).unwrap())
        .unwrap();
    let l = g
        .cross_entropy(y, Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap())
        .unwrap();
    let v = g.value(l).item().unwrap();
    assert!(v.is_finite() && (v - 1e-7f32.ln().abs()).abs() < 1e-3);
}

// ---- finite-difference checks, one per layer type ----

fn check(
    store: &mut ParamStore<f64>,
    f: impl FnMut(&mut Graph<f64>, &ParamStore<f64>) -> Result<Var>,
) {
    let report = grad_check(store, &GradCheckConfig::default(), f).unwrap();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn gradcheck_conv2d() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut store = ParamStore::new();
    let x = store
        .add("x", random(&[2, 2, 5, 4], &mut rng), true)
        .unwrap();
    let conv = Conv2d::new("c", 2, 3, 3, 2, 1, true, true, &mut store, &mut rng).unwrap();
    check(&mut store, |g, s| {
        let xv = g.param(s, x)?;
        let y = conv.forward(g, s, xv)?;
        weighted_sum(g, y, 1)
    });
}

#[test]
fn gradcheck_batchnorm_both_modes() {
    for mode in [Mode::Train, Mode::Infer] {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut store = ParamStore::new();
        let x = store
            .add("x", random(&[3, 2, 2, 3], &mut rng), true)
            .unwrap();
        let mut bn = BatchNorm2d::new("bn", 2, true, &mut store).unwrap();
        store.set_value(bn.scale, random(&[2], &mut rng)).unwrap();
        store.set_value(bn.shift, random(&[2], &mut rng)).unwrap();
        bn.running_mean = random(&[2], &mut rng);
        bn.running_var = random(&[2], &mut rng).map(|v| v.abs() + 0.5);
        check(&mut store, |g, s| {
            let xv = g.param(s, x)?;
            let y = bn.forward(g, s, xv, mode)?;
            weighted_sum(g, y, 2)
        });
    }
}

#[test]
fn gradcheck_pooling() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut store = ParamStore::new();
    let x = store
        .add("x", random(&[2, 2, 5, 5], &mut rng), true)
        .unwrap();
    check(&mut store, |g, s| {
        let xv = g.param(s, x)?;
        let m = g.max_pool2d(xv, 3, 2, 1)?;
        let a = weighted_sum(g, m, 3)?;
        let p = g.global_avg_pool(xv)?;
        let b = weighted_sum(g, p, 4)?;
        g.add(a, b)
    });
}

#[test]
fn gradcheck_dense_softmax_cross_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut store = ParamStore::new();
    let x = store.add("x", random(&[4, 5], &mut rng), true).unwrap();
    let d = Dense::new("fc", 5, 3, true, &mut store, &mut rng).unwrap();
    let target = Tensor::new(
        vec![4, 3],
        vec![1., 0., 0., 0., 1., 0., 0., 0., 1., 0., 1., 0.],
    )
    .unwrap();
    check(&mut store, |g, s| {
        let xv = g.param(s, x)?;
        let h = d.forward(g, s, xv)?;
        let p = g.softmax(h, 1)?;
        g.cross_entropy(p, target.clone())
    });
}

#[test]
fn gradcheck_sigmoid_binary_cross_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut store = ParamStore::new();
    let x = store.add("x", random(&[4, 3], &mut rng), true).unwrap();
    let d = Dense::new("fc", 3, 1, true, &mut store, &mut rng).unwrap();
    let target = Tensor::new(vec![4, 1], vec![1., 0., 0., 1.]).unwrap();
    check(&mut store, |g, s| {
        let xv = g.param(s, x)?;
        let h = d.forward(g, s, xv)?;
        let h = g.relu(h)?;
        let p = g.sigmoid(h)?;
        g.binary_cross_entropy(p, target.clone())
    });
}

#[test]
fn gradcheck_residual_blocks() {
    for (in_c, out_c, stride) in [(2, 2, 1), (2, 3, 2)] {
        let (mut b, mut store) = block(in_c, out_c, stride, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x = store
            .add("x", random(&[2, in_c, 4, 4], &mut rng), true)
            .unwrap();
        check(&mut store, |g, s| {
            let xv = g.param(s, x)?;
            let y = b.forward(g, s, xv, Mode::Train)?;
            weighted_sum(g, y, 5)
        });
    }
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(rows in 1usize..5, cols in 2usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..rows * cols).map(|_| rng.random_range(-50.0f32..50.0)).collect();
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::new(vec![rows, cols], data).unwrap()).unwrap();
        let y = g.softmax(x, 1).unwrap();
        for row in g.value(y).data().chunks(cols) {
            prop_assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn sigmoid_is_antisymmetric(x in -1e6f32..1e6) {
        let s = scalar_op(|g, v| g.sigmoid(v), x as f64) + scalar_op(|g, v| g.sigmoid(v), -x as f64);
        prop_assert!((s - 1.0).abs() < 1e-6);
        let mut g = Graph::<f32>::new();
        let v = g.constant(Tensor::from_slice(&[x, -x])).unwrap();
        let y = g.sigmoid(v).unwrap();
        prop_assert!((g.value(y)[0] + g.value(y)[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_is_non_negative(seed in any::<u64>(), classes in 2usize..5, rows in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = Graph::<f64>::new();
        let logits = g.constant(random(&[rows, classes], &mut rng).map(|v| v * 20.0)).unwrap();
        let p = g.softmax(logits, 1).unwrap();
        let mut t = vec![0.0; rows * classes];
        for r in 0..rows {
            t[r * classes + rng.random_range(0..classes)] = 1.0;
        }
        let l = g.cross_entropy(p, Tensor::new(vec![rows, classes], t).unwrap()).unwrap();
        prop_assert!(g.value(l).item().unwrap() >= 0.0);
    }

    #[test]
    fn conv_with_identity_pointwise_kernel_is_exact(c in 1usize..4, h in 1usize..6, w in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f32> = (0..2 * c * h * w).map(|_| rng.random_range(-10.0f32..10.0)).collect();
        let mut k = vec![0.0f32; c * c];
        for i in 0..c {
            k[i * c + i] = 1.0;
        }
        let mut g = Graph::<f32>::new();
        let xv = g.constant(Tensor::new(vec![2, c, h, w], x.clone()).unwrap()).unwrap();
        let kv = g.constant(Tensor::new(vec![c, c, 1, 1], k).unwrap()).unwrap();
        let y = g.conv2d(xv, kv, None, 1, 0).unwrap();
        prop_assert_eq!(g.value(y).data(), &x[..]);
    }
}
