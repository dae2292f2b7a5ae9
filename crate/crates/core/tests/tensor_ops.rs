use longview_core::rng::{normal, seeded};
use longview_core::tensor::gradcheck::{check_inputs, CheckReport};
use longview_core::tensor::{Graph, Tensor, Var};
use proptest::prelude::*;

type G<'a> = Graph<'a, f64>;

fn rand_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = seeded(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| normal(&mut rng)).collect()).unwrap()
}

fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::from_f64(shape, data).unwrap()
}

fn close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "element {i}: {x} vs {y}");
    }
}

fn run1(x: Tensor<f64>, f: impl FnOnce(&mut G, Var) -> Var) -> Vec<f64> {
    let mut g = G::new();
    let v = g.input(x);
    let out = f(&mut g, v);
    g.value(out).data().to_vec()
}

/// Direct cross-correlation with explicit loops over every index.
fn naive_conv(x: &Tensor<f64>, k: &Tensor<f64>, b: &[f64], stride: usize, pad: usize) -> Vec<f64> {
    let (n, cin, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (cout, kh, kw) = (k.shape()[0], k.shape()[2], k.shape()[3]);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; n * cout * oh * ow];
    for ni in 0..n {
        for co in 0..cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut s = b[co];
                    for ci in 0..cin {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let xv = x.data()[((ni * cin + ci) * h + iy as usize) * w + ix as usize];
                                s += xv * k.data()[((co * cin + ci) * kh + ky) * kw + kx];
                            }
                        }
                    }
                    out[((ni * cout + co) * oh + oy) * ow + ox] = s;
                }
            }
        }
    }
    out
}

fn conv(x: Tensor<f64>, k: Tensor<f64>, b: Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
    let mut g = G::new();
    let (x, k, b) = (g.input(x), g.input(k), g.input(b));
    let y = g.conv2d(x, k, b, stride, pad).unwrap();
    g.value(y).clone()
}

#[test]
fn conv_scaling_by_one_by_one_kernel() {
    let y = conv(Tensor::full(&[1, 1, 3, 3], 1.0), t(&[1, 1, 1, 1], &[2.0]), t(&[1], &[0.0]), 1, 0);
    assert_eq!(y.shape(), [1, 1, 3, 3]);
    assert!(y.data().iter().all(|&v| v == 2.0));
}

#[test]
fn pointwise_conv_preserves_channels() {
    let y = conv(rand_tensor(&[1, 8, 5, 5], 1), rand_tensor(&[8, 8, 1, 1], 2), rand_tensor(&[8], 3), 1, 0);
    assert_eq!(y.shape(), [1, 8, 5, 5]);
}

#[test]
fn conv_matches_naive_oracle() {
    for (seed, (shape, kshape, stride, pad)) in [
        ([1, 2, 4, 4], [3, 2, 3, 3], 1, 1),
        ([2, 3, 7, 5], [4, 3, 3, 3], 2, 1),
        ([1, 5, 6, 9], [17, 5, 1, 1], 1, 0),
        ([1, 2, 9, 8], [3, 2, 3, 3], 2, 0),
        ([1, 1, 11, 13], [9, 1, 3, 3], 1, 1),
    ]
    .into_iter()
    .enumerate()
    {
        let s = 10 * seed as u64;
        let (x, k, b) = (rand_tensor(&shape, s), rand_tensor(&kshape, s + 1), rand_tensor(&[kshape[0]], s + 2));
        let expect = naive_conv(&x, &k, b.data(), stride, pad);
        let y = conv(x, k, b, stride, pad);
        let oh = (shape[2] + 2 * pad - kshape[2]) / stride + 1;
        let ow = (shape[3] + 2 * pad - kshape[3]) / stride + 1;
        assert_eq!(y.shape(), [shape[0], kshape[0], oh, ow]);
        close(y.data(), &expect, 1e-6);
    }
}

#[test]
fn conv_channel_mismatch_names_both_shapes() {
    let mut g = G::new();
    let x = g.input(rand_tensor(&[1, 2, 4, 4], 1));
    let k = g.input(rand_tensor(&[3, 5, 3, 3], 2));
    let b = g.input(rand_tensor(&[3], 3));
    let msg = g.conv2d(x, k, b, 1, 1).unwrap_err().to_string();
    assert!(msg.contains("[1, 2, 4, 4]") && msg.contains("[3, 5, 3, 3]"), "{msg}");
}

#[test]
fn relu_examples() {
    assert_eq!(run1(t(&[3], &[-1.0, 0.0, 2.0]), |g, x| g.relu(x)), [0.0, 0.0, 2.0]);
    assert!(run1(t(&[4], &[-1.0, -2.0, -0.5, -9.0]), |g, x| g.relu(x)).iter().all(|&v| v == 0.0));
    let mut g = G::new();
    let x = g.variable(t(&[2], &[-1.0, 2.0]));
    let r = g.relu(x);
    let s = g.sum(r).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), [0.0, 1.0]);
}

#[test]
fn global_avg_pool_examples() {
    assert_eq!(run1(Tensor::full(&[1, 1, 3, 2], 3.5), |g, x| g.global_avg_pool(x).unwrap()), [3.5]);
    assert_eq!(run1(t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]), |g, x| g.global_avg_pool(x).unwrap()), [2.5]);
    let x = rand_tensor(&[2, 4, 6, 6], 9);
    let expect: Vec<f64> = x.data().chunks(36).map(|p| p.iter().sum::<f64>() / 36.0).collect();
    let got = run1(x, |g, x| g.global_avg_pool(x).unwrap());
    close(&got, &expect, 1e-6);
}

#[test]
fn concat_examples() {
    let mut g = G::new();
    let a = g.variable(rand_tensor(&[3, 256], 1));
    let b = g.variable(rand_tensor(&[3, 256], 2));
    let c = g.concat_channels(a, b).unwrap();
    assert_eq!(g.shape(c), [3, 512]);
    let second = g.slice_channels(c, 256, 256).unwrap();
    let s = g.sum(second).unwrap();
    g.backward(s).unwrap();
    assert!(g.grad(a).unwrap().iter().all(|&v| v == 0.0));
    assert!(g.grad(b).unwrap().iter().all(|&v| v == 1.0));

    let x = rand_tensor(&[2, 3, 4, 5], 4);
    let mut g = G::new();
    let xv = g.input(x.clone());
    let z = g.input(Tensor::zeros(&[2, 3, 4, 5]));
    let c = g.concat_channels(xv, z).unwrap();
    let first = g.slice_channels(c, 0, 3).unwrap();
    assert_eq!(g.value(first), &x);

    let w = g.input(Tensor::zeros(&[2, 3, 4, 6]));
    assert!(g.concat_channels(xv, w).is_err());
}

fn linear(x: Tensor<f64>, w: Tensor<f64>, b: Tensor<f64>) -> Vec<f64> {
    let mut g = G::new();
    let (x, w, b) = (g.input(x), g.input(w), g.input(b));
    let y = g.linear(x, w, b).unwrap();
    g.value(y).data().to_vec()
}

#[test]
fn linear_examples() {
    let x = rand_tensor(&[2, 4], 1);
    let mut eye = Tensor::zeros(&[4, 4]);
    for i in 0..4 {
        eye.data_mut()[i * 5] = 1.0;
    }
    assert_eq!(linear(x.clone(), eye, Tensor::zeros(&[4])), x.data());
    assert_eq!(linear(t(&[1, 2], &[1.0, 2.0]), t(&[1, 2], &[3.0, 4.0]), t(&[1], &[5.0])), [16.0]);

    let (x, w, b) = (rand_tensor(&[3, 7], 2), rand_tensor(&[5, 7], 3), rand_tensor(&[5], 4));
    let mut expect = vec![0.0; 15];
    for n in 0..3 {
        for o in 0..5 {
            expect[n * 5 + o] = b.data()[o] + (0..7).map(|i| x.data()[n * 7 + i] * w.data()[o * 7 + i]).sum::<f64>();
        }
    }
    close(&linear(x, w, b), &expect, 1e-6);

    let mut g = G::new();
    let (x, w, b) = (g.input(rand_tensor(&[1, 3], 1)), g.input(rand_tensor(&[2, 4], 1)), g.input(rand_tensor(&[2], 1)));
    assert!(g.linear(x, w, b).is_err());
}

#[test]
fn softmax_examples() {
    assert_eq!(run1(t(&[1, 2], &[0.0, 0.0]), |g, x| g.softmax2(x).unwrap()), [0.5, 0.5]);
    let p = run1(t(&[1, 2], &[1000.0, 0.0]), |g, x| g.softmax2(x).unwrap());
    assert!(p.iter().all(|v| v.is_finite()) && p[0] == 1.0 && p[1] < 1e-300);
    let p = run1(t(&[1, 2], &[3f64.ln(), 0.0]), |g, x| g.softmax2(x).unwrap());
    close(&p, &[0.75, 0.25], 1e-12);

    let mut g = G::new();
    let x = g.input(t(&[1, 2], &[f64::NAN, 0.0]));
    assert!(g.softmax2(x).is_err());
}

fn ce(probs: Tensor<f64>, targets: &[usize]) -> longview_core::Result<f64> {
    let mut g = G::new();
    let p = g.input(probs);
    let l = g.cross_entropy(p, targets)?;
    g.value(l).item()
}

#[test]
fn cross_entropy_examples() {
    assert_eq!(ce(t(&[2, 2], &[0.0, 1.0, 1.0, 0.0]), &[1, 0]).unwrap(), 0.0);
    assert!((ce(Tensor::full(&[3, 2], 0.5), &[0, 1, 1]).unwrap() - 2f64.ln()).abs() < 1e-12);
    assert!(ce(Tensor::full(&[1, 2], 0.5), &[2]).is_err());

    let mut rng = seeded(5);
    let rows: Vec<f64> = (0..6).map(|_| rand::Rng::gen_range(&mut rng, 0.01..0.99)).collect();
    let probs: Vec<f64> = rows.iter().flat_map(|&p| [p, 1.0 - p]).collect();
    let targets = [0, 1, 1, 0, 1, 0];
    let expect = targets.iter().enumerate().map(|(i, &c)| -probs[2 * i + c].ln()).sum::<f64>() / 6.0;
    assert!((ce(t(&[6, 2], &probs), &targets).unwrap() - expect).abs() < 1e-6);
}

#[test]
fn backward_examples() {
    let mut g = G::new();
    let x = g.variable(t(&[3], &[0.3, -2.0, 7.0]));
    let s = g.sum(x).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), [1.0, 1.0, 1.0]);

    let mut g = G::new();
    let x = g.variable(t(&[1], &[2.0]));
    let sq = g.mul(x, x).unwrap();
    let s = g.sum(sq).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), [4.0]);

    let mut g = G::new();
    let x = g.variable(t(&[2], &[1.0, 2.0]));
    assert!(g.backward(x).is_err());
}

#[test]
fn forward_and_backward_are_deterministic() {
    let run = || {
        let mut g = G::new();
        let x = g.variable(rand_tensor(&[1, 3, 9, 7], 1));
        let k = g.variable(rand_tensor(&[4, 3, 3, 3], 2));
        let b = g.variable(rand_tensor(&[4], 3));
        let y = g.conv2d(x, k, b, 2, 1).unwrap();
        let r = g.relu(y);
        let p = g.global_avg_pool(r).unwrap();
        let s = g.sum(p).unwrap();
        g.backward(s).unwrap();
        (g.value(p).clone(), g.grad(x).unwrap().to_vec(), g.grad(k).unwrap().to_vec())
    };
    let (a, b) = (run(), run());
    assert_eq!(a.0.data(), b.0.data());
    assert_eq!(a.1, b.1);
    assert_eq!(a.2, b.2);
}

// Gradient suite: every op, 100 seeds, 64-bit central differences with h = 1e-3.

const H: f64 = 1e-3;
const TRIALS: u64 = 100;
const TOL: f64 = 1e-4;

/// Random weighting so the loss depends on every output element differently.
fn weighted_sum(g: &mut G, y: Var, seed: u64) -> Var {
    let w = g.input(rand_tensor(g.shape(y), seed ^ 0x5eed));
    let p = g.mul(y, w).unwrap();
    g.sum(p).unwrap()
}

fn suite(name: &str, inputs: impl Fn(u64) -> Vec<Tensor<f64>>, build: impl Fn(&mut G, &[Var], u64) -> Var) {
    let mut total = CheckReport::default();
    for seed in 0..TRIALS {
        let r = check_inputs(&inputs(seed), H, |g, v| Ok(build(g, v, seed))).unwrap();
        total.merge(r);
    }
    assert!(total.checked > 0, "{name}: nothing checked");
    assert!(total.max_rel_error < TOL, "{name}: {total:?}");
}

#[test]
fn gradcheck_conv2d() {
    suite(
        "conv2d",
        |s| vec![rand_tensor(&[1, 2, 5, 4], 3 * s), rand_tensor(&[3, 2, 3, 3], 3 * s + 1), rand_tensor(&[3], 3 * s + 2)],
        |g, v, s| {
            let (stride, pad) = [(1, 1), (2, 1), (1, 0), (2, 0)][s as usize % 4];
            let y = g.conv2d(v[0], v[1], v[2], stride, pad).unwrap();
            weighted_sum(g, y, s)
        },
    );
}

#[test]
fn gradcheck_relu() {
    suite("relu", |s| vec![rand_tensor(&[2, 3, 4], s)], |g, v, s| {
        let y = g.relu(v[0]);
        weighted_sum(g, y, s)
    });
}

#[test]
fn gradcheck_global_avg_pool() {
    suite("gap", |s| vec![rand_tensor(&[2, 3, 4, 5], s)], |g, v, s| {
        let y = g.global_avg_pool(v[0]).unwrap();
        weighted_sum(g, y, s)
    });
}

#[test]
fn gradcheck_concat_and_slice() {
    suite("concat", |s| vec![rand_tensor(&[2, 3, 2, 2], 2 * s), rand_tensor(&[2, 1, 2, 2], 2 * s + 1)], |g, v, s| {
        let c = g.concat_channels(v[0], v[1]).unwrap();
        let y = g.slice_channels(c, 1, 3).unwrap();
        weighted_sum(g, y, s)
    });
}

#[test]
fn gradcheck_linear() {
    suite("linear", |s| vec![rand_tensor(&[3, 4], 3 * s), rand_tensor(&[5, 4], 3 * s + 1), rand_tensor(&[5], 3 * s + 2)], |g, v, s| {
        let y = g.linear(v[0], v[1], v[2]).unwrap();
        weighted_sum(g, y, s)
    });
}

#[test]
fn gradcheck_softmax_and_cross_entropy() {
    suite("softmax2", |s| vec![rand_tensor(&[4, 2], s)], |g, v, s| {
        let y = g.softmax2(v[0]).unwrap();
        weighted_sum(g, y, s)
    });
    suite("cross_entropy", |s| vec![rand_tensor(&[4, 2], s)], |g, v, s| {
        let p = g.softmax2(v[0]).unwrap();
        let targets: Vec<usize> = (0..4).map(|i| ((s >> i) & 1) as usize).collect();
        g.cross_entropy(p, &targets).unwrap()
    });
}

#[test]
fn gradcheck_elementwise() {
    suite("add_n/mul/scale", |s| vec![rand_tensor(&[6], 3 * s), rand_tensor(&[6], 3 * s + 1), rand_tensor(&[6], 3 * s + 2)], |g, v, s| {
        let m = g.mul(v[0], v[1]).unwrap();
        let a = g.add_n(&[m, v[2], v[0]]).unwrap();
        let y = g.scale(a, -0.7).unwrap();
        weighted_sum(g, y, s)
    });
}

#[test]
fn gradcheck_composed_network() {
    suite(
        "composed",
        |s| vec![rand_tensor(&[1, 1, 8, 6], 4 * s), rand_tensor(&[4, 1, 3, 3], 4 * s + 1), rand_tensor(&[4], 4 * s + 2), rand_tensor(&[2, 8], 4 * s + 3)],
        |g, v, s| {
            let y = g.conv2d(v[0], v[1], v[2], 2, 1).unwrap();
            let y = g.relu(y);
            let p = g.global_avg_pool(y).unwrap();
            let both = g.concat_channels(p, p).unwrap();
            let b = g.input(Tensor::zeros(&[2]));
            let logits = g.linear(both, v[3], b).unwrap();
            let probs = g.softmax2(logits).unwrap();
            g.cross_entropy(probs, &[(s % 2) as usize]).unwrap()
        },
    );
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(rows in prop::collection::vec((-1e4f64..1e4, -1e4f64..1e4), 1..16)) {
        let flat: Vec<f64> = rows.iter().flat_map(|&(a, b)| [a, b]).collect();
        let p = run1(t(&[rows.len(), 2], &flat), |g, x| g.softmax2(x).unwrap());
        for r in p.chunks(2) {
            prop_assert!(r[0] >= 0.0 && r[1] >= 0.0);
            prop_assert!((r[0] + r[1] - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn concat_slice_round_trip(n in 1usize..3, c1 in 1usize..5, c2 in 1usize..5, hw in 1usize..4, seed in any::<u64>()) {
        let (a, b) = (rand_tensor(&[n, c1, hw, hw], seed), rand_tensor(&[n, c2, hw, hw], seed ^ 1));
        let mut g = G::new();
        let (av, bv) = (g.input(a.clone()), g.input(b.clone()));
        let c = g.concat_channels(av, bv).unwrap();
        let sa = g.slice_channels(c, 0, c1).unwrap();
        let sb = g.slice_channels(c, c1, c2).unwrap();
        prop_assert_eq!(g.value(sa), &a);
        prop_assert_eq!(g.value(sb), &b);
    }

    #[test]
    fn tensor_shape_matches_data(shape in prop::collection::vec(1usize..5, 1..4), extra in 0usize..3) {
        let n: usize = shape.iter().product();
        prop_assert!(Tensor::<f32>::new(&shape, vec![0.0; n]).is_ok());
        if extra > 0 {
            prop_assert!(Tensor::<f32>::new(&shape, vec![0.0; n + extra]).is_err());
        }
    }
}
