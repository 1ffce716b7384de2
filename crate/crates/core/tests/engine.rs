use flowsurrogate::engine::{
    grad_check, BackwardFault, GradCheckOptions, IndexMap, OpKind, Tape, Tensor, Var,
};
use flowsurrogate::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

/// Direct quadruple loop cross-correlation with zero padding.
fn conv_oracle(x: &Tensor, w: &Tensor, b: &[f64], pad: usize) -> Vec<f64> {
    let (n, cin, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (cout, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
    let (oh, ow) = (h + 2 * pad + 1 - kh, wd + 2 * pad + 1 - kw);
    let xv = |s: usize, c: usize, i: isize, j: isize| -> f64 {
        if i < 0 || j < 0 || i >= h as isize || j >= wd as isize {
            0.0
        } else {
            x.data()[((s * cin + c) * h + i as usize) * wd + j as usize]
        }
    };
    let mut out = vec![0.0; n * cout * oh * ow];
    for s in 0..n {
        for co in 0..cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b[co];
                    for ci in 0..cin {
                        for ki in 0..kh {
                            for kj in 0..kw {
                                let wv = w.data()[((co * cin + ci) * kh + ki) * kw + kj];
                                acc += wv
                                    * xv(
                                        s,
                                        ci,
                                        (oy + ki) as isize - pad as isize,
                                        (ox + kj) as isize - pad as isize,
                                    );
                            }
                        }
                    }
                    out[((s * cout + co) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    out
}

/// Scans each 2x2 window in row-major order, keeping the first maximum.
fn pool_oracle(x: &Tensor) -> (Vec<f64>, Vec<usize>) {
    let s = x.shape();
    let (planes, h, w) = (s[0] * s[1], s[2], s[3]);
    let (mut vals, mut idx) = (vec![], vec![]);
    for p in 0..planes {
        for oy in 0..h / 2 {
            for ox in 0..w / 2 {
                let mut best = None::<(f64, usize)>;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let i = p * h * w + (2 * oy + dy) * w + 2 * ox + dx;
                        let v = x.data()[i];
                        if best.is_none_or(|(bv, _)| v > bv) {
                            best = Some((v, i));
                        }
                    }
                }
                let (v, i) = best.unwrap();
                vals.push(v);
                idx.push(i);
            }
        }
    }
    (vals, idx)
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "index {i}: {x} vs {y}");
    }
}

#[test]
fn conv_identity_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut tape = Tape::new();
    let xt = random_tensor(&[2, 1, 5, 5], &mut rng);
    let x = tape.constant(xt.clone());
    let w = tape.constant(Tensor::full(vec![1, 1, 1, 1], 1.0));
    let b = tape.constant(Tensor::zeros(vec![1]));
    let y = tape.conv2d(x, w, Some(b), 0).unwrap();
    assert_eq!(tape.data(y), xt.data());
}

#[test]
fn conv_ones_kernel_on_constant_field() {
    let c = 0.7;
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::full(vec![1, 1, 6, 6], c));
    let w = tape.constant(Tensor::full(vec![1, 1, 3, 3], 1.0));
    let y = tape.conv2d(x, w, None, 1).unwrap();
    let v = tape.data(y);
    for i in 1..5 {
        for j in 1..5 {
            assert!((v[i * 6 + j] - 9.0 * c).abs() < 1e-14);
        }
    }
    // corner sees four cells
    assert!((v[0] - 4.0 * c).abs() < 1e-14);
}

#[test]
fn conv_matches_loop_oracle_small() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let xt = random_tensor(&[1, 1, 4, 4], &mut rng);
    let wt = random_tensor(&[1, 1, 3, 3], &mut rng);
    let mut tape = Tape::new();
    let (x, w) = (tape.constant(xt.clone()), tape.constant(wt.clone()));
    let y = tape.conv2d(x, w, None, 1).unwrap();
    assert_close(tape.data(y), &conv_oracle(&xt, &wt, &[0.0], 1), 1e-12);
}

#[test]
fn conv_rejects_bad_shapes_and_nan() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros(vec![1, 2, 4, 4]));
    let w = tape.constant(Tensor::zeros(vec![1, 3, 3, 3]));
    assert!(matches!(tape.conv2d(x, w, None, 1), Err(Error::Dimension(_))));
    let mut bad = Tensor::zeros(vec![1, 1, 4, 4]);
    bad.data_mut()[3] = f64::NAN;
    let x = tape.constant(bad);
    let w = tape.constant(Tensor::zeros(vec![1, 1, 3, 3]));
    assert!(matches!(tape.conv2d(x, w, None, 1), Err(Error::NonFinite(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn conv_equals_loop_oracle(
        n in 1usize..=2, cin in 1usize..=4, cout in 1usize..=4,
        h in 3usize..=8, w in 3usize..=8, k in prop::sample::select(vec![1usize, 3]),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xt = random_tensor(&[n, cin, h, w], &mut rng);
        let wt = random_tensor(&[cout, cin, k, k], &mut rng);
        let bt = random_tensor(&[cout], &mut rng);
        let pad = k / 2;
        let mut tape = Tape::new();
        let (x, wv, b) = (tape.constant(xt.clone()), tape.constant(wt.clone()), tape.constant(bt.clone()));
        let y = tape.conv2d(x, wv, Some(b), pad).unwrap();
        let oracle = conv_oracle(&xt, &wt, bt.data(), pad);
        for (a, o) in tape.data(y).iter().zip(&oracle) {
            prop_assert!((a - o).abs() <= 1e-12);
        }
    }

    #[test]
    fn unpool_of_pool_sums_window_maxima(seed in any::<u64>(), c in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xt = random_tensor(&[2, c, 6, 8], &mut rng);
        let mut tape = Tape::new();
        let x = tape.constant(xt.clone());
        let (p, map) = tape.maxpool2x2(x).unwrap();
        let u = tape.max_unpool2x2(p, &map).unwrap();
        let total: f64 = tape.data(u).iter().sum();
        let (maxima, _) = pool_oracle(&xt);
        prop_assert!((total - maxima.iter().sum::<f64>()).abs() < 1e-12);
    }
}

#[test]
fn pool_constant_input_ties_to_lowest_index() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::full(vec![1, 1, 4, 4], 2.5));
    let (p, map) = tape.maxpool2x2(x).unwrap();
    assert!(tape.data(p).iter().all(|&v| v == 2.5));
    assert_eq!(map.indices(), &[0, 2, 8, 10]);
}

#[test]
fn pool_single_window() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let (p, map) = tape.maxpool2x2(x).unwrap();
    assert_eq!(tape.data(p), &[4.0]);
    assert_eq!(map.indices(), &[3]);
}

#[test]
fn pool_matches_window_scan_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xt = random_tensor(&[1, 1, 8, 8], &mut rng);
    let mut tape = Tape::new();
    let x = tape.constant(xt.clone());
    let (p, map) = tape.maxpool2x2(x).unwrap();
    let (vals, idx) = pool_oracle(&xt);
    assert_eq!(tape.data(p), vals.as_slice());
    assert_eq!(map.indices(), idx.as_slice());
}

#[test]
fn pool_rejects_odd_extent() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros(vec![1, 1, 5, 4]));
    assert!(matches!(tape.maxpool2x2(x), Err(Error::Dimension(_))));
}

#[test]
fn unpool_constant_and_zero_inputs() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::full(vec![1, 1, 4, 4], 3.0));
    let (p, map) = tape.maxpool2x2(x).unwrap();
    let u = tape.max_unpool2x2(p, &map).unwrap();
    let expected: Vec<f64> = (0..16)
        .map(|i| if (i / 4) % 2 == 0 && (i % 4) % 2 == 0 { 3.0 } else { 0.0 })
        .collect();
    assert_eq!(tape.data(u), expected.as_slice());

    let z = tape.constant(Tensor::zeros(vec![1, 1, 2, 2]));
    let uz = tape.max_unpool2x2(z, &map).unwrap();
    assert!(tape.data(uz).iter().all(|&v| v == 0.0));
}

#[test]
fn unpool_matches_scatter_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let xt = random_tensor(&[2, 2, 4, 6], &mut rng);
    let vals = random_tensor(&[2, 2, 2, 3], &mut rng);
    let mut tape = Tape::new();
    let x = tape.constant(xt);
    let (_, map) = tape.maxpool2x2(x).unwrap();
    let v = tape.constant(vals.clone());
    let u = tape.max_unpool2x2(v, &map).unwrap();
    let mut oracle = vec![0.0; 2 * 2 * 4 * 6];
    for (k, &i) in map.indices().iter().enumerate() {
        oracle[i] = vals.data()[k];
    }
    assert_eq!(tape.data(u), oracle.as_slice());
}

#[test]
fn unpool_detects_corrupt_index() {
    let mut tape = Tape::new();
    let v = tape.constant(Tensor::zeros(vec![1, 1, 2, 2]));
    // Cell (0,0) claims flat index 2, which lives in window (0,1).
    let map = IndexMap::new([1, 1, 4, 4], vec![2, 2, 8, 10]);
    assert!(matches!(tape.max_unpool2x2(v, &map), Err(Error::Corruption(_))));
}

#[test]
fn elementwise_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let xt = random_tensor(&[3, 4], &mut rng);
    let mut tape = Tape::new();
    let z = tape.constant(Tensor::zeros(vec![3, 4]));
    let s = tape.sigmoid(z);
    assert!(tape.data(s).iter().all(|&v| v == 0.5));
    let x = tape.constant(xt.clone());
    let ones = tape.constant(Tensor::full(vec![3, 4], 1.0));
    let h = tape.mul(x, ones).unwrap();
    assert_eq!(tape.data(h), xt.data());
    let big = tape.constant(Tensor::new(vec![2], vec![-40.0, 40.0]).unwrap());
    let sb = tape.sigmoid(big);
    let tb = tape.tanh(big);
    assert!(tape.data(sb).iter().all(|&v| (0.0..=1.0).contains(&v)));
    assert!(tape.data(tb).iter().all(|&v| (-1.0..=1.0).contains(&v)));
    let other = tape.constant(Tensor::zeros(vec![4, 3]));
    assert!(matches!(tape.add(x, other), Err(Error::Dimension(_))));
}

#[test]
fn tanh_gradient_matches_central_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let v: f64 = rng.random_range(-2.0..2.0);
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(v).with_grad());
        let y = tape.tanh(x);
        tape.backward(y).unwrap();
        let analytic = tape.grad(x).unwrap()[0];
        let h = 1e-5;
        let numeric = ((v + h).tanh() - (v - h).tanh()) / (2.0 * h);
        assert!((analytic - numeric).abs() / analytic.abs() < 1e-6);
    }
}

#[test]
fn backward_of_sum_and_square() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let xt = random_tensor(&[2, 3], &mut rng);
    let mut tape = Tape::new();
    let x = tape.leaf(xt.clone().with_grad());
    let s = tape.sum(x);
    tape.backward(s).unwrap();
    assert!(tape.grad(x).unwrap().iter().all(|&g| g == 1.0));

    let mut tape = Tape::new();
    let x = tape.leaf(xt.clone().with_grad());
    let sq = tape.mul(x, x).unwrap();
    let s = tape.sum(sq);
    tape.backward(s).unwrap();
    for (g, v) in tape.grad(x).unwrap().iter().zip(xt.data()) {
        assert!((g - 2.0 * v).abs() < 1e-15);
    }
}

#[test]
fn backward_requires_scalar_loss() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::zeros(vec![2]).with_grad());
    let y = tape.relu(x);
    assert!(matches!(tape.backward(y), Err(Error::Contract(_))));
}

#[test]
fn repeated_backward_accumulates() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::new(vec![2], vec![1.0, -3.0]).unwrap().with_grad());
    let y = tape.scale(x, 2.5);
    let s = tape.sum(y);
    tape.backward(s).unwrap();
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[5.0, 5.0]);
    tape.zero_grads();
    assert_eq!(tape.grad(x).unwrap(), &[0.0, 0.0]);
}

#[test]
fn shared_subexpression_gradients_add() {
    // loss = sum(tanh(x) + sigmoid(x)): both paths reach x.
    let mut tape = Tape::new();
    let xt = Tensor::new(vec![3], vec![-0.4, 0.1, 0.9]).unwrap();
    let x = tape.leaf(xt.clone().with_grad());
    let a = tape.tanh(x);
    let b = tape.sigmoid(x);
    let c = tape.add(a, b).unwrap();
    let s = tape.sum(c);
    tape.backward(s).unwrap();
    for (g, v) in tape.grad(x).unwrap().iter().zip(xt.data()) {
        let sg = 1.0 / (1.0 + (-v).exp());
        let expected = (1.0 - v.tanh().powi(2)) + sg * (1.0 - sg);
        assert!((g - expected).abs() < 1e-14);
    }
}

#[test]
fn composite_graph_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let params = vec![
        ("x".to_string(), random_tensor(&[2, 2, 6, 6], &mut rng)),
        ("w".to_string(), random_tensor(&[3, 2, 3, 3], &mut rng)),
        ("b".to_string(), random_tensor(&[3], &mut rng)),
    ];
    let report = grad_check(
        |t: &mut Tape, v: &[Var]| {
            let y = t.conv2d(v[0], v[1], Some(v[2]), 1)?;
            let r = t.relu(y);
            let (p, _) = t.maxpool2x2(r)?;
            Ok(t.sum(p))
        },
        &params,
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.passed(), "{report:?}");
}

/// One small graph per primitive, each checked against central differences on
/// inputs drawn from [-1, 1].
#[test]
fn every_primitive_passes_gradient_check() {
    type Build = fn(&mut Tape, &[Var]) -> flowsurrogate::Result<Var>;
    let cases: Vec<(&str, Vec<Vec<usize>>, Build)> = vec![
        ("conv2d", vec![vec![2, 2, 5, 5], vec![3, 2, 3, 3], vec![3]], |t, v| {
            let y = t.conv2d(v[0], v[1], Some(v[2]), 1)?;
            let y2 = t.mul(y, y)?;
            Ok(t.sum(y2))
        }),
        ("maxpool", vec![vec![1, 2, 4, 4]], |t, v| {
            let (p, _) = t.maxpool2x2(v[0])?;
            let q = t.mul(p, p)?;
            Ok(t.sum(q))
        }),
        ("unpool", vec![vec![1, 2, 4, 4], vec![1, 2, 2, 2]], |t, v| {
            let (_, map) = t.maxpool2x2(v[0])?;
            let u = t.max_unpool2x2(v[1], &map)?;
            let q = t.tanh(u);
            Ok(t.sum(q))
        }),
        ("add_sub_mul_div", vec![vec![6], vec![6]], |t, v| {
            let a = t.add(v[0], v[1])?;
            let s = t.sub(v[0], v[1])?;
            let m = t.mul(a, s)?;
            let den = t.add_scalar(v[1], 3.0);
            let d = t.div(m, den)?;
            Ok(t.sum(d))
        }),
        ("mul_broadcast", vec![vec![3, 2, 4], vec![2, 4]], |t, v| {
            let y = t.mul_broadcast(v[0], v[1])?;
            let y = t.sigmoid(y);
            Ok(t.sum(y))
        }),
        ("scale_relu_tanh_sigmoid", vec![vec![10]], |t, v| {
            let a = t.scale(v[0], 1.7);
            let r = t.relu(a);
            let h = t.tanh(a);
            let s = t.sigmoid(h);
            let rs = t.mul(r, s)?;
            Ok(t.mean(rs))
        }),
        ("gather_scatter", vec![vec![5]], |t, v| {
            let g = t.gather(v[0], vec![4, 0, 0, 2, 3, 1], vec![6])?;
            let g2 = t.mul(g, g)?;
            let s = t.scatter_add(g2, vec![0, 1, 0, 2, 1, 2], vec![3])?;
            let s = t.tanh(s);
            Ok(t.sum(s))
        }),
        ("concat_narrow_reshape", vec![vec![2, 3, 2], vec![2, 1, 2]], |t, v| {
            let c = t.concat(&[v[0], v[1]], 1)?;
            let n = t.narrow(c, 1, 1, 2)?;
            let r = t.reshape(n, vec![8])?;
            let r2 = t.mul(r, r)?;
            Ok(t.sum(r2))
        }),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for (name, shapes, build) in cases {
        let params: Vec<(String, Tensor)> = shapes
            .iter()
            .enumerate()
            .map(|(i, s)| (format!("{name}.{i}"), random_tensor(s, &mut rng)))
            .collect();
        let report = grad_check(build, &params, &GradCheckOptions::default()).unwrap();
        assert!(report.passed(), "{name}: {report:?}");
    }
}

#[test]
fn linear_model_gradient_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let xs = random_tensor(&[4, 3, 1, 1], &mut rng);
    let params = vec![
        ("w".to_string(), random_tensor(&[2, 3, 1, 1], &mut rng)),
        ("b".to_string(), random_tensor(&[2], &mut rng)),
    ];
    let report = grad_check(
        move |t: &mut Tape, v: &[Var]| {
            let x = t.constant(xs.clone());
            let y = t.conv2d(x, v[0], Some(v[1]), 0)?;
            Ok(t.sum(y))
        },
        &params,
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.max_rel_error() < 1e-9, "{report:?}");
}

#[test]
fn gradient_check_flags_corrupted_backward() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let params = vec![
        ("a".to_string(), random_tensor(&[5], &mut rng)),
        ("b".to_string(), random_tensor(&[5], &mut rng)),
    ];
    // Only `b` flows through tanh.
    let build = |t: &mut Tape, v: &[Var]| {
        let h = t.tanh(v[1]);
        let m = t.mul(v[0], h)?;
        let s = t.add(m, v[0])?;
        Ok(t.sum(s))
    };
    let opts = GradCheckOptions {
        fault: Some(BackwardFault {
            op: OpKind::Tanh,
            factor: 1.01,
        }),
        ..GradCheckOptions::default()
    };
    let report = grad_check(build, &params, &opts).unwrap();
    assert!(!report.passed());
    let failed: Vec<&str> = report.failures().map(|f| f.name.as_str()).collect();
    assert_eq!(failed, vec!["b"]);
}

#[test]
fn gradient_check_rejects_nondeterministic_closure() {
    use std::cell::Cell;
    let calls = Cell::new(0u32);
    let params = vec![("x".to_string(), Tensor::new(vec![2], vec![0.3, 0.4]).unwrap())];
    let err = grad_check(
        |t: &mut Tape, v: &[Var]| {
            calls.set(calls.get() + 1);
            let y = t.scale(v[0], 1.0 + calls.get() as f64 * 1e-3);
            Ok(t.sum(y))
        },
        &params,
        &GradCheckOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Contract(_)));
}

#[test]
fn dropout_is_seeded_and_inverted() {
    let run = |seed: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(vec![1000], 1.0));
        let y = tape.dropout(x, 0.1, &mut rng).unwrap();
        tape.data(y).to_vec()
    };
    let a = run(3);
    assert_eq!(a, run(3));
    assert!(a.iter().all(|&v| v == 0.0 || (v - 1.0 / 0.9).abs() < 1e-15));
    let mean = a.iter().sum::<f64>() / a.len() as f64;
    assert!((mean - 1.0).abs() < 0.1);
}
