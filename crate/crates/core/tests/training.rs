use std::sync::OnceLock;

use flowsurrogate::engine::{Tape, Tensor};
use flowsurrogate::io::{Dataset, GeneratorConfig, Sample};
use flowsurrogate::nets::{forward, init_weights, ModelConfig, ModelKind, Phase};
use flowsurrogate::physics::{discrete_residual, physics_calls, physics_loss, ResidualContext};
use flowsurrogate::training::{
    data_loss, evaluate, normalize_dataset, predict, total_loss, train, EvalOptions, NormStats, PhysicsTerm,
    Prepared, SplitSizes, TrainConfig,
};
use flowsurrogate::{Error, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn generator() -> GeneratorConfig {
    GeneratorConfig {
        grid: 8,
        corr_len: 2.0,
        seed: 3,
        sim: SimConfig {
            steps: 3,
            ..SimConfig::default()
        },
        ..GeneratorConfig::default()
    }
}

fn dataset() -> &'static Dataset {
    static DS: OnceLock<Dataset> = OnceLock::new();
    DS.get_or_init(|| Dataset::generate(16, &generator()).unwrap())
}

const SIZES: SplitSizes = SplitSizes {
    train: 10,
    val: 3,
    test: 3,
};

fn tiny_model(kind: ModelKind, channels: usize) -> ModelConfig {
    ModelConfig {
        kind,
        grid: 8,
        steps: 3,
        widths: [2, 3, 4],
        hidden: 3,
        out_channels: channels,
        ..ModelConfig::default()
    }
}

fn tiny_config(kind: ModelKind, channels: usize) -> TrainConfig {
    TrainConfig {
        model: tiny_model(kind, channels),
        epochs: 3,
        batch: 4,
        lr: 1e-2,
        split: SIZES,
        seed: 5,
        ..TrainConfig::default()
    }
}

fn prepared(channels: usize) -> Prepared {
    normalize_dataset(dataset(), SIZES, channels).unwrap()
}

fn physics(prep: &Prepared) -> PhysicsTerm {
    PhysicsTerm::new(generator().sim, prep.stats.clone()).unwrap()
}

fn scalar(tape: &Tape, v: flowsurrogate::Var) -> f64 {
    tape.data(v)[0]
}

#[test]
fn data_loss_of_equal_tensors_is_zero() {
    let mut tape = Tape::new();
    let t = Tensor::from_fn([2, 3, 4], |i| (i as f64).sin());
    let (a, b) = (tape.constant(t.clone()), tape.constant(t));
    let l = data_loss(&mut tape, a, b).unwrap();
    assert_eq!(scalar(&tape, l), 0.0);
}

#[test]
fn data_loss_of_uniform_offset() {
    let mut tape = Tape::new();
    let t = Tensor::from_fn([2, 2, 5], |i| i as f64 * 0.25);
    let shifted = Tensor::new([2, 2, 5], t.data().iter().map(|v| v + 0.1).collect()).unwrap();
    let (a, b) = (tape.constant(shifted), tape.constant(t));
    let l = data_loss(&mut tape, a, b).unwrap();
    assert!((scalar(&tape, l) - 0.01).abs() < 1e-15);
}

#[test]
fn data_loss_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let shape = [rng.random_range(1..4), rng.random_range(1..5), 2, 3, rng.random_range(1..6)];
        let n: usize = shape.iter().product();
        let p: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let q: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let mut acc = 0.0;
        for i in 0..n {
            acc += (p[i] - q[i]).powi(2);
        }
        let oracle = acc / n as f64;
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::new(shape, p).unwrap());
        let b = tape.constant(Tensor::new(shape, q).unwrap());
        let l = data_loss(&mut tape, a, b).unwrap();
        assert!((scalar(&tape, l) - oracle).abs() <= 1e-12 * oracle.max(1.0));
    }
}

#[test]
fn data_loss_rejects_shape_mismatch() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros([2, 3]));
    let b = tape.constant(Tensor::zeros([3, 2]));
    assert!(matches!(data_loss(&mut tape, a, b), Err(Error::Dimension(_))));
}

#[test]
fn total_loss_arithmetic() {
    let mut tape = Tape::new();
    let d = tape.constant(Tensor::scalar(0.01));
    let p = tape.constant(Tensor::scalar(0.1));
    let zero = total_loss(&mut tape, d, p, 0.0).unwrap();
    assert_eq!(scalar(&tape, zero), 0.01);
    let t = total_loss(&mut tape, d, p, 0.3).unwrap();
    assert!((scalar(&tape, t) - 0.04).abs() < 1e-15);
    assert!(matches!(total_loss(&mut tape, d, p, -0.1), Err(Error::Config(_))));
}

#[test]
fn physics_term_is_residual_relative_to_injection() {
    let prep = prepared(2);
    let term = physics(&prep);
    let sim = generator().sim;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (b, t, hw) = (2, sim.steps, 64);
    let z: Vec<f64> = (0..b * t * 2 * hw).map(|_| rng.random::<f64>()).collect();
    let perms: Vec<_> = prep.test.perms.iter().take(b).collect();

    let mut tape = Tape::new();
    let pred = tape.constant(Tensor::new([b, t, 2, 8, 8], z.clone()).unwrap());
    let got = term.loss(&mut tape, pred, &perms).unwrap();
    let got = scalar(&tape, got);

    // Oracle: split channels by hand, denormalize pressure, raw residual.
    let (mut s, mut p) = (Vec::new(), Vec::new());
    for frame in z.chunks(2 * hw) {
        s.extend_from_slice(&frame[..hw]);
        p.extend(frame[hw..].iter().map(|v| v * prep.stats.pressure_range() + prep.stats.pressure_min));
    }
    let ctx = ResidualContext::for_simulation(&sim, &perms).unwrap();
    let mut tape = Tape::new();
    let sv = tape.constant(Tensor::new([b, t, 8, 8], s).unwrap());
    let pv = tape.constant(Tensor::new([b, t, 8, 8], p).unwrap());
    let r = discrete_residual(&mut tape, &ctx, sv, pv).unwrap();
    let raw = physics_loss(&mut tape, r, 1.0);
    let want = scalar(&tape, raw) * (ctx.grid.cell_volume() / ctx.wells.rate).powi(2);
    assert!((got - want).abs() <= 1e-10 * want, "{got} vs {want}");
}

/// Gradients of data and physics terms of the two-channel network, taken on
/// separate tapes, and the gradient of their λ-weighted sum.
fn term_gradients(lambda: f64) -> (f64, Vec<f64>, Vec<f64>, Vec<f64>, f64, f64) {
    let prep = prepared(2);
    let term = physics(&prep);
    let model = tiny_model(ModelKind::SegnetConvlstm, 2);
    let params = init_weights(&model, 2).unwrap();
    let members = [0, 1, 2];
    let perms: Vec<_> = members.iter().map(|&m| &prep.train.perms[m]).collect();
    let (x, y) = prep.train.batch(&members).unwrap();
    let run = |which: u8| {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let (xv, yv) = (tape.constant(x.clone()), tape.constant(y.clone()));
        let pred = forward(&mut tape, &bound, &model, xv, Phase::Eval).unwrap();
        let d = data_loss(&mut tape, pred, yv).unwrap();
        let p = term.loss(&mut tape, pred, &perms).unwrap();
        let (dv, pv) = (scalar(&tape, d), scalar(&tape, p));
        let out = match which {
            0 => d,
            1 => p,
            _ => total_loss(&mut tape, d, p, lambda).unwrap(),
        };
        let value = scalar(&tape, out);
        tape.backward(out).unwrap();
        let g: Vec<f64> = params.collect_grads(&tape, &bound).concat();
        (value, g, dv, pv)
    };
    let (_, gd, dv, pv) = run(0);
    let (_, gp, _, _) = run(1);
    let (tv, gt, _, _) = run(2);
    (tv, gd, gp, gt, dv, pv)
}

#[test]
fn total_gradient_is_linear_in_lambda() {
    let lambda = 0.3;
    let (_, gd, gp, gt, _, _) = term_gradients(lambda);
    let scale = gt.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(scale > 0.0);
    for i in 0..gt.len() {
        let expect = gd[i] + lambda * gp[i];
        assert!((gt[i] - expect).abs() <= 1e-10 * scale, "component {i}: {} vs {expect}", gt[i]);
    }
}

#[test]
fn total_loss_is_affine_in_lambda() {
    let vals: Vec<(f64, f64, f64)> = [0.0, 0.3, 1.0]
        .iter()
        .map(|&l| {
            let (t, _, _, _, d, p) = term_gradients(l);
            (t, d, p)
        })
        .collect();
    let (d, p) = (vals[0].1, vals[0].2);
    assert_eq!(vals[0].0, d);
    for (&l, v) in [0.0, 0.3, 1.0].iter().zip(&vals) {
        assert!((v.0 - (d + l * p)).abs() <= 1e-12 * (d + p));
    }
    let slope1 = (vals[1].0 - vals[0].0) / 0.3;
    let slope2 = (vals[2].0 - vals[1].0) / 0.7;
    assert!((slope1 - slope2).abs() <= 1e-9 * slope1.abs());
}

#[test]
fn zero_learning_rate_leaves_parameters() {
    let prep = normalize_dataset(dataset(), SplitSizes { train: 1, val: 1, test: 1 }, 1).unwrap();
    let mut cfg = tiny_config(ModelKind::Segnet, 1);
    cfg.lr = 0.0;
    cfg.weight_decay = 0.0;
    cfg.epochs = 1;
    cfg.model.dropout = 0.0;
    let (params, report) = train(&prep, None, &cfg).unwrap();
    assert_eq!(params, init_weights(&cfg.model, cfg.seed).unwrap());
    let e = report.epochs[0];
    assert_eq!(e.train_data, report.train.data);
    assert_eq!(e.val_data, report.val.data);
}

#[test]
fn equal_seeds_give_identical_runs() {
    let prep = prepared(1);
    let cfg = tiny_config(ModelKind::SegnetConvlstm, 1);
    let (p1, r1) = train(&prep, None, &cfg).unwrap();
    let (p2, r2) = train(&prep, None, &cfg).unwrap();
    assert_eq!(r1.to_json(), r2.to_json());
    assert_eq!(r1.to_csv(), r2.to_csv());
    for ((_, a), (_, b)) in p1.iter().zip(p2.iter()) {
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    let mut other = cfg.clone();
    other.seed += 1;
    let (_, r3) = train(&prep, None, &other).unwrap();
    assert_ne!(r1.to_json(), r3.to_json());
}

#[test]
fn training_reduces_the_loss() {
    let prep = prepared(1);
    let mut cfg = tiny_config(ModelKind::Segnet, 1);
    cfg.epochs = 12;
    let model = cfg.model.clone();
    let init = init_weights(&model, cfg.seed).unwrap();
    let before = evaluate(&init, &model, &prep.train, None, EvalOptions::default()).unwrap();
    let (_, report) = train(&prep, None, &cfg).unwrap();
    assert!(report.train.data < before.data, "{} !< {}", report.train.data, before.data);
    assert_eq!(report.epochs.len(), 12);
    let best = report.epochs[report.best_epoch - 1];
    assert!(report.epochs.iter().all(|e| e.val_data >= best.val_data));
    assert_eq!(best.val_data, report.val.data);
}

#[test]
fn lambda_zero_never_touches_physics() {
    let prep = prepared(2);
    let term = physics(&prep);
    let mut cfg = tiny_config(ModelKind::Segnet, 2);
    cfg.epochs = 1;
    let before = physics_calls();
    let (_, report) = train(&prep, Some(&term), &cfg).unwrap();
    assert_eq!(physics_calls(), before);
    assert!(report.test.physics.is_none());

    cfg.lambda = 0.3;
    let (_, report) = train(&prep, Some(&term), &cfg).unwrap();
    assert!(physics_calls() > before);
    assert!(report.test.physics.unwrap() >= 0.0);
    assert!(report.epochs[0].train_physics.is_some());
}

#[test]
fn invalid_physics_setups_are_rejected() {
    let prep = prepared(2);
    let mut cfg = tiny_config(ModelKind::Segnet, 2);
    cfg.lambda = 0.3;
    assert!(matches!(train(&prep, None, &cfg), Err(Error::Config(_))));
    let mut one = tiny_config(ModelKind::Segnet, 1);
    one.lambda = 0.3;
    assert!(matches!(train(&prepared(1), Some(&physics(&prep)), &one), Err(Error::Config(_))));
    cfg.lambda = -1.0;
    assert!(matches!(train(&prep, Some(&physics(&prep)), &cfg), Err(Error::Config(_))));
    let mismatched = tiny_config(ModelKind::Segnet, 1);
    assert!(matches!(train(&prep, None, &mismatched), Err(Error::Dimension(_))));
}

#[test]
fn non_finite_batch_aborts_with_dump() {
    let mut prep = prepared(1);
    prep.train.targets[5] = f64::NAN;
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(ModelKind::Segnet, 1);
    cfg.dump_dir = Some(dir.path().to_path_buf());
    let err = train(&prep, None, &cfg).unwrap_err();
    assert!(matches!(err, Error::NonFinite(_)), "{err}");
    let dump: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("nonfinite_batch.json")).unwrap()).unwrap();
    assert_eq!(dump["stage"], "loss");
    assert!(dump["members"].as_array().unwrap().iter().any(|m| m == 0));
}

#[test]
fn evaluation_is_deterministic_and_exact_on_oracle() {
    let prep = prepared(1);
    let model = tiny_model(ModelKind::SegnetConvlstm, 1);
    let params = init_weights(&model, 4).unwrap();
    let a = evaluate(&params, &model, &prep.test, None, EvalOptions::default()).unwrap();
    let b = evaluate(&params, &model, &prep.test, None, EvalOptions::default()).unwrap();
    assert_eq!(a, b);

    let mut oracle = prep.test.clone();
    let members: Vec<usize> = (0..oracle.len()).collect();
    let (x, _) = oracle.batch(&members).unwrap();
    oracle.targets = predict(&params, &model, x, Phase::Eval).unwrap().into_data();
    let zero = evaluate(&params, &model, &oracle, None, EvalOptions { batch: 2, dropout_seed: None }).unwrap();
    assert_eq!(zero.data, 0.0);
}

#[test]
fn dropout_free_evaluation_beats_dropout_on_trained_model() {
    let prep = prepared(1);
    let mut cfg = tiny_config(ModelKind::Segnet, 1);
    cfg.model.dropout = 0.3;
    cfg.epochs = 8;
    let (params, report) = train(&prep, None, &cfg).unwrap();
    let mut noisy: Vec<f64> = (0..5)
        .map(|s| {
            let opts = EvalOptions {
                batch: 4,
                dropout_seed: Some(100 + s),
            };
            evaluate(&params, &cfg.model, &prep.train, None, opts).unwrap().data
        })
        .collect();
    noisy.sort_by(f64::total_cmp);
    assert!(report.train.data <= noisy[2], "{} > median {}", report.train.data, noisy[2]);
}

#[test]
fn normalized_inputs_are_standardized() {
    let prep = prepared(2);
    let x = &prep.train.inputs;
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!(mean.abs() < 1e-6, "{mean}");
    assert!((std - 1.0).abs() < 1e-6, "{std}");
    let p: Vec<f64> = prep.train.targets.chunks(64).skip(1).step_by(2).flatten().copied().collect();
    assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(p.contains(&0.0) && p.contains(&1.0));
}

#[test]
fn normalization_round_trips() {
    let stats = prepared(2).stats;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let k: Vec<f64> = (0..200).map(|_| (rng.random::<f64>() * 8.0 - 2.0).exp()).collect();
    let p: Vec<f64> = (0..200).map(|_| rng.random::<f64>() * 50.0 - 3.0).collect();
    for (a, b) in k.iter().zip(stats.denormalize_perm(&stats.normalize_perm(&k))) {
        assert!((a - b).abs() <= 1e-12 * a);
    }
    for (a, b) in p.iter().zip(stats.denormalize_pressure(&stats.normalize_pressure(&p))) {
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}

#[test]
fn held_out_samples_never_shape_the_statistics() {
    let base = prepared(2);
    let mut mutated = dataset().clone();
    for s in &mut mutated.samples[SIZES.train..] {
        s.perm.iter_mut().for_each(|v| *v *= 37.0);
        s.pressure.iter_mut().for_each(|v| *v = *v * 5.0 + 900.0);
    }
    let prep = normalize_dataset(&mutated, SIZES, 2).unwrap();
    assert_eq!(prep.stats, base.stats);
    assert_eq!(prep.train.inputs, base.train.inputs);
    assert_eq!(prep.train.targets, base.train.targets);
    assert_ne!(prep.test.inputs, base.test.inputs);

    let mut train_mutated = dataset().clone();
    train_mutated.samples[0].pressure[3] += 1000.0;
    assert_ne!(normalize_dataset(&train_mutated, SIZES, 2).unwrap().stats, base.stats);
}

#[test]
fn degenerate_statistics_are_config_errors() {
    let mut ds = Dataset::empty(2, 2, 1);
    for i in 0..3 {
        ds.samples.push(Sample {
            perm: vec![50.0; 4],
            saturation: vec![0.5; 4],
            pressure: vec![1.0, 2.0, 3.0, 4.0],
        });
        ds.seeds.push(i);
    }
    let sizes = SplitSizes { train: 2, val: 1, test: 0 };
    assert!(matches!(normalize_dataset(&ds, sizes, 1), Err(Error::Config(_))));
    assert!(matches!(
        NormStats::fit(std::iter::empty::<&Sample>()),
        Err(Error::Config(_))
    ));
    let too_many = SplitSizes { train: 2, val: 1, test: 1 };
    assert!(matches!(normalize_dataset(dataset(), too_many, 3), Err(Error::Config(_))));
    let big = SplitSizes { train: 20, val: 0, test: 0 };
    assert!(matches!(normalize_dataset(dataset(), big, 1), Err(Error::Config(_))));
}

#[test]
fn loss_report_serializes() {
    let prep = prepared(1);
    let cfg = tiny_config(ModelKind::Segnet, 1);
    let (_, report) = train(&prep, None, &cfg).unwrap();
    let csv = report.to_csv();
    assert_eq!(csv.lines().count(), cfg.epochs + 1);
    assert!(csv.starts_with("epoch,train_data,train_physics,val_data,val_physics\n"));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    report.write_json(&path).unwrap();
    assert_eq!(flowsurrogate::LossReport::read_json(&path).unwrap(), report);
    assert!(report.validate().is_ok());
}
