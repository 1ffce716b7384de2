//! Gradient-check suite over every differentiable primitive and both full
//! surrogates trained on the complete objective.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{grad_check, GradCheckOptions, GradCheckReport, Tape, Tensor, Var};
use crate::error::Result;
use crate::io::{Dataset, GeneratorConfig};
use crate::nets::{forward, init_weights, BoundParams, ModelConfig, ModelKind, Phase};
use crate::simulator::SimConfig;
use crate::training::{data_loss, normalize_dataset, total_loss, PhysicsTerm, SplitSizes};

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteCase {
    pub name: String,
    pub report: GradCheckReport,
}

type Build = fn(&mut Tape, &[Var]) -> Result<Var>;

fn primitive_cases() -> Vec<(&'static str, Vec<Vec<usize>>, Build)> {
    vec![
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
        ("activations", vec![vec![10]], |t, v| {
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
        ("dropout", vec![vec![4, 6]], |t, v| {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let d = t.dropout(v[0], 0.4, &mut rng)?;
            let d2 = t.mul(d, d)?;
            Ok(t.sum(d2))
        }),
    ]
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

/// Checks `data + 0.3 · physics` of a two-channel model on an 8×8, 3-frame
/// batch of two simulated samples. Only `entries` randomly chosen entries per
/// tensor are probed unless `opts.max_entries` says otherwise.
pub fn check_model(kind: ModelKind, opts: &GradCheckOptions, entries: usize) -> Result<GradCheckReport> {
    let gen = GeneratorConfig {
        grid: 8,
        corr_len: 2.0,
        seed: 1,
        sim: SimConfig {
            steps: 3,
            ..SimConfig::default()
        },
        ..GeneratorConfig::default()
    };
    let ds = Dataset::generate(2, &gen)?;
    let prep = normalize_dataset(&ds, SplitSizes { train: 2, val: 0, test: 0 }, 2)?;
    let term = PhysicsTerm::new(gen.sim.clone(), prep.stats.clone())?;
    let model = ModelConfig {
        kind,
        grid: 8,
        steps: 3,
        out_channels: 2,
        ..ModelConfig::default()
    };
    let params = init_weights(&model, 3)?;
    let names: Vec<String> = params.names().map(str::to_string).collect();
    let (x, y) = prep.train.batch(&[0, 1])?;
    let perms: Vec<_> = prep.train.perms.iter().collect();
    let f = |tape: &mut Tape, vars: &[Var]| {
        let bound = BoundParams::from_vars(&names, vars);
        let xv = tape.constant(x.clone());
        let yv = tape.constant(y.clone());
        let pred = forward(tape, &bound, &model, xv, Phase::Train { seed: 7 })?;
        let d = data_loss(tape, pred, yv)?;
        let p = term.loss(tape, pred, &perms)?;
        total_loss(tape, d, p, 0.3)
    };
    let opts = GradCheckOptions {
        max_entries: opts.max_entries.or(Some(entries)),
        ..opts.clone()
    };
    grad_check(f, params.entries(), &opts)
}

/// Every primitive (all entries) followed by both full models.
pub fn gradcheck_suite(opts: &GradCheckOptions, model_entries: usize) -> Result<Vec<SuiteCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut out = Vec::new();
    for (name, shapes, build) in primitive_cases() {
        let params: Vec<(String, Tensor)> = shapes
            .iter()
            .enumerate()
            .map(|(i, s)| (format!("{name}.{i}"), random_tensor(s, &mut rng)))
            .collect();
        out.push(SuiteCase {
            name: name.to_string(),
            report: grad_check(build, &params, opts)?,
        });
    }
    for kind in [ModelKind::Segnet, ModelKind::SegnetConvlstm] {
        out.push(SuiteCase {
            name: kind.to_string(),
            report: check_model(kind, opts, model_entries)?,
        });
    }
    Ok(out)
}
