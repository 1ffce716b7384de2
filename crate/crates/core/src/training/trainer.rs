use std::fs;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{data_loss, total_loss, PhysicsTerm};
use super::normalize::{Prepared, SplitData, SplitSizes};
use super::report::{EpochLosses, EvalLosses, LossReport};
use crate::engine::{AdamConfig, AdamState, Tape, Tensor};
use crate::error::{Error, Result};
use crate::nets::{forward, init_weights, ModelConfig, ModelKind, ModelParams, Phase};
use crate::simulator::PermField;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch: usize,
    /// Weight of the physics term; 0 trains on data alone.
    pub lambda: f64,
    pub split: SplitSizes,
    /// Seeds weight initialization, batch order and dropout masks.
    pub seed: u64,
    /// Where a non-finite batch is dumped before training aborts.
    pub dump_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            lr: 3e-2,
            weight_decay: 1e-4,
            epochs: 150,
            batch: 8,
            lambda: 0.0,
            split: SplitSizes {
                train: 300,
                val: 50,
                test: 50,
            },
            seed: 0,
            dump_dir: None,
        }
    }
}

impl TrainConfig {
    /// 16×16 grid, 8 frames, 50 epochs. The learning rate is lowered to 1e-3:
    /// without batch normalization 3e-2 drives the SegNet into dead ReLUs.
    pub fn desk(kind: ModelKind, out_channels: usize) -> Self {
        Self {
            model: ModelConfig {
                kind,
                grid: 16,
                steps: 8,
                out_channels,
                ..ModelConfig::default()
            },
            epochs: 50,
            lr: 1e-3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(format!("λ must be >= 0, got {}", self.lambda)));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("learning rate and weight decay must be finite and >= 0"));
        }
        if self.batch == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if self.lambda > 0.0 && self.model.out_channels != 2 {
            return Err(Error::config("the physics term needs saturation and pressure outputs (2 channels)"));
        }
        Ok(())
    }
}

fn check_split(model: &ModelConfig, split: &SplitData) -> Result<()> {
    if (split.h, split.w, split.steps, split.channels) != (model.grid, model.grid, model.steps, model.out_channels) {
        return Err(Error::dim(format!(
            "data is {}x{}, {} frames, {} channels; model expects {g}x{g}, {} frames, {} channels",
            split.h,
            split.w,
            split.steps,
            split.channels,
            model.steps,
            model.out_channels,
            g = model.grid
        )));
    }
    Ok(())
}

/// Inference on a batch of normalized inputs `[N, 1, H, W]`.
pub fn predict(params: &ModelParams, model: &ModelConfig, x: Tensor, phase: Phase) -> Result<Tensor> {
    let mut tape = Tape::new();
    let bound = params.bind_frozen(&mut tape);
    let x = tape.constant(x);
    let y = forward(&mut tape, &bound, model, x, phase)?;
    Ok(tape.value(y).clone())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalOptions {
    pub batch: usize,
    /// Keeps dropout active with masks seeded from this value.
    pub dropout_seed: Option<u64>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            batch: 8,
            dropout_seed: None,
        }
    }
}

/// Data loss (and physics loss when `physics` is given) over a whole split,
/// as means over all elements.
pub fn evaluate(
    params: &ModelParams,
    model: &ModelConfig,
    split: &SplitData,
    physics: Option<&PhysicsTerm>,
    opts: EvalOptions,
) -> Result<EvalLosses> {
    check_split(model, split)?;
    let members: Vec<usize> = (0..split.len()).collect();
    let (mut data, mut phys) = (0.0, 0.0);
    for (b, chunk) in members.chunks(opts.batch.max(1)).enumerate() {
        let mut tape = Tape::new();
        let bound = params.bind_frozen(&mut tape);
        let (x, y) = split.batch(chunk)?;
        let (x, y) = (tape.constant(x), tape.constant(y));
        let phase = match opts.dropout_seed {
            Some(seed) => Phase::Train {
                seed: seed.wrapping_add(b as u64),
            },
            None => Phase::Eval,
        };
        let pred = forward(&mut tape, &bound, model, x, phase)?;
        let dl = data_loss(&mut tape, pred, y)?;
        data += tape.data(dl)[0] * chunk.len() as f64;
        if let Some(term) = physics {
            let perms: Vec<&PermField> = chunk.iter().map(|&m| &split.perms[m]).collect();
            let pl = term.loss(&mut tape, pred, &perms)?;
            phys += tape.data(pl)[0] * chunk.len() as f64;
        }
    }
    let n = split.len().max(1) as f64;
    Ok(EvalLosses {
        samples: split.len(),
        data: data / n,
        physics: physics.map(|_| phys / n),
    })
}

#[derive(Serialize)]
struct BatchDump<'a> {
    stage: &'a str,
    epoch: usize,
    batch: usize,
    members: Vec<usize>,
    data_loss: f64,
    physics_loss: Option<f64>,
    inputs: &'a [f64],
    targets: &'a [f64],
}

fn abort(cfg: &TrainConfig, dump: BatchDump<'_>) -> Error {
    let mut msg = format!(
        "non-finite {} in epoch {} batch {} (samples {:?})",
        dump.stage, dump.epoch, dump.batch, dump.members
    );
    if let Some(dir) = &cfg.dump_dir {
        let path = dir.join("nonfinite_batch.json");
        let json = serde_json::to_vec(&dump).expect("dump serializes");
        match fs::create_dir_all(dir).and_then(|_| fs::write(&path, json)) {
            Ok(()) => msg.push_str(&format!("; batch dumped to {}", path.display())),
            Err(e) => msg.push_str(&format!("; dump to {} failed: {e}", path.display())),
        }
    }
    Error::NonFinite(msg)
}

/// Mini-batch Adam on `L_data + λ L_physics`; returns the weights of the
/// epoch with the lowest validation data loss (training loss when there is
/// no validation split). The physics term is evaluated only when `λ > 0`.
pub fn train(data: &Prepared, physics: Option<&PhysicsTerm>, cfg: &TrainConfig) -> Result<(ModelParams, LossReport)> {
    cfg.validate()?;
    let model = &cfg.model;
    for split in [&data.train, &data.val, &data.test] {
        check_split(model, split)?;
    }
    if data.train.is_empty() {
        return Err(Error::config("training split is empty"));
    }
    let physics = if cfg.lambda > 0.0 {
        Some(physics.ok_or_else(|| Error::config("λ > 0 requires the simulation settings of the data"))?)
    } else {
        None
    };

    let mut params = init_weights(model, cfg.seed)?;
    let mut adam = AdamState::new(params.iter().map(|(_, t)| t.numel()));
    let adam_cfg = AdamConfig {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..AdamConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: (f64, usize, ModelParams) = (f64::INFINITY, 0, params.clone());
    let eval_opts = EvalOptions {
        batch: cfg.batch,
        dropout_seed: None,
    };

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut sum_data, mut sum_phys) = (0.0, 0.0);
        for (b, chunk) in order.chunks(cfg.batch).enumerate() {
            let dropout_seed = rng.next_u64();
            let (x, y) = data.train.batch(chunk)?;
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let (xv, yv) = (tape.constant(x.clone()), tape.constant(y.clone()));
            let pred = forward(&mut tape, &bound, model, xv, Phase::Train { seed: dropout_seed })?;
            let dl = data_loss(&mut tape, pred, yv)?;
            let (loss, pl) = match physics {
                Some(term) => {
                    let perms: Vec<&PermField> = chunk.iter().map(|&m| &data.train.perms[m]).collect();
                    let pl = term.loss(&mut tape, pred, &perms)?;
                    (total_loss(&mut tape, dl, pl, cfg.lambda)?, Some(pl))
                }
                None => (dl, None),
            };
            let dv = tape.data(dl)[0];
            let pv = pl.map(|v| tape.data(v)[0]);
            let dump = |stage| BatchDump {
                stage,
                epoch,
                batch: b,
                members: chunk.iter().map(|&m| data.train.indices[m]).collect(),
                data_loss: dv,
                physics_loss: pv,
                inputs: x.data(),
                targets: y.data(),
            };
            if !tape.data(loss)[0].is_finite() {
                return Err(abort(cfg, dump("loss")));
            }
            tape.backward(loss)?;
            let grads = params.collect_grads(&tape, &bound);
            if grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(abort(cfg, dump("gradient")));
            }
            adam.step(
                params.tensors_mut().zip(&grads).map(|(t, g)| (t.data_mut(), g.as_slice())),
                &adam_cfg,
            )?;
            if !params.all_finite() {
                return Err(abort(cfg, dump("parameter update")));
            }
            sum_data += dv * chunk.len() as f64;
            sum_phys += pv.unwrap_or(0.0) * chunk.len() as f64;
        }
        let n = data.train.len() as f64;
        let val = evaluate(&params, model, &data.val, physics, eval_opts)?;
        let train_data = sum_data / n;
        let metric = if data.val.is_empty() { train_data } else { val.data };
        if metric < best.0 {
            best = (metric, epoch, params.clone());
        }
        history.push(EpochLosses {
            epoch,
            train_data,
            train_physics: physics.map(|_| sum_phys / n),
            val_data: val.data,
            val_physics: val.physics,
        });
    }

    let (_, best_epoch, params) = best;
    let report = LossReport {
        model: model.kind,
        seed: cfg.seed,
        lambda: cfg.lambda,
        parameters: params.count(),
        epochs: history,
        best_epoch,
        train: evaluate(&params, model, &data.train, physics, eval_opts)?,
        val: evaluate(&params, model, &data.val, physics, eval_opts)?,
        test: evaluate(&params, model, &data.test, physics, eval_opts)?,
    };
    report.validate()?;
    Ok((params, report))
}
