use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, ModelKind};
use super::convlstm::ConvLstmCell;
use super::params::{trunk_layers, BoundParams};
use crate::engine::{Tape, Var};
use crate::error::{Error, Result};

/// Training phase enables seeded dropout; evaluation disables it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Train { seed: u64 },
    Eval,
}

struct Dropout {
    rate: f64,
    rng: Option<ChaCha8Rng>,
}

impl Dropout {
    fn new(cfg: &ModelConfig, phase: Phase) -> Self {
        let rng = match phase {
            Phase::Train { seed } if cfg.dropout > 0.0 => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };
        Self {
            rate: cfg.dropout,
            rng,
        }
    }

    fn apply(&mut self, tape: &mut Tape, x: Var) -> Result<Var> {
        match self.rng.as_mut() {
            Some(rng) => tape.dropout(x, self.rate, rng),
            None => Ok(x),
        }
    }
}

fn check_input(tape: &Tape, cfg: &ModelConfig, x: Var) -> Result<()> {
    cfg.validate()?;
    let s = tape.shape(x);
    if s.len() != 4 || s[1] != 1 || s[2] != cfg.grid || s[3] != cfg.grid {
        return Err(Error::dim(format!(
            "model expects input [N, 1, {g}, {g}], got {s:?}",
            g = cfg.grid
        )));
    }
    Ok(())
}

fn conv_relu(tape: &mut Tape, p: &BoundParams, name: &str, x: Var, pad: usize) -> Result<Var> {
    let w = p.get(&format!("{name}.weight"))?;
    let b = p.get(&format!("{name}.bias"))?;
    let y = tape.conv2d(x, w, Some(b), pad)?;
    Ok(tape.relu(y))
}

fn trunk(tape: &mut Tape, p: &BoundParams, cfg: &ModelConfig, x: Var, drop: &mut Dropout) -> Result<Var> {
    let layers = trunk_layers(cfg);
    let pad = cfg.pad();
    let (enc, dec) = layers.split_at(7);
    let mut h = x;
    let mut maps = Vec::with_capacity(3);
    for stage in [&enc[0..2], &enc[2..4], &enc[4..7]] {
        for (name, _, _) in stage {
            h = conv_relu(tape, p, name, h, pad)?;
        }
        let (pooled, map) = tape.maxpool2x2(h)?;
        h = pooled;
        maps.push(map);
    }
    h = drop.apply(tape, h)?;
    for (stage, map) in [&dec[0..3], &dec[3..5], &dec[5..7]].into_iter().zip(maps.iter().rev()) {
        h = tape.max_unpool2x2(h, map)?;
        for (name, _, _) in stage {
            h = conv_relu(tape, p, name, h, pad)?;
        }
    }
    drop.apply(tape, h)
}

/// Decoded full-resolution features `[N, widths[0], H, W]` shared by both models.
pub fn trunk_forward(tape: &mut Tape, params: &BoundParams, cfg: &ModelConfig, x: Var, phase: Phase) -> Result<Var> {
    check_input(tape, cfg, x)?;
    let mut drop = Dropout::new(cfg, phase);
    trunk(tape, params, cfg, x, &mut drop)
}

/// SegNet: trunk followed by a 1×1 head emitting `T * C` channels, read as
/// `[N, T, C, H, W]`.
pub fn segnet_forward(tape: &mut Tape, params: &BoundParams, cfg: &ModelConfig, x: Var, phase: Phase) -> Result<Var> {
    check_input(tape, cfg, x)?;
    let mut drop = Dropout::new(cfg, phase);
    let feat = trunk(tape, params, cfg, x, &mut drop)?;
    let y = tape.conv2d(feat, params.get("head.weight")?, Some(params.get("head.bias")?), 0)?;
    let n = tape.shape(x)[0];
    tape.reshape(y, vec![n, cfg.steps, cfg.out_channels, cfg.grid, cfg.grid])
}

/// SegNet-ConvLSTM: the trunk features are the input of every ConvLSTM step
/// (zero initial state) and each hidden state passes through a shared 1×1 head.
pub fn segnet_convlstm_forward(
    tape: &mut Tape,
    params: &BoundParams,
    cfg: &ModelConfig,
    x: Var,
    phase: Phase,
) -> Result<Var> {
    check_input(tape, cfg, x)?;
    let mut drop = Dropout::new(cfg, phase);
    let feat = trunk(tape, params, cfg, x, &mut drop)?;
    let cell = ConvLstmCell::from_params(tape, params, "lstm")?;
    let fused = cell.fuse(tape)?;
    // The input is identical at every step, so its gate contribution is shared.
    let gx = fused.input_gates(tape, feat)?;
    let (hw, hb) = (params.get("head.weight")?, params.get("head.bias")?);
    let n = tape.shape(x)[0];
    let mut state: Option<(Var, Var)> = None;
    let mut frames = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let step = fused.advance(tape, gx, state.map(|s| s.0), state.map(|s| s.1))?;
        state = Some((step.h, step.c));
        let y = tape.conv2d(step.h, hw, Some(hb), 0)?;
        frames.push(tape.reshape(y, vec![n, 1, cfg.out_channels, cfg.grid, cfg.grid])?);
    }
    tape.concat(&frames, 1)
}

pub fn forward(tape: &mut Tape, params: &BoundParams, cfg: &ModelConfig, x: Var, phase: Phase) -> Result<Var> {
    match cfg.kind {
        ModelKind::Segnet => segnet_forward(tape, params, cfg, x, phase),
        ModelKind::SegnetConvlstm => segnet_convlstm_forward(tape, params, cfg, x, phase),
    }
}
