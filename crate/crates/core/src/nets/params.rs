use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, ModelKind};
use crate::engine::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Ordered, uniquely named parameter tensors of one model.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelParams {
    entries: Vec<(String, Tensor)>,
}

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.iter().any(|(n, _)| *n == name) {
            return Err(Error::Contract(format!("duplicate parameter name `{name}`")));
        }
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<(String, Tensor)> {
        self.entries
    }

    pub fn from_entries(entries: Vec<(String, Tensor)>) -> Result<Self> {
        let mut p = Self::new();
        for (n, t) in entries {
            p.push(n, t)?;
        }
        Ok(p)
    }

    pub fn count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Scalar count per tensor, in parameter order.
    pub fn breakdown(&self) -> Vec<(String, usize)> {
        self.entries.iter().map(|(n, t)| (n.clone(), t.numel())).collect()
    }

    /// Records every tensor as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        let mut vars = Vec::with_capacity(self.entries.len());
        let mut index = HashMap::with_capacity(self.entries.len());
        for (i, (n, t)) in self.entries.iter().enumerate() {
            let mut leaf = t.clone();
            leaf.set_requires_grad(true);
            leaf.zero_grad();
            vars.push(tape.leaf(leaf));
            index.insert(n.clone(), i);
        }
        BoundParams { vars, index }
    }

    /// Records every tensor as a constant (inference only).
    pub fn bind_frozen(&self, tape: &mut Tape) -> BoundParams {
        let vars = self.entries.iter().map(|(_, t)| tape.constant(t.clone())).collect();
        let index = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, (n, _))| (n.clone(), i))
            .collect();
        BoundParams { vars, index }
    }

    /// Copies the gradients accumulated on `tape` into fresh per-tensor vectors.
    pub fn collect_grads(&self, tape: &Tape, bound: &BoundParams) -> Vec<Vec<f64>> {
        bound
            .vars
            .iter()
            .zip(&self.entries)
            .map(|(&v, (_, t))| {
                tape.grad(v)
                    .map(<[f64]>::to_vec)
                    .unwrap_or_else(|| vec![0.0; t.numel()])
            })
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.is_finite())
    }
}

/// Tape handles of a bound [`ModelParams`].
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: Vec<Var>,
    index: HashMap<String, usize>,
}

impl BoundParams {
    pub fn from_vars(names: &[String], vars: &[Var]) -> Self {
        Self {
            vars: vars.to_vec(),
            index: names.iter().cloned().enumerate().map(|(i, n)| (n, i)).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| Error::Contract(format!("missing parameter `{name}`")))
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

pub fn param_count(params: &ModelParams) -> usize {
    params.count()
}

/// `(name, in channels, out channels)` of the 14 trunk convolutions.
pub(crate) fn trunk_layers(cfg: &ModelConfig) -> Vec<(&'static str, usize, usize)> {
    let [a, b, c] = cfg.widths;
    vec![
        ("enc1.conv1", 1, a),
        ("enc1.conv2", a, a),
        ("enc2.conv1", a, b),
        ("enc2.conv2", b, b),
        ("enc3.conv1", b, c),
        ("enc3.conv2", c, c),
        ("enc3.conv3", c, c),
        ("dec3.conv1", c, c),
        ("dec3.conv2", c, c),
        ("dec3.conv3", c, b),
        ("dec2.conv1", b, b),
        ("dec2.conv2", b, a),
        ("dec1.conv1", a, a),
        ("dec1.conv2", a, a),
    ]
}

pub(crate) const LSTM_GATES: [&str; 4] = ["i", "f", "c", "o"];
pub(crate) const LSTM_PEEPHOLES: [&str; 3] = ["i", "f", "o"];

fn he_uniform(shape: Vec<usize>, fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let a = (6.0 / fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.random_range(-a..a))
}

/// Fan-in scaled uniform kernels (variance `2 / fan_in`), zero biases and
/// peepholes, forget-gate bias `+1`. The trunk is drawn first, so both model
/// kinds share identical trunk weights for equal seeds.
pub fn init_weights(cfg: &ModelConfig, seed: u64) -> Result<ModelParams> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = cfg.kernel;
    let mut p = ModelParams::new();
    for (name, cin, cout) in trunk_layers(cfg) {
        p.push(format!("{name}.weight"), he_uniform(vec![cout, cin, k, k], cin * k * k, &mut rng))?;
        p.push(format!("{name}.bias"), Tensor::zeros(vec![cout]))?;
    }
    let feat = cfg.widths[0];
    let head_in = match cfg.kind {
        ModelKind::Segnet => feat,
        ModelKind::SegnetConvlstm => {
            let hc = cfg.hidden;
            for g in LSTM_GATES {
                p.push(format!("lstm.w_x{g}"), he_uniform(vec![hc, feat, k, k], feat * k * k, &mut rng))?;
            }
            for g in LSTM_GATES {
                p.push(format!("lstm.w_h{g}"), he_uniform(vec![hc, hc, k, k], hc * k * k, &mut rng))?;
            }
            for g in LSTM_PEEPHOLES {
                p.push(format!("lstm.w_c{g}"), Tensor::zeros(vec![hc, cfg.grid, cfg.grid]))?;
            }
            for g in LSTM_GATES {
                let bias = if g == "f" { 1.0 } else { 0.0 };
                p.push(format!("lstm.b_{g}"), Tensor::full(vec![hc], bias))?;
            }
            hc
        }
    };
    let head_out = match cfg.kind {
        ModelKind::Segnet => cfg.steps * cfg.out_channels,
        ModelKind::SegnetConvlstm => cfg.out_channels,
    };
    p.push("head.weight", he_uniform(vec![head_out, head_in, 1, 1], head_in, &mut rng))?;
    p.push("head.bias", Tensor::zeros(vec![head_out]))?;
    Ok(p)
}
