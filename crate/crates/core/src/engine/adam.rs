use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Coefficient of the L2 penalty, added to the gradient as `weight_decay * p`.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// First and second moment buffers, one per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(sizes: impl IntoIterator<Item = usize>) -> Self {
        let (m, v) = sizes
            .into_iter()
            .map(|n| (vec![0.0; n], vec![0.0; n]))
            .unzip();
        Self { step: 0, m, v }
    }

    pub fn for_tensors(params: &[Tensor]) -> Self {
        Self::new(params.iter().map(Tensor::numel))
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.v
    }

    /// One bias-corrected Adam update over `(values, gradient)` pairs, in the
    /// same order the state was created with.
    pub fn step<'a>(
        &mut self,
        pairs: impl IntoIterator<Item = (&'a mut [f64], &'a [f64])>,
        cfg: &AdamConfig,
    ) -> Result<()> {
        if !(cfg.lr >= 0.0) || !cfg.lr.is_finite() {
            return Err(Error::config(format!("learning rate {} must be >= 0", cfg.lr)));
        }
        let pairs: Vec<_> = pairs.into_iter().collect();
        if pairs.len() != self.m.len() {
            return Err(Error::dim(format!(
                "optimizer tracks {} tensors, got {}",
                self.m.len(),
                pairs.len()
            )));
        }
        for (k, (p, g)) in pairs.iter().enumerate() {
            if p.len() != self.m[k].len() || g.len() != p.len() {
                return Err(Error::dim(format!(
                    "tensor {k}: {} values, {} gradients, {} moments",
                    p.len(),
                    g.len(),
                    self.m[k].len()
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for (k, (p, g)) in pairs.into_iter().enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                let gi = g[i] + cfg.weight_decay * p[i];
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}

/// Adam update of `params` with explicit gradients, default betas and epsilon.
pub fn adam_step(
    params: &mut [Tensor],
    grads: &[Vec<f64>],
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::dim(format!(
            "{} parameter tensors but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    let cfg = AdamConfig {
        lr,
        weight_decay,
        ..AdamConfig::default()
    };
    state.step(
        params
            .iter_mut()
            .zip(grads)
            .map(|(p, g)| (p.data_mut(), g.as_slice())),
        &cfg,
    )
}
