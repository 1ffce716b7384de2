//! Monte-Carlo moment maps of simulator and surrogate saturation ensembles.

use serde::{Deserialize, Serialize};

use crate::engine::Tensor;
use crate::error::{Error, Result};
use crate::nets::{ModelConfig, ModelParams, Phase};
use crate::simulator::{simulate_ensemble, PermSampler, SimConfig};
use crate::training::{predict, NormStats};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatsSource {
    Simulator,
    Surrogate,
}

/// Per-cell sample mean and unbiased variance of saturation frames `[T, H, W]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub source: StatsSource,
    pub n: usize,
    pub steps: usize,
    pub h: usize,
    pub w: usize,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl EnsembleStats {
    pub fn frame_len(&self) -> usize {
        self.h * self.w
    }

    pub fn mean_frame(&self, t: usize) -> &[f64] {
        &self.mean[t * self.frame_len()..(t + 1) * self.frame_len()]
    }

    pub fn var_frame(&self, t: usize) -> &[f64] {
        &self.var[t * self.frame_len()..(t + 1) * self.frame_len()]
    }
}

/// Two-pass moments of keyed members. Members are reduced in key order, so
/// the result does not depend on the order they are passed in.
pub fn ensemble_stats(
    source: StatsSource,
    members: &[(u64, &[f64])],
    steps: usize,
    h: usize,
    w: usize,
) -> Result<EnsembleStats> {
    let n = members.len();
    if n < 2 {
        return Err(Error::config(format!("ensemble of {n} members has no sample variance")));
    }
    let len = steps * h * w;
    if let Some((k, m)) = members.iter().find(|(_, m)| m.len() != len) {
        return Err(Error::dim(format!("member {k} has {} values, expected {len}", m.len())));
    }
    let mut sorted: Vec<&(u64, &[f64])> = members.iter().collect();
    sorted.sort_by_key(|(k, _)| *k);
    if sorted.windows(2).any(|p| p[0].0 == p[1].0) {
        return Err(Error::config("ensemble seeds must be distinct"));
    }
    // Shifted two-pass: deviations are taken from the first member, so
    // identical members give an exact mean and exactly zero variance.
    let reference = sorted[0].1;
    let mut shift = vec![0.0; len];
    for (_, m) in &sorted {
        for ((acc, v), r) in shift.iter_mut().zip(m.iter()).zip(reference) {
            *acc += v - r;
        }
    }
    shift.iter_mut().for_each(|v| *v /= n as f64);
    let mut var = vec![0.0; len];
    for (_, m) in &sorted {
        for (((acc, v), r), d) in var.iter_mut().zip(m.iter()).zip(reference).zip(&shift) {
            let e = (v - r) - d;
            *acc += e * e;
        }
    }
    var.iter_mut().for_each(|v| *v /= (n - 1) as f64);
    let mean = reference.iter().zip(&shift).map(|(r, d)| r + d).collect();
    Ok(EnsembleStats {
        source,
        n,
        steps,
        h,
        w,
        mean,
        var,
    })
}

/// Forward model pushed through the ensemble.
#[derive(Clone, Copy, Debug)]
pub enum McsModel<'a> {
    Simulator(&'a SimConfig),
    Surrogate {
        params: &'a ModelParams,
        model: &'a ModelConfig,
        stats: &'a NormStats,
        batch: usize,
    },
}

impl McsModel<'_> {
    pub fn source(&self) -> StatsSource {
        match self {
            McsModel::Simulator(_) => StatsSource::Simulator,
            McsModel::Surrogate { .. } => StatsSource::Surrogate,
        }
    }
}

/// Saturation frames `[T, H, W]` of each realization in `seeds`, in order.
pub fn ensemble_saturation(model: McsModel<'_>, sampler: &PermSampler, seeds: &[u64]) -> Result<Vec<Vec<f64>>> {
    match model {
        McsModel::Simulator(cfg) => Ok(simulate_ensemble(sampler, cfg, seeds)?
            .into_iter()
            .map(|(_, out)| out.saturation)
            .collect()),
        McsModel::Surrogate {
            params,
            model,
            stats,
            batch,
        } => {
            let (g, t, c) = (model.grid, model.steps, model.out_channels);
            let hw = g * g;
            let mut out = Vec::with_capacity(seeds.len());
            for chunk in seeds.chunks(batch.max(1)) {
                let mut x = Vec::with_capacity(chunk.len() * hw);
                for &seed in chunk {
                    let k = sampler.sample(seed);
                    if (k.h, k.w) != (g, g) {
                        return Err(Error::dim(format!("sampler is {}x{}, model {g}x{g}", k.h, k.w)));
                    }
                    x.extend(stats.normalize_perm(&k.k));
                }
                let y = predict(params, model, Tensor::new([chunk.len(), 1, g, g], x)?, Phase::Eval)?;
                for i in 0..chunk.len() {
                    let mut frames = Vec::with_capacity(t * hw);
                    for step in 0..t {
                        let at = ((i * t + step) * c) * hw;
                        frames.extend_from_slice(&y.data()[at..at + hw]);
                    }
                    out.push(frames);
                }
            }
            Ok(out)
        }
    }
}

/// Moment maps of the saturation response over the realizations in `seeds`.
pub fn mcs_run(model: McsModel<'_>, sampler: &PermSampler, seeds: &[u64], steps: usize) -> Result<EnsembleStats> {
    let frames = ensemble_saturation(model, sampler, seeds)?;
    let members: Vec<(u64, &[f64])> = seeds.iter().copied().zip(frames.iter().map(Vec::as_slice)).collect();
    let (h, w) = sampler.dims();
    ensemble_stats(model.source(), &members, steps, h, w)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapError {
    /// `‖b - a‖₂ / ‖a‖₂` with `a` the reference.
    pub rel_l2: f64,
    pub max_abs: f64,
}

fn map_error(a: &[f64], b: &[f64]) -> MapError {
    let (mut diff, mut norm, mut max_abs) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        diff += (y - x) * (y - x);
        norm += x * x;
        max_abs = max_abs.max((y - x).abs());
    }
    let rel_l2 = if diff == 0.0 {
        0.0
    } else if norm == 0.0 {
        f64::INFINITY
    } else {
        (diff / norm).sqrt()
    };
    MapError { rel_l2, max_abs }
}

/// Discrepancy of `b` against the reference `a`, at one step and over all steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsComparison {
    pub step: usize,
    pub mean: MapError,
    pub var: MapError,
    pub mean_all: MapError,
    pub var_all: MapError,
}

pub fn compare_stats(a: &EnsembleStats, b: &EnsembleStats, step: usize) -> Result<StatsComparison> {
    if (a.steps, a.h, a.w) != (b.steps, b.h, b.w) || a.mean.len() != b.mean.len() || a.var.len() != b.var.len() {
        return Err(Error::dim(format!(
            "stats of {}x{}x{} and {}x{}x{} cannot be compared",
            a.steps, a.h, a.w, b.steps, b.h, b.w
        )));
    }
    if step >= a.steps {
        return Err(Error::dim(format!("step {step} outside {} frames", a.steps)));
    }
    Ok(StatsComparison {
        step,
        mean: map_error(a.mean_frame(step), b.mean_frame(step)),
        var: map_error(a.var_frame(step), b.var_frame(step)),
        mean_all: map_error(&a.mean, &b.mean),
        var_all: map_error(&a.var, &b.var),
    })
}
