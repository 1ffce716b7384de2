use serde::{Deserialize, Serialize};

use crate::engine::Tensor;
use crate::error::{Error, Result};
use crate::io::{Dataset, Sample};
use crate::simulator::PermField;

/// Training-split statistics: standardized log-permeability inputs and
/// min-max scaled pressure targets. Saturation is used as is.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub log_perm_mean: f64,
    pub log_perm_std: f64,
    pub pressure_min: f64,
    pub pressure_max: f64,
}

impl NormStats {
    pub fn fit<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> Result<Self> {
        let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
        let (mut pmin, mut pmax) = (f64::INFINITY, f64::NEG_INFINITY);
        let logs: Vec<Vec<f64>> = samples
            .into_iter()
            .map(|s| {
                for &p in &s.pressure {
                    pmin = pmin.min(p as f64);
                    pmax = pmax.max(p as f64);
                }
                s.perm.iter().map(|&k| (k as f64).ln()).collect()
            })
            .collect();
        for v in logs.iter().flatten() {
            n += 1;
            sum += v;
        }
        if n == 0 {
            return Err(Error::config("normalization needs at least one training sample"));
        }
        let mean = sum / n as f64;
        for v in logs.iter().flatten() {
            sq += (v - mean) * (v - mean);
        }
        let std = (sq / n as f64).sqrt();
        if !(std > 0.0 && std.is_finite()) {
            return Err(Error::config("log-permeability has zero variance over the training split"));
        }
        if !(pmax > pmin && (pmax - pmin).is_finite()) {
            return Err(Error::config(format!(
                "pressure range [{pmin}, {pmax}] is degenerate over the training split"
            )));
        }
        Ok(Self {
            log_perm_mean: mean,
            log_perm_std: std,
            pressure_min: pmin,
            pressure_max: pmax,
        })
    }

    pub fn normalize_perm(&self, k: &[f64]) -> Vec<f64> {
        k.iter().map(|&v| (v.ln() - self.log_perm_mean) / self.log_perm_std).collect()
    }

    pub fn denormalize_perm(&self, z: &[f64]) -> Vec<f64> {
        z.iter().map(|&v| (v * self.log_perm_std + self.log_perm_mean).exp()).collect()
    }

    pub fn pressure_range(&self) -> f64 {
        self.pressure_max - self.pressure_min
    }

    pub fn normalize_pressure(&self, p: &[f64]) -> Vec<f64> {
        p.iter().map(|&v| (v - self.pressure_min) / self.pressure_range()).collect()
    }

    pub fn denormalize_pressure(&self, p: &[f64]) -> Vec<f64> {
        p.iter().map(|&v| v * self.pressure_range() + self.pressure_min).collect()
    }
}

/// Model-ready tensors of one split. Inputs are `[N, 1, H, W]`, targets
/// `[N, T, C, H, W]` with channel 0 saturation and channel 1 (if present)
/// normalized pressure.
#[derive(Clone, Debug)]
pub struct SplitData {
    /// Dataset indices of the members.
    pub indices: Vec<usize>,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub perms: Vec<PermField>,
    pub h: usize,
    pub w: usize,
    pub steps: usize,
    pub channels: usize,
}

impl SplitData {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    fn input_len(&self) -> usize {
        self.h * self.w
    }

    fn target_len(&self) -> usize {
        self.steps * self.channels * self.h * self.w
    }

    /// Input and target tensors for the given member positions.
    pub fn batch(&self, members: &[usize]) -> Result<(Tensor, Tensor)> {
        let (il, tl) = (self.input_len(), self.target_len());
        let mut x = Vec::with_capacity(members.len() * il);
        let mut y = Vec::with_capacity(members.len() * tl);
        for &m in members {
            x.extend_from_slice(&self.inputs[m * il..(m + 1) * il]);
            y.extend_from_slice(&self.targets[m * tl..(m + 1) * tl]);
        }
        let n = members.len();
        Ok((
            Tensor::new([n, 1, self.h, self.w], x)?,
            Tensor::new([n, self.steps, self.channels, self.h, self.w], y)?,
        ))
    }
}

/// Contiguous `train / val / test` split sizes, taken in dataset order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn ranges(&self, n: usize) -> Result<[std::ops::Range<usize>; 3]> {
        let total = self.train + self.val + self.test;
        if total > n {
            return Err(Error::config(format!(
                "splits {}/{}/{} need {total} samples, dataset has {n}",
                self.train, self.val, self.test
            )));
        }
        if self.train == 0 {
            return Err(Error::config("training split is empty"));
        }
        let a = self.train;
        let b = a + self.val;
        Ok([0..a, a..b, b..total])
    }
}

#[derive(Clone, Debug)]
pub struct Prepared {
    pub stats: NormStats,
    pub train: SplitData,
    pub val: SplitData,
    pub test: SplitData,
}

impl Prepared {
    pub fn split(&self, name: Split) -> &SplitData {
        match name {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::config(format!("unknown split `{other}`"))),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

fn build_split(ds: &Dataset, range: std::ops::Range<usize>, stats: &NormStats, channels: usize) -> Result<SplitData> {
    let (h, w, t) = (ds.h, ds.w, ds.steps);
    let hw = h * w;
    let mut out = SplitData {
        indices: range.clone().collect(),
        inputs: Vec::with_capacity(range.len() * hw),
        targets: Vec::with_capacity(range.len() * t * channels * hw),
        perms: Vec::with_capacity(range.len()),
        h,
        w,
        steps: t,
        channels,
    };
    for i in range {
        let s = &ds.samples[i];
        let k: Vec<f64> = s.perm.iter().map(|&v| v as f64).collect();
        out.inputs.extend(stats.normalize_perm(&k));
        out.perms.push(PermField::new(h, w, k)?);
        for step in 0..t {
            let frame = step * hw..(step + 1) * hw;
            out.targets.extend(s.saturation[frame.clone()].iter().map(|&v| v as f64));
            if channels == 2 {
                let p: Vec<f64> = s.pressure[frame].iter().map(|&v| v as f64).collect();
                out.targets.extend(stats.normalize_pressure(&p));
            }
        }
    }
    Ok(out)
}

/// Normalizes `ds` with statistics fitted on the training split only.
pub fn normalize_dataset(ds: &Dataset, sizes: SplitSizes, channels: usize) -> Result<Prepared> {
    if !(1..=2).contains(&channels) {
        return Err(Error::config(format!("targets have 1 or 2 channels, got {channels}")));
    }
    let [tr, va, te] = sizes.ranges(ds.samples.len())?;
    let stats = NormStats::fit(&ds.samples[tr.clone()])?;
    Ok(Prepared {
        train: build_split(ds, tr, &stats, channels)?,
        val: build_split(ds, va, &stats, channels)?,
        test: build_split(ds, te, &stats, channels)?,
        stats,
    })
}

/// Splits `ds` and normalizes it with previously fitted statistics.
pub fn normalize_with(ds: &Dataset, sizes: SplitSizes, channels: usize, stats: &NormStats) -> Result<Prepared> {
    if !(1..=2).contains(&channels) {
        return Err(Error::config(format!("targets have 1 or 2 channels, got {channels}")));
    }
    let [tr, va, te] = sizes.ranges(ds.samples.len())?;
    Ok(Prepared {
        train: build_split(ds, tr, stats, channels)?,
        val: build_split(ds, va, stats, channels)?,
        test: build_split(ds, te, stats, channels)?,
        stats: stats.clone(),
    })
}
