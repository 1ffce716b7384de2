use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::container::{read_container, sha256_hex, write_container, ContainerHeader};
use crate::error::{Error, Result};
use crate::simulator::{simulate_ensemble, PermSampler, SimConfig};
use crate::training::NormStats;

pub const DATASET_VERSION: u32 = 1;
pub const DATASET_FORMAT: &str = "flowsurrogate-dataset";
pub const CHANNELS: [&str; 3] = ["perm", "saturation", "pressure"];

/// One realization: permeability `[H, W]` (mD), saturation and pressure
/// frames `[T, H, W]` (pressure in bar).
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub perm: Vec<f32>,
    pub saturation: Vec<f32>,
    pub pressure: Vec<f32>,
}

/// How a dataset was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub grid: usize,
    pub corr_len: f64,
    pub log_std: f64,
    /// `ln` of the geometric-mean permeability (mD).
    pub log_mean: f64,
    pub seed: u64,
    pub sim: SimConfig,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            grid: 16,
            corr_len: 4.0,
            log_std: 1.0,
            log_mean: 100f64.ln(),
            seed: 0,
            sim: SimConfig {
                steps: 8,
                ..SimConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub h: usize,
    pub w: usize,
    pub steps: usize,
    pub generator: Option<GeneratorConfig>,
    pub normalization: Option<NormStats>,
    /// Permeability seed of every sample.
    pub seeds: Vec<u64>,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetHeader {
    version: u32,
    format: String,
    h: usize,
    w: usize,
    steps: usize,
    channels: Vec<String>,
    normalization: Option<NormStats>,
    generator: Option<GeneratorConfig>,
    seeds: Vec<u64>,
    n_samples: usize,
    payload_sha256: String,
}

impl ContainerHeader for DatasetHeader {
    fn payload_sha256(&self) -> &str {
        &self.payload_sha256
    }

    fn expected_payload_len(&self) -> u64 {
        self.n_samples as u64 * record_bytes(self.h, self.w, self.steps) as u64
    }
}

/// Bytes per sample: `4 · (H·W + 2·T·H·W)`.
pub fn record_bytes(h: usize, w: usize, steps: usize) -> usize {
    4 * (h * w + 2 * steps * h * w)
}

/// Sample seeds derived from the generator seed.
pub fn sample_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.next_u64()).collect()
}

impl Dataset {
    pub fn empty(h: usize, w: usize, steps: usize) -> Self {
        Self {
            h,
            w,
            steps,
            generator: None,
            normalization: None,
            seeds: Vec::new(),
            samples: Vec::new(),
        }
    }

    /// Simulates `n` realizations drawn with `gen`.
    pub fn generate(n: usize, gen: &GeneratorConfig) -> Result<Self> {
        let sampler = PermSampler::new(gen.grid, gen.grid, gen.corr_len, gen.log_std, gen.log_mean)?;
        let seeds = sample_seeds(gen.seed, n);
        let runs = simulate_ensemble(&sampler, &gen.sim, &seeds)?;
        let to32 = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<f32>>();
        let samples = runs
            .iter()
            .map(|(perm, out)| Sample {
                perm: to32(&perm.k),
                saturation: to32(&out.saturation),
                pressure: to32(&out.pressure),
            })
            .collect();
        Ok(Self {
            h: gen.grid,
            w: gen.grid,
            steps: gen.sim.steps,
            generator: Some(gen.clone()),
            normalization: None,
            seeds,
            samples,
        })
    }

    fn check(&self) -> Result<()> {
        let (hw, t) = (self.h * self.w, self.steps);
        if self.seeds.len() != self.samples.len() {
            return Err(Error::dim(format!(
                "{} seeds for {} samples",
                self.seeds.len(),
                self.samples.len()
            )));
        }
        for (i, s) in self.samples.iter().enumerate() {
            if s.perm.len() != hw || s.saturation.len() != t * hw || s.pressure.len() != t * hw {
                return Err(Error::dim(format!(
                    "sample {i} has {}/{}/{} values, expected {hw}/{}/{}",
                    s.perm.len(),
                    s.saturation.len(),
                    s.pressure.len(),
                    t * hw,
                    t * hw
                )));
            }
        }
        Ok(())
    }

    fn payload(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.samples.len() * record_bytes(self.h, self.w, self.steps));
        for s in &self.samples {
            for v in s.perm.iter().chain(&s.saturation).chain(&s.pressure) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    ds.check()?;
    let payload = ds.payload();
    let header = DatasetHeader {
        version: DATASET_VERSION,
        format: DATASET_FORMAT.into(),
        h: ds.h,
        w: ds.w,
        steps: ds.steps,
        channels: CHANNELS.iter().map(|c| c.to_string()).collect(),
        normalization: ds.normalization.clone(),
        generator: ds.generator.clone(),
        seeds: ds.seeds.clone(),
        n_samples: ds.samples.len(),
        payload_sha256: sha256_hex(&payload),
    };
    write_container(path, &header, &payload)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let (header, payload) = read_container::<DatasetHeader>(path, DATASET_VERSION)?;
    let bad = |detail: String| Error::Header {
        path: path.into(),
        detail,
    };
    if header.format != DATASET_FORMAT {
        return Err(bad(format!("format `{}` is not a dataset", header.format)));
    }
    if header.channels != CHANNELS {
        return Err(bad(format!("unexpected channels {:?}", header.channels)));
    }
    if header.seeds.len() != header.n_samples {
        return Err(bad(format!("{} seeds for {} samples", header.seeds.len(), header.n_samples)));
    }
    let (hw, t) = (header.h * header.w, header.steps);
    let mut values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let mut take = |n: usize| -> Vec<f32> { values.by_ref().take(n).collect() };
    let samples = (0..header.n_samples)
        .map(|_| Sample {
            perm: take(hw),
            saturation: take(t * hw),
            pressure: take(t * hw),
        })
        .collect();
    Ok(Dataset {
        h: header.h,
        w: header.w,
        steps: header.steps,
        generator: header.generator,
        normalization: header.normalization,
        seeds: header.seeds,
        samples,
    })
}

/// Appends `more` to the dataset at `path` (created if missing). The file is
/// rewritten in full; dimensions must agree.
pub fn append_dataset(path: &Path, more: &Dataset) -> Result<()> {
    let mut ds = if path.exists() {
        read_dataset(path)?
    } else {
        Dataset {
            samples: Vec::new(),
            seeds: Vec::new(),
            ..more.clone()
        }
    };
    if (ds.h, ds.w, ds.steps) != (more.h, more.w, more.steps) {
        return Err(Error::dim(format!(
            "cannot append {}x{}x{} samples to a {}x{}x{} dataset",
            more.steps, more.h, more.w, ds.steps, ds.h, ds.w
        )));
    }
    ds.samples.extend(more.samples.iter().cloned());
    ds.seeds.extend(&more.seeds);
    write_dataset(&ds, path)
}
