use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{PermField, PermMeta};
use crate::error::{Error, Result};

/// Largest grid for which the dense covariance is factorized.
const MAX_CELLS: usize = 64 * 64;
const NUGGET: f64 = 1e-10;

/// Log-normal permeability sampler `k = exp(μ + Z)` where `Z` is a zero-mean
/// Gaussian field with exponential covariance `σ² exp(-d / ℓ)` (distance in
/// cells). The Cholesky factor is computed once and reused across seeds.
#[derive(Clone, Debug)]
pub struct PermSampler {
    h: usize,
    w: usize,
    corr_len: f64,
    log_std: f64,
    log_mean: f64,
    factor: Option<DMatrix<f64>>,
}

fn covariance(h: usize, w: usize, corr_len: f64, log_std: f64, nugget: f64) -> DMatrix<f64> {
    let n = h * w;
    let var = log_std * log_std;
    DMatrix::from_fn(n, n, |i, j| {
        let (dy, dx) = ((i / w) as f64 - (j / w) as f64, (i % w) as f64 - (j % w) as f64);
        let d = (dx * dx + dy * dy).sqrt();
        var * (-d / corr_len).exp() + if i == j { nugget } else { 0.0 }
    })
}

impl PermSampler {
    /// `log_mean` is `ln` of the geometric-mean permeability in mD.
    pub fn new(h: usize, w: usize, corr_len: f64, log_std: f64, log_mean: f64) -> Result<Self> {
        if h == 0 || w == 0 || h * w > MAX_CELLS {
            return Err(Error::config(format!(
                "grid {h}x{w} outside the dense-factorization range (1..={MAX_CELLS} cells)"
            )));
        }
        if !(corr_len.is_finite() && corr_len > 0.0) {
            return Err(Error::config(format!("correlation length must be positive, got {corr_len}")));
        }
        if !(log_std.is_finite() && log_std >= 0.0) {
            return Err(Error::config(format!("log-permeability std must be non-negative, got {log_std}")));
        }
        if !log_mean.is_finite() {
            return Err(Error::config("log-permeability mean must be finite"));
        }
        let factor = if log_std == 0.0 {
            None
        } else {
            let chol = covariance(h, w, corr_len, log_std, 0.0)
                .cholesky()
                .or_else(|| covariance(h, w, corr_len, log_std, NUGGET).cholesky())
                .ok_or_else(|| Error::Solver("covariance factorization failed after nugget retry".into()))?;
            Some(chol.l())
        };
        Ok(Self {
            h,
            w,
            corr_len,
            log_std,
            log_mean,
            factor,
        })
    }

    /// Gaussian log-perturbation `Z` for `seed`.
    /// Grid extent `(h, w)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn sample_log(&self, seed: u64) -> Vec<f64> {
        let n = self.h * self.w;
        match &self.factor {
            None => vec![0.0; n],
            Some(l) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let xi = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
                (l * xi).iter().copied().collect()
            }
        }
    }

    pub fn sample(&self, seed: u64) -> PermField {
        let k = self
            .sample_log(seed)
            .into_iter()
            .map(|z| (self.log_mean + z).exp())
            .collect();
        PermField {
            h: self.h,
            w: self.w,
            k,
            meta: PermMeta {
                seed,
                corr_len: self.corr_len,
                log_std: self.log_std,
                log_mean: self.log_mean,
            },
        }
    }
}

/// One-off sample with geometric mean 100 mD.
pub fn generate_permeability(h: usize, w: usize, corr_len: f64, log_std: f64, seed: u64) -> Result<PermField> {
    Ok(PermSampler::new(h, w, corr_len, log_std, 100f64.ln())?.sample(seed))
}
