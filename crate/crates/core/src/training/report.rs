use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::ModelKind;

/// Losses of one split. `physics` is present only when the physics term is
/// active.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalLosses {
    pub samples: usize,
    pub data: f64,
    pub physics: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    pub epoch: usize,
    /// Sample-weighted mean of the mini-batch data losses (dropout on).
    pub train_data: f64,
    pub train_physics: Option<f64>,
    pub val_data: f64,
    pub val_physics: Option<f64>,
}

/// Outcome of one training run. Wall time lives in the run manifest so that
/// equal seeds give byte-identical reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub model: ModelKind,
    pub seed: u64,
    pub lambda: f64,
    pub parameters: usize,
    pub epochs: Vec<EpochLosses>,
    /// Epoch (1-based) whose weights were kept.
    pub best_epoch: usize,
    pub train: EvalLosses,
    pub val: EvalLosses,
    pub test: EvalLosses,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl LossReport {
    pub fn validate(&self) -> Result<()> {
        let mut all = Vec::new();
        for e in &self.epochs {
            all.extend([Some(e.train_data), e.train_physics, Some(e.val_data), e.val_physics]);
        }
        for s in [&self.train, &self.val, &self.test] {
            all.extend([Some(s.data), s.physics]);
        }
        if all.into_iter().flatten().any(|v| !(v.is_finite() && v >= 0.0)) {
            return Err(Error::NonFinite("loss report holds a negative or non-finite loss".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("loss report serializes")
    }

    /// `epoch,train_data,train_physics,val_data,val_physics`, one row per epoch.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_data,train_physics,val_data,val_physics\n");
        for e in &self.epochs {
            writeln!(
                s,
                "{},{},{},{},{}",
                e.epoch,
                e.train_data,
                opt(e.train_physics),
                e.val_data,
                opt(e.val_physics)
            )
            .expect("write to String");
        }
        s
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Header {
            path: path.into(),
            detail: e.to_string(),
        })
    }
}
