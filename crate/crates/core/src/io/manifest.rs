use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::container::sha256_hex;
use crate::error::{Error, Result};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "SURROGATE_OUT_DIR";

/// `$SURROGATE_OUT_DIR`, or `out` when unset or empty.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map_or_else(|| PathBuf::from("out"), PathBuf::from)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

/// Record of one command invocation and every artifact it produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub code_version: String,
    pub outputs: Vec<OutputRecord>,
    /// Free-form results (losses, error metrics).
    pub results: serde_json::Value,
    pub wall_time_secs: f64,
}

pub fn hash_file(path: &Path) -> Result<OutputRecord> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(OutputRecord {
        path: path.to_path_buf(),
        bytes: bytes.len() as u64,
        sha256: sha256_hex(&bytes),
    })
}

impl RunManifest {
    pub fn new(command: Vec<String>, config: serde_json::Value, seeds: Vec<u64>) -> Self {
        Self {
            command,
            config,
            seeds,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: Vec::new(),
            results: serde_json::Value::Null,
            wall_time_secs: 0.0,
        }
    }

    /// Hashes `path` and lists it as an output.
    pub fn record(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(hash_file(path)?);
        Ok(())
    }

    /// Re-hashes every listed output; returns the paths that changed.
    pub fn verify(&self) -> Result<Vec<PathBuf>> {
        let mut changed = Vec::new();
        for o in &self.outputs {
            if hash_file(&o.path)?.sha256 != o.sha256 {
                changed.push(o.path.clone());
            }
        }
        Ok(changed)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self).map_err(|e| Error::Header {
            path: path.into(),
            detail: e.to_string(),
        })?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Header {
            path: path.into(),
            detail: e.to_string(),
        })
    }
}
