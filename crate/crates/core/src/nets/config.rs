use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Segnet,
    SegnetConvlstm,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Segnet => "segnet",
            ModelKind::SegnetConvlstm => "segnet-convlstm",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "segnet" => Ok(ModelKind::Segnet),
            "segnet-convlstm" => Ok(ModelKind::SegnetConvlstm),
            other => Err(Error::config(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Architecture hyper-parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Grid extent (square, cells).
    pub grid: usize,
    /// Number of output frames `T`.
    pub steps: usize,
    /// Channel widths of the three encoder stages.
    pub widths: [usize; 3],
    /// ConvLSTM hidden channels.
    pub hidden: usize,
    /// Spatial kernel size of every 3×3-style convolution.
    pub kernel: usize,
    pub dropout: f64,
    /// 1 = saturation, 2 = saturation and pressure.
    pub out_channels: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Segnet,
            grid: 40,
            steps: 10,
            widths: [16, 32, 64],
            hidden: 16,
            kernel: 3,
            dropout: 0.1,
            out_channels: 1,
            seed: 0,
        }
    }
}

/// Number of 2×2 pooling stages in the trunk.
pub(crate) const POOL_STAGES: u32 = 3;

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let div = 1usize << POOL_STAGES;
        if self.grid == 0 || !self.grid.is_multiple_of(div) {
            return Err(Error::config(format!(
                "grid {} must be a positive multiple of {div}",
                self.grid
            )));
        }
        if self.steps == 0 {
            return Err(Error::config("at least one time step is required"));
        }
        if self.widths.contains(&0) || self.hidden == 0 {
            return Err(Error::config("channel counts must be positive"));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::config(format!("kernel size {} must be odd", self.kernel)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(1..=2).contains(&self.out_channels) {
            return Err(Error::config(format!(
                "output channels must be 1 or 2, got {}",
                self.out_channels
            )));
        }
        Ok(())
    }

    pub(crate) fn pad(&self) -> usize {
        self.kernel / 2
    }
}
