//! Surrogate modeling of two-phase subsurface flow.
//!
//! The crate bundles everything needed to go from permeability realizations to
//! trained sequence surrogates and Monte-Carlo moment maps:
//!
//! * [`engine`]: dense f64 tensors with tape-based reverse-mode differentiation,
//!   Adam and a finite-difference gradient checker.
//! * [`nets`]: the 7-convolution SegNet encoder-decoder and SegNet-ConvLSTM.
//! * [`simulator`]: permeability sampler and an IMPES finite-volume simulator for
//!   the quarter five-spot waterflood.
//! * [`physics`]: the differentiable discrete water mass-balance residual.
//! * [`training`]: losses, normalization, training and evaluation loops.
//! * [`uq`]: ensemble moment maps and their comparison.
//! * [`io`]: dataset / checkpoint containers, map exporters and run manifests.

pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod io;
pub mod nets;
pub mod physics;
pub mod simulator;
pub mod training;
pub mod uq;

pub use engine::{Tape, Tensor, Var};
pub use error::{Error, Result};
pub use nets::{ModelConfig, ModelKind, ModelParams};
pub use simulator::{FluidProps, PermField, SimConfig, SimOutput, WellSpec};
pub use training::{LossReport, TrainConfig};
pub use uq::{EnsembleStats, StatsSource};
