//! Losses, normalization, and the training / evaluation loops.
//!
//! The objective is `L = L_data + λ · L_physics`: `L_data` is the mean squared
//! error over batch, time, channels and cells, `L_physics` the mean squared
//! nondimensional water-balance residual of the predicted saturation and
//! (denormalized) pressure sequences.

mod loss;
mod normalize;
mod report;
mod trainer;

pub use loss::{data_loss, total_loss, PhysicsTerm};
pub use normalize::{normalize_dataset, normalize_with, NormStats, Prepared, Split, SplitData, SplitSizes};
pub use report::{EpochLosses, EvalLosses, LossReport};
pub use trainer::{evaluate, predict, train, EvalOptions, TrainConfig};
