//! Dense tensors, reverse-mode differentiation, Adam and gradient checking.

mod adam;
mod gradcheck;
mod kernels;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{grad_check, relative_error, GradCheckOptions, GradCheckReport, TensorCheck};
pub use tape::{BackwardFault, IndexMap, OpKind, Tape, Var};
pub use tensor::Tensor;
