//! SegNet and SegNet-ConvLSTM surrogates built on the tape engine.
//!
//! Both models share one trunk: a 7-convolution encoder with three 2×2 max-pools
//! and a mirrored decoder that unpools with the encoder's argmax maps. SegNet maps
//! the decoded features to all `T` frames at once with a 1×1 head; SegNet-ConvLSTM
//! feeds the same features to a ConvLSTM unrolled over `T` steps and maps every
//! hidden state through a shared 1×1 head.

mod config;
mod convlstm;
mod params;
mod segnet;

pub use config::{ModelConfig, ModelKind};
pub use convlstm::{convlstm_cell_size, convlstm_step, ConvLstmCell, StepOutput};
pub use params::{init_weights, param_count, BoundParams, ModelParams};
pub use segnet::{forward, segnet_convlstm_forward, segnet_forward, trunk_forward, Phase};
