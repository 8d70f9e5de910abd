//! From-scratch feedforward networks with dropout.

mod forward;
mod gradcheck;
mod ops;
mod params;
mod spec;
mod train;

pub use forward::{backward, batch_loss, example_loss, forward, forward_eval, Mode};
pub use gradcheck::{grad_check, DEFAULT_EPSILON};
pub use ops::{bce_loss, dropout_mask, sigmoid, softmax, BCE_EPSILON};
pub use params::{NetworkParams, Tensor, FORMAT_VERSION, MAGIC};
pub use spec::{Layer, NetworkSpec, DEFAULT_DROPOUT};
pub use train::{lr_schedule, train, TrainConfig, TrainHistory};
