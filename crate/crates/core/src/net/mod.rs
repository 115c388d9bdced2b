//! Dense feed-forward networks of one scalar input, with exact parameter
//! gradients and exact input derivatives, plus the Adam optimizer and a
//! reduce-on-plateau learning-rate schedule.

mod dense;
mod network;
mod optim;

pub use dense::{param_count, Activation, DenseNet, DenseTape, OutputConstraint};
pub use network::{Network, Tape};
pub use optim::{adam_step, AdamState, LrSchedule};
