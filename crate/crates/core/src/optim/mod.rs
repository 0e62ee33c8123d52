//! Incremental gradient methods and the mini-batch training loop.

pub mod prox;
pub mod step;
pub mod train;

pub use prox::Prox;
pub use step::{adam_step, extrapolate, ipalm_step, sgd_step, AdamConfig, AdamState, IpalmConfig};
pub use train::{epoch_order, loss_line, train, Algorithm, Dataset, OptimizerState, TrainConfig, TrainReport};
