//! Neural-network layers, losses and the named-argument [`Model`].
//!
//! Layers are returned as small [`Model`]s with a data input `x` and an
//! output `y`, so they can be strung together with [`Model::chain`].
//! Data arrays carry channels in the second-to-last and the batch in the
//! last dimension.

pub mod activation;
pub mod batchnorm;
pub mod conv;
pub mod dense;
pub mod loss;
pub mod model;
pub mod pool;
#[cfg(test)]
mod tests;

pub use activation::{activation, activation_nlop, Activation};
pub use batchnorm::{batchnorm, batchnorm_nlop, BatchNormState, Mode};
pub use conv::{conv, conv_nlop, ConvGeom, ConvVariant, Padding};
pub use dense::{dense, dense_nlop};
pub use loss::{attach_loss, loss_nlop, Loss};
pub use model::{ArgKind, Init, InputSpec, Model, OutputKind, OutputSpec, Params};
pub use pool::{dropout, dropout_mask, dropout_nlop, maxpool, maxpool_nlop};
