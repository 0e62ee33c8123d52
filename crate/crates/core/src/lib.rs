//! Complex-valued automatic differentiation over strided multidimensional
//! arrays, and unrolled MRI reconstruction networks built on top of it.
//!
//! The crate is layered:
//!
//! * [`mdarray`]: strided arrays, md-functions and the DFT.
//! * [`linop`]: linear operators with forward and adjoint maps.
//! * [`nlop`]: non-linear operators with derivatives, their composition
//!   algebra (chain, combine, link, duplicate) and containers.
//! * [`nn`]: layers, losses and the named-argument [`nn::Model`].
//! * [`optim`]: SGD, Adam, iPALM and the mini-batch training loop.
//! * [`recon`]: the SENSE model, CG-based inverse operators, VarNet and MoDL.

pub mod error;
pub mod exec;
pub mod linop;
pub mod mdarray;
pub mod nlop;
pub mod nn;
pub mod optim;
pub mod real;
pub mod recon;

pub use error::{Error, Result};

pub use linop::Linop;
pub use mdarray::MdArray;
pub use nlop::Nlop;

pub use real::{Cplx, Real};
