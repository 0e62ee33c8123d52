//! SENSE reconstruction: the forward model, CG solvers, the inverse
//! operator with implicit derivatives, and the VarNet and MoDL networks.
//!
//! Networks map `kspace [nx, ny, nc, B]`, `coils [nx, ny, nc, M, B]` and
//! `pattern [nx, ny, B]` to the image of map set 0, `[nx, ny, B]`.

pub mod blocks;
pub mod cg;
pub mod inverse;
pub mod modl;
pub mod normalize;
pub mod rbf;
pub mod sense;
pub mod varnet;

pub use cg::{cg, cg_normal_solve, CgConfig, CgResult};
pub use inverse::make_inverse_nlop;
pub use modl::{build_modl, modl_denoiser, modl_iterations, modl_step, ModlConfig};
pub use normalize::{denormalize, normalize, scale_items};
pub use rbf::{rbf_activation, rbf_nlop, RbfGrid};
pub use sense::{
    adjoint_recon, build_sense, check_pattern, estimate_pattern, sense_adjoint_nlop, sense_forward_nlop,
    sense_normal_nlop, SenseDims, SenseModel,
};
pub use varnet::{build_varnet, varnet_iterations, varnet_names, varnet_step, VarNetConfig};
