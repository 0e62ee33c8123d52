//! MoDL: `T` unrolled iterations with a shared residual CNN denoiser `D_W`
//! and CG data consistency,
//!
//! `x^{t+1} = (AᴴA + λ·1)⁻¹ (Aᴴy + λ·D_W(x^t))`,
//!
//! started at `x⁰ = Aᴴy`, with `λ = exp(ℓ)` for a trainable real `ℓ`.

use crate::error::{Error, Result};
use crate::nlop::{checkpoint_with, RerunCounter};
use crate::nn::{
    activation, batchnorm, conv, Activation, BatchNormState, ConvGeom, ConvVariant, Init, InputSpec, Mode, Model,
    OutputSpec, Padding,
};
use crate::real::Real;

use super::blocks::{add_sub, exp_of, finish_network, nlop_with_inputs, scale_by, sense_normal};
use super::cg::CgConfig;
use super::inverse::make_inverse_nlop;
use super::sense::SenseDims;

pub const LAMBDA: &str = "modl.lambda";

#[derive(Clone, Debug)]
pub struct ModlConfig {
    /// Unrolled iterations `T`; all share one set of weights.
    pub iterations: usize,
    /// Convolution layers `L` in the denoiser.
    pub layers: usize,
    /// Complex filters `F_c` of the hidden layers.
    pub filters: usize,
    pub kernel: usize,
    /// Initial `λ`; the stored weight is `ln λ`.
    pub lambda_init: f64,
    pub cg: CgConfig,
    pub mode: Mode,
    pub batchnorm: BatchNormState,
    /// Adds the skip connection `D_W(x) = x + CNN(x)`.
    pub residual: bool,
    /// Leaves out the denoiser, giving CG-SENSE with a learned `λ`:
    /// `x = (AᴴA + λ·1)⁻¹ Aᴴy`.
    pub denoiser: bool,
    /// Wrap every iteration in a checkpoint container counting its
    /// re-executions here.
    pub checkpoint: Option<RerunCounter>,
}

impl Default for ModlConfig {
    fn default() -> Self {
        Self {
            iterations: 10,
            layers: 5,
            filters: 32,
            kernel: 3,
            lambda_init: 0.05,
            cg: CgConfig {
                max_iter: 10,
                tol: 1e-6,
                strict: false,
                batched: true,
            },
            mode: Mode::Train,
            batchnorm: BatchNormState::default(),
            residual: true,
            denoiser: true,
            checkpoint: None,
        }
    }
}

impl ModlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.layers == 0 || self.filters == 0 || self.kernel == 0 {
            return Err(Error::InvalidParameter("MoDL needs T, L, F_c and the kernel size ≥ 1".into()));
        }
        if !(self.lambda_init > 0.0) {
            return Err(Error::InvalidParameter("MoDL needs λ > 0".into()));
        }
        Ok(())
    }

    fn lambda_spec(&self) -> InputSpec {
        InputSpec::weight(LAMBDA, &[1], Init::Const(self.lambda_init.ln())).real()
    }
}

/// The residual denoiser `x ↦ D_W(x)` on images `[nx, ny, M, B]`, output `den`.
pub fn modl_denoiser<R: Real>(cfg: &ModlConfig, d: &SenseDims) -> Result<Model<R>> {
    cfg.validate()?;
    let mut net: Option<Model<R>> = None;
    for l in 0..cfg.layers {
        let cin = if l == 0 { d.maps } else { cfg.filters };
        let last = l + 1 == cfg.layers;
        let cout = if last { d.maps } else { cfg.filters };
        let geom = ConvGeom::new(
            &[d.nx, d.ny],
            &[cfg.kernel, cfg.kernel],
            cin,
            cout,
            d.batch,
            Padding::Same,
        )?;
        let mut layer = conv::<R>(&format!("modl.conv{l}"), &geom, ConvVariant::Forward)?;
        if !last {
            let dims = geom.y_dims();
            let bn = batchnorm::<R>(&format!("modl.bn{l}"), &dims, 2, cfg.mode, cfg.batchnorm)?;
            layer = layer.chain(&bn, "y", "x")?;
            layer = layer.chain(&activation(Activation::CRelu, &dims)?, "y", "x")?;
        }
        let layer = layer.rename_input("x", "\u{0}in")?;
        net = Some(match net {
            None => layer.rename_input("\u{0}in", "x")?,
            Some(n) => n.chain(&layer, "y", "\u{0}in")?,
        });
    }
    let net = net.expect("at least one layer");
    if cfg.residual {
        net.chain(&add_sub(&d.image(), "x", "y", "den", false)?, "y", "y")
    } else {
        net.rename_output("y", "den")
    }
}

/// `(rhs, λ, coils, pattern) ↦ (AᴴA + λ·1)⁻¹ rhs`, output `x`.
fn data_consistency<R: Real>(cfg: &ModlConfig, d: &SenseDims) -> Result<Model<R>> {
    let img = d.image();
    // S(x, λ) = AᴴA x + λ x
    let s = sense_normal(d, "x", "n")?
        .combine_shared(&scale_by(InputSpec::data("lam", &[1]), &img, "x", "lx")?)?
        .chain(&add_sub(&img, "n", "lx", "s", false)?, "n", "n")?
        .link("lx", "lx")?;
    let order = ["x", "lam", "coils", "pattern"];
    let inv = make_inverse_nlop(&nlop_with_inputs(&s, &order)?, cfg.cg)?;
    let q = Model::new(
        inv,
        vec![
            InputSpec::data("rhs", &img),
            InputSpec::data("lam", &[1]),
            InputSpec::data("coils", &d.coil_maps()),
            InputSpec::data("pattern", &d.pattern()),
        ],
        vec![OutputSpec::output("x")],
    )?;
    exp_of(cfg.lambda_spec(), "lam")?.chain(&q, "lam", "lam")
}

/// One iteration `(x, aty, coils, pattern, weights) ↦ x`. Without the
/// denoiser the iterate does not enter and the model is
/// `(aty, coils, pattern, λ) ↦ x`.
pub fn modl_step<R: Real>(cfg: &ModlConfig, d: &SenseDims) -> Result<Model<R>> {
    cfg.validate()?;
    let img = d.image();
    let q = data_consistency(cfg, d)?;
    let step = if cfg.denoiser {
        let lam = exp_of(cfg.lambda_spec(), "lam")?;
        let scaled = lam.chain(&scale_by(InputSpec::data("lam", &[1]), &img, "den", "lden")?, "lam", "lam")?;
        modl_denoiser(cfg, d)?
            .chain(&scaled, "den", "den")?
            .chain(&add_sub(&img, "aty", "lden", "rhs", false)?, "lden", "lden")?
            .chain(&q, "rhs", "rhs")?
    } else {
        q.rename_input("rhs", "aty")?
    };
    match &cfg.checkpoint {
        Some(c) => step.map_nlop(|f| checkpoint_with(f, c)),
        None => Ok(step),
    }
}

/// Unrolled iterations as a model `(aty, coils, pattern, weights) ↦ x`.
pub fn modl_iterations<R: Real>(cfg: &ModlConfig, d: &SenseDims) -> Result<Model<R>> {
    if !cfg.denoiser {
        return modl_step(cfg, d);
    }
    let mut net = modl_step(cfg, d)?;
    for _ in 1..cfg.iterations {
        net = net.chain(&modl_step(cfg, d)?, "x", "x")?;
    }
    net.merge_inputs("aty", "x")
}

/// The full network `(kspace, coils, pattern, weights) ↦ image`.
pub fn build_modl<R: Real>(cfg: &ModlConfig, d: &SenseDims) -> Result<Model<R>> {
    finish_network(d, &modl_iterations(cfg, d)?)
}
