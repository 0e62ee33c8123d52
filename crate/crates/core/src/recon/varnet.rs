//! Variational network: `T` unrolled gradient steps with a learned
//! fields-of-experts regularizer,
//!
//! `x^{t+1} = x^t − Σ_i (K_i^t)ᴴ Φ_i^t(Re(K_i^t x^t)) − λ^t (AᴴA x^t − Aᴴy)`,
//!
//! started at `x⁰ = Aᴴy`. The regularizer acts on map set 0 only.

use crate::error::{Error, Result};
use crate::nlop::{checkpoint_with, RerunCounter};
use crate::nn::{conv, ConvGeom, ConvVariant, Init, InputSpec, Model, OutputSpec, Padding};
use crate::optim::Prox;
use crate::real::Real;

use super::blocks::{add_sub, finish_network, linear, scale_by, select_map, sense_normal};
use super::rbf::{rbf_nlop, RbfGrid};
use super::sense::SenseDims;

#[derive(Clone, Debug)]
pub struct VarNetConfig {
    /// Unrolled iterations `T`.
    pub iterations: usize,
    /// Filters `N_k` per iteration.
    pub filters: usize,
    /// Square kernel size.
    pub kernel: usize,
    /// Radial basis functions `N_w` per filter.
    pub rbf: usize,
    /// RBF centers span `[-range, range]`.
    pub rbf_range: f64,
    /// Initial RBF weights ramp linearly from `-rbf_init` to `rbf_init`.
    pub rbf_init: f64,
    pub lambda_init: f64,
    /// Wrap every iteration in a checkpoint container counting its
    /// re-executions here.
    pub checkpoint: Option<RerunCounter>,
}

impl Default for VarNetConfig {
    fn default() -> Self {
        Self {
            iterations: 10,
            filters: 24,
            kernel: 11,
            rbf: 31,
            rbf_range: 1.0,
            rbf_init: 0.04,
            lambda_init: 1.0,
            checkpoint: None,
        }
    }
}

impl VarNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.filters == 0 || self.kernel == 0 || self.rbf < 2 {
            return Err(Error::InvalidParameter(
                "VarNet needs T ≥ 1, N_k ≥ 1, kernel ≥ 1 and N_w ≥ 2".into(),
            ));
        }
        if !(self.rbf_range > 0.0) || !(self.lambda_init >= 0.0) {
            return Err(Error::InvalidParameter("VarNet needs a positive RBF range and λ ≥ 0".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<RbfGrid> {
        RbfGrid::uniform(self.rbf, -self.rbf_range, self.rbf_range)
    }

    /// Real trainable parameters of the network.
    pub fn num_parameters(&self) -> usize {
        let per = 2 * self.kernel * self.kernel * self.filters + self.rbf * self.filters + 1;
        per * self.iterations
    }
}

/// Weight names of iteration `t`.
pub fn varnet_names(t: usize) -> [String; 3] {
    [
        format!("varnet.{t}.conv.w"),
        format!("varnet.{t}.rbf"),
        format!("varnet.{t}.lambda"),
    ]
}

/// One iteration as a model `(x, aty, coils, pattern, weights) ↦ x`.
pub fn varnet_step<R: Real>(cfg: &VarNetConfig, d: &SenseDims, t: usize) -> Result<Model<R>> {
    cfg.validate()?;
    let [_, wname, lname] = varnet_names(t);
    let geom = ConvGeom::new(
        &[d.nx, d.ny],
        &[cfg.kernel, cfg.kernel],
        1,
        cfg.filters,
        d.batch,
        Padding::Same,
    )?;
    let sel = select_map::<R>(d, 0);

    // regularizer r = E₀ Kᴴ Φ(Re K S₀ x)
    let pick = linear(&sel, "x", "x0")?;
    let k = conv::<R>(&format!("varnet.{t}.conv"), &geom, ConvVariant::Forward)?.rename_input("x", "x0")?;
    let fdims = geom.y_dims();
    let phi = Model::new(
        rbf_nlop(cfg.grid()?, &fdims, 2)?,
        vec![
            InputSpec::data("z", &fdims),
            InputSpec::weight(
                &wname,
                &[cfg.rbf, cfg.filters],
                Init::Ramp {
                    lo: -cfg.rbf_init,
                    hi: cfg.rbf_init,
                },
            )
            .real(),
        ],
        vec![OutputSpec::output("a")],
    )?;
    let kt = conv::<R>(&format!("varnet.{t}.conv"), &geom, ConvVariant::Transposed)?.rename_input("x", "a")?;
    let embed = linear(&sel.adjoint_op(), "u", "r")?;
    let reg = pick
        .chain(&k, "x0", "x0")?
        .chain(&phi, "y", "z")?
        .chain(&kt, "a", "a")?
        .chain(&embed, "y", "u")?;

    // data term λ (AᴴA x − Aᴴy)
    let img = d.image();
    let dc = sense_normal(d, "x", "n")?
        .chain(&add_sub(&img, "n", "aty", "g", true)?, "n", "n")?
        .chain(
            &scale_by(
                InputSpec::weight(&lname, &[1], Init::Const(cfg.lambda_init))
                    .real()
                    .with_prox(Prox::NonNegative),
                &img,
                "g",
                "dc",
            )?,
            "g",
            "g",
        )?;

    let step = reg
        .combine_shared(&dc)?
        .chain(&add_sub(&img, "x", "r", "xr", true)?, "r", "r")?
        .chain(&add_sub(&img, "xr", "dc", "x", true)?, "xr", "xr")?
        .link("dc", "dc")?;
    match &cfg.checkpoint {
        Some(c) => step.map_nlop(|f| checkpoint_with(f, c)),
        None => Ok(step),
    }
}

/// Unrolled iterations `0..T` as a model `(aty, coils, pattern, weights) ↦ x`.
pub fn varnet_iterations<R: Real>(cfg: &VarNetConfig, d: &SenseDims) -> Result<Model<R>> {
    let mut net = varnet_step(cfg, d, 0)?;
    for t in 1..cfg.iterations {
        net = net.chain(&varnet_step(cfg, d, t)?, "x", "x")?;
    }
    net.merge_inputs("aty", "x")
}

/// The full network `(kspace, coils, pattern, weights) ↦ image`.
pub fn build_varnet<R: Real>(cfg: &VarNetConfig, d: &SenseDims) -> Result<Model<R>> {
    finish_network(d, &varnet_iterations(cfg, d)?)
}
