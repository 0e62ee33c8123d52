//! Training and applying the reconstruction networks on file data.

use std::collections::BTreeMap;

use nlop::nn::{attach_loss, Loss, Mode, Model, Params};
use nlop::optim::{self, Dataset, OptimizerState, TrainConfig};
use nlop::recon::{
    build_modl, build_varnet, normalize, scale_items, CgConfig, ModlConfig, SenseDims, SenseModel, VarNetConfig,
};
use nlop::{exec, MdArray};
use serde::{Deserialize, Serialize};

use crate::bundle::{TrainEcho, WeightsBundle};
use crate::error::{CliError, Result};
use crate::layout::ReconInputs;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Network {
    Varnet,
    Modl,
}

impl std::fmt::Display for Network {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Network::Varnet => "varnet",
            Network::Modl => "modl",
        })
    }
}

/// Network hyperparameters, stored in every weights bundle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub network: Network,
    pub iterations: usize,
    pub filters: usize,
    pub kernel: usize,
    /// RBF nodes per filter (VarNet).
    pub rbf: usize,
    /// Convolution layers of the denoiser (MoDL).
    pub layers: usize,
    /// CG iterations per data-consistency solve (MoDL).
    pub cg_iter: usize,
    /// Scale every item so that its adjoint reconstruction has maximum 1.
    pub normalize: bool,
    /// MoDL without the denoiser is CG-SENSE with a learned `λ`.
    #[serde(default = "yes")]
    pub denoiser: bool,
}

fn yes() -> bool {
    true
}

impl NetConfig {
    pub fn defaults(network: Network) -> Self {
        let (v, m) = (VarNetConfig::default(), ModlConfig::default());
        match network {
            Network::Varnet => Self {
                network,
                iterations: v.iterations,
                filters: v.filters,
                kernel: v.kernel,
                rbf: v.rbf,
                layers: m.layers,
                cg_iter: m.cg.max_iter,
                normalize: false,
                denoiser: true,
            },
            Network::Modl => Self {
                network,
                iterations: m.iterations,
                filters: m.filters,
                kernel: m.kernel,
                rbf: v.rbf,
                layers: m.layers,
                cg_iter: m.cg.max_iter,
                normalize: false,
                denoiser: true,
            },
        }
    }

    pub fn varnet(&self) -> VarNetConfig {
        VarNetConfig {
            iterations: self.iterations,
            filters: self.filters,
            kernel: self.kernel,
            rbf: self.rbf,
            ..VarNetConfig::default()
        }
    }

    pub fn modl(&self, mode: Mode) -> ModlConfig {
        let base = ModlConfig::default();
        ModlConfig {
            iterations: self.iterations,
            layers: self.layers,
            filters: self.filters,
            kernel: self.kernel,
            cg: CgConfig {
                max_iter: self.cg_iter,
                ..base.cg
            },
            mode,
            denoiser: self.denoiser,
            ..base
        }
    }

    /// The network `(kspace, coils, pattern, weights) ↦ image`.
    pub fn build(&self, d: &SenseDims, mode: Mode) -> Result<Model<f32>> {
        Ok(match self.network {
            Network::Varnet => build_varnet(&self.varnet(), d)?,
            Network::Modl => build_modl(&self.modl(mode), d)?,
        })
    }
}

fn with_batch(d: &SenseDims, batch: usize) -> SenseDims {
    SenseDims { batch, ..*d }
}

/// Map-set-0 adjoint reconstruction `[nx, ny, B]`.
pub fn adjoint_images(inp: &ReconInputs) -> Result<MdArray<f32>> {
    let d = &inp.dims;
    let s = SenseModel::new(inp.coils.clone(), inp.pattern.clone())?;
    let x = s.adjoint(&inp.kspace)?;
    Ok(first_map(&x, d)?)
}

fn first_map(x: &MdArray<f32>, d: &SenseDims) -> nlop::Result<MdArray<f32>> {
    let np = d.nx * d.ny;
    let data = (0..d.batch)
        .flat_map(|b| x.as_slice()[np * d.maps * b..][..np].iter().copied())
        .collect();
    MdArray::from_vec(&d.map_image(), data)
}

/// Per-item scale factors and normalized k-space, when `cfg.normalize`.
fn scaled(cfg: &NetConfig, inp: &ReconInputs) -> Result<(Option<Vec<f64>>, MdArray<f32>)> {
    if !cfg.normalize {
        return Ok((None, inp.kspace.clone()));
    }
    let s = SenseModel::new(inp.coils.clone(), inp.pattern.clone())?;
    let x0 = s.adjoint(&inp.kspace)?;
    let (scales, k) = normalize(&x0, &inp.kspace)?;
    Ok((Some(scales), k))
}

/// Trains a network on `inp` against `reference [nx, ny, B]` and returns the
/// weights. `on_epoch(epoch, loss)` sees the mean loss of every epoch.
pub fn train(
    cfg: &NetConfig,
    inp: &ReconInputs,
    reference: &MdArray<f32>,
    tc: &TrainConfig,
    on_epoch: impl FnMut(usize, f64),
) -> Result<WeightsBundle> {
    tc.validate()?;
    exec::set_deterministic(tc.deterministic);
    let (scales, kspace) = scaled(cfg, inp)?;
    let reference = match &scales {
        Some(s) => scale_items(reference, s)?,
        None => reference.clone(),
    };
    let d = inp.dims;
    let build = |n: usize| -> nlop::Result<Model<f32>> {
        let net = cfg.build(&with_batch(&d, n), Mode::Train).map_err(|e| match e {
            CliError::Core(e) => e,
            other => nlop::Error::InvalidParameter(other.to_string()),
        })?;
        attach_loss(&net, "image", Loss::Mse, "reference")
    };
    let mut arrays = BTreeMap::new();
    arrays.insert("kspace".to_string(), kspace);
    arrays.insert("coils".to_string(), inp.coils.clone());
    arrays.insert("pattern".to_string(), inp.pattern.clone());
    arrays.insert("reference".to_string(), reference);
    let data = Dataset::new(arrays)?;

    let mut params = cfg.build(&with_batch(&d, 1), Mode::Train)?.init_params(tc.seed)?;
    let mut state = OptimizerState::default();
    optim::train(build, &data, &mut params, &mut state, tc, on_epoch)?;
    Ok(WeightsBundle {
        config: cfg.clone(),
        training: TrainEcho {
            optimizer: format!("{:?}", tc.algorithm).to_lowercase(),
            lr: tc.lr,
            batch_size: tc.batch_size,
            epochs: tc.epochs,
            seed: tc.seed,
            deterministic: tc.deterministic,
        },
        arrays: params,
    })
}

/// Reconstructs every item of `inp`, `chunk` items at a time.
pub fn apply(bundle: &WeightsBundle, inp: &ReconInputs, chunk: usize) -> Result<MdArray<f32>> {
    let cfg = &bundle.config;
    let (scales, kspace) = scaled(cfg, inp)?;
    let d = inp.dims;
    let chunk = chunk.clamp(1, d.batch);
    let mut models: BTreeMap<usize, Model<f32>> = BTreeMap::new();
    let mut parts = Vec::new();
    let mut start = 0;
    while start < d.batch {
        let n = chunk.min(d.batch - start);
        if !models.contains_key(&n) {
            let m = cfg.build(&with_batch(&d, n), Mode::Infer)?;
            bundle.check(&m)?;
            models.insert(n, m);
        }
        let idx: Vec<usize> = (start..start + n).collect();
        let mut args = Params::new();
        args.insert("kspace".to_string(), kspace.gather_last(&idx)?);
        args.insert("coils".to_string(), inp.coils.gather_last(&idx)?);
        args.insert("pattern".to_string(), inp.pattern.gather_last(&idx)?);
        let mut out = models[&n].apply(&[&args, &bundle.arrays])?;
        parts.push(out.remove("image").expect("network output"));
        start += n;
    }
    let x = MdArray::concat_last(&parts)?;
    Ok(match scales {
        Some(s) => nlop::recon::denormalize(&x, &s)?,
        None => x,
    })
}
