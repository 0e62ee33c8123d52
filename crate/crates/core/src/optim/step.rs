//! Single update steps. Each is a pure function of the current weights, the
//! gradient, the optimizer state and the configuration.
//!
//! Complex weights are treated as pairs of reals: the gradient `DFᴴ(1)`
//! carries the partial derivatives with respect to the real parts in its
//! real part and with respect to the imaginary parts in its imaginary part.

use crate::error::{Error, Result};
use crate::mdarray::MdArray;
use crate::real::{Cplx, Real};

use super::Prox;

fn finite<R: Real>(g: &MdArray<R>, what: &str) -> Result<()> {
    if g.all_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// `θ − η·g`.
pub fn sgd_step<R: Real>(theta: &MdArray<R>, g: &MdArray<R>, lr: f64) -> Result<MdArray<R>> {
    finite(g, "gradient")?;
    let mut t = theta.clone();
    t.axpy(Cplx::new(R::from_f64_lossy(-lr), R::zero()), g)?;
    Ok(t)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments of one weight array. The second moment is real and
/// accumulates `|g|²`, so each complex weight gets one step size.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<R: Real> {
    pub m: MdArray<R>,
    pub v: Vec<R>,
    pub t: u64,
}

impl<R: Real> AdamState<R> {
    pub fn new(dims: &[usize]) -> Result<Self> {
        let m = MdArray::zeros(dims)?;
        let n = m.len();
        Ok(Self {
            m,
            v: vec![R::zero(); n],
            t: 0,
        })
    }
}

/// One bias-corrected Adam step.
pub fn adam_step<R: Real>(
    theta: &MdArray<R>,
    g: &MdArray<R>,
    state: &AdamState<R>,
    cfg: &AdamConfig,
    lr: f64,
) -> Result<(MdArray<R>, AdamState<R>)> {
    finite(g, "gradient")?;
    g.require_dims(theta.dims(), "gradient")?;
    state.m.require_dims(theta.dims(), "first moment")?;
    let f = R::from_f64_lossy;
    let (b1, b2) = (f(cfg.beta1), f(cfg.beta2));
    let t = state.t + 1;
    let c1 = f(1.0 - cfg.beta1.powi(t as i32));
    let c2 = f(1.0 - cfg.beta2.powi(t as i32));
    let (lr, eps) = (f(lr), f(cfg.eps));
    let mut m = state.m.clone();
    let mut v = state.v.clone();
    let mut out = theta.clone();
    for (((mk, vk), &gk), th) in m
        .as_mut_slice()
        .iter_mut()
        .zip(v.iter_mut())
        .zip(g.as_slice())
        .zip(out.as_mut_slice())
    {
        *mk = *mk * b1 + gk * (R::one() - b1);
        *vk = *vk * b2 + gk.norm_sqr() * (R::one() - b2);
        let mh = *mk / c1;
        let vh = *vk / c2;
        *th = *th - mh * (lr / (vh.sqrt() + eps));
    }
    Ok((out, AdamState { m, v, t }))
}

/// Inertial parameters of iPALM.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IpalmConfig {
    /// Inertia of the proximal-gradient base point.
    pub alpha: f64,
    /// Inertia of the point where the gradient is evaluated.
    pub beta: f64,
}

impl Default for IpalmConfig {
    fn default() -> Self {
        Self { alpha: 0.5, beta: 0.5 }
    }
}

/// `θ + c·(θ − θ_prev)`.
pub fn extrapolate<R: Real>(theta: &MdArray<R>, prev: &MdArray<R>, c: f64) -> Result<MdArray<R>> {
    let mut d = theta.sub(prev)?;
    d = d.scale_real(R::from_f64_lossy(c));
    d.add_assign(theta)?;
    Ok(d)
}

/// One iPALM block update: with `y = θ + α(θ − θ_prev)` and the gradient `g`
/// taken at `z = θ + β(θ − θ_prev)`, returns `prox(y − η·g)`. The caller
/// keeps `θ` as the next `θ_prev`.
pub fn ipalm_step<R: Real>(
    theta: &MdArray<R>,
    prev: &MdArray<R>,
    g: &MdArray<R>,
    cfg: &IpalmConfig,
    lr: f64,
    prox: Option<Prox>,
) -> Result<MdArray<R>> {
    finite(g, "gradient")?;
    let y = extrapolate(theta, prev, cfg.alpha)?;
    let mut out = sgd_step(&y, g, lr)?;
    if let Some(p) = prox {
        p.apply(&mut out, lr);
    }
    Ok(out)
}
