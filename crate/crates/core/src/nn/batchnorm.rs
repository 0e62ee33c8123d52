//! Complex batch normalization with a learned affine map.
//!
//! Statistics are taken per feature (one index of the feature axis) over all
//! other axes. For complex data the variance is the mean squared magnitude
//! of the centered values: `y = γ·(x − m)/√(v + ε) + β`.

use crate::error::{Error, Result};
use crate::mdarray::MdArray;
use crate::nlop::{Ctx, EvalState, Nlop, Operator};
use crate::real::{Cplx, Real};

use super::model::{Init, InputSpec, Model, OutputSpec};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchNormState {
    /// Weight of the old moving statistics in each update.
    pub momentum: f64,
    pub epsilon: f64,
}

impl Default for BatchNormState {
    fn default() -> Self {
        Self {
            momentum: 0.9,
            epsilon: 1e-5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

struct Saved<R: Real> {
    n: MdArray<R>,
    /// `1/√(v + ε)` per feature.
    s: Vec<R>,
    gamma: Vec<Cplx<R>>,
}

/// Inputs `(x, γ, β, moving mean, moving var)`. Outputs `y`, and in training
/// mode the updated moving mean and variance. The statistics inputs and
/// outputs are excluded from differentiation.
struct BatchNorm<R: Real> {
    mode: Mode,
    cfg: BatchNormState,
    inner: usize,
    features: usize,
    dims: [Vec<Vec<usize>>; 2],
    state: EvalState<Saved<R>>,
}

impl<R: Real> BatchNorm<R> {
    fn feature(&self, k: usize) -> usize {
        (k / self.inner) % self.features
    }

    fn count(&self) -> R {
        let n: usize = self.dims[0][0].iter().product();
        R::from_usize(n / self.features).expect("count")
    }

    /// Sum over all non-feature positions.
    fn reduce(&self, x: &MdArray<R>, f: impl Fn(usize, Cplx<R>) -> Cplx<R>) -> Vec<Cplx<R>> {
        let mut acc = vec![Cplx::new(R::zero(), R::zero()); self.features];
        for (k, &z) in x.as_slice().iter().enumerate() {
            let j = self.feature(k);
            acc[j] = acc[j] + f(k, z);
        }
        acc
    }
}

impl<R: Real> Operator<R> for BatchNorm<R> {
    fn name(&self) -> &str {
        "batchnorm"
    }
    fn input_dims(&self) -> &[Vec<usize>] {
        &self.dims[0]
    }
    fn output_dims(&self) -> &[Vec<usize>] {
        &self.dims[1]
    }
    fn forward(&self, x: &[&MdArray<R>], ctx: Ctx) -> Result<Vec<MdArray<R>>> {
        let eps = R::from_f64_lossy(self.cfg.epsilon);
        let (gamma, beta) = (x[1].as_slice(), x[2].as_slice());
        let (mean, var) = match self.mode {
            Mode::Train => {
                let cnt = self.count();
                let mean: Vec<_> = self.reduce(x[0], |_, z| z).into_iter().map(|s| s / cnt).collect();
                let var: Vec<R> = self
                    .reduce(x[0], |k, z| Cplx::new((z - mean[self.feature(k)]).norm_sqr(), R::zero()))
                    .into_iter()
                    .map(|s| s.re / cnt)
                    .collect();
                (mean, var)
            }
            Mode::Infer => (x[3].as_slice().to_vec(), x[4].as_slice().iter().map(|v| v.re).collect()),
        };
        let s: Vec<R> = var.iter().map(|&v| R::one() / (v + eps).sqrt()).collect();
        let mut n = x[0].clone();
        let mut y = x[0].clone();
        for (k, (nv, yv)) in n.as_mut_slice().iter_mut().zip(y.as_mut_slice()).enumerate() {
            let j = self.feature(k);
            *nv = (*nv - mean[j]) * s[j];
            *yv = gamma[j] * *nv + beta[j];
        }
        let mut out = vec![y];
        if self.mode == Mode::Train {
            let mu = R::from_f64_lossy(self.cfg.momentum);
            let one_mu = R::one() - mu;
            let fd = [self.features];
            let mm = x[3].as_slice().iter().zip(&mean).map(|(&o, &m)| o * mu + m * one_mu).collect();
            let mv = x[4]
                .as_slice()
                .iter()
                .zip(&var)
                .map(|(&o, &v)| Cplx::new(o.re * mu + v * one_mu, R::zero()))
                .collect();
            out.push(MdArray::from_vec(&fd, mm)?);
            out.push(MdArray::from_vec(&fd, mv)?);
        }
        self.state.update(ctx, || Saved {
            n,
            s,
            gamma: gamma.to_vec(),
        });
        Ok(out)
    }
    fn derivative(&self, _o: usize, i: usize, dx: &MdArray<R>) -> Result<MdArray<R>> {
        let st = self.state.get()?;
        let ns = st.n.as_slice();
        match i {
            0 => {
                let mut dy = dx.clone();
                if self.mode == Mode::Train {
                    let cnt = self.count();
                    let mdx: Vec<_> = self.reduce(dx, |_, z| z).into_iter().map(|s| s / cnt).collect();
                    let r = self.reduce(dx, |k, z| Cplx::new((ns[k].conj() * (z - mdx[self.feature(k)])).re, R::zero()));
                    for (k, v) in dy.as_mut_slice().iter_mut().enumerate() {
                        let j = self.feature(k);
                        let dn = (*v - mdx[j] - ns[k] * (r[j].re / cnt)) * st.s[j];
                        *v = st.gamma[j] * dn;
                    }
                } else {
                    for (k, v) in dy.as_mut_slice().iter_mut().enumerate() {
                        let j = self.feature(k);
                        *v = st.gamma[j] * *v * st.s[j];
                    }
                }
                Ok(dy)
            }
            1 | 2 => {
                let g = dx.as_slice();
                let mut dy = st.n.clone();
                for (k, v) in dy.as_mut_slice().iter_mut().enumerate() {
                    let j = self.feature(k);
                    *v = if i == 1 { g[j] * *v } else { g[j] };
                }
                Ok(dy)
            }
            _ => Err(Error::NotDifferentiable(i)),
        }
    }
    fn adjoint_derivative(&self, _o: usize, i: usize, dy: &MdArray<R>) -> Result<MdArray<R>> {
        let st = self.state.get()?;
        let ns = st.n.as_slice();
        let fd = [self.features];
        match i {
            0 => {
                let mut g = dy.clone();
                for (k, v) in g.as_mut_slice().iter_mut().enumerate() {
                    *v = st.gamma[self.feature(k)].conj() * *v;
                }
                if self.mode == Mode::Train {
                    let cnt = self.count();
                    let mg: Vec<_> = self.reduce(&g, |_, z| z).into_iter().map(|s| s / cnt).collect();
                    let r = self.reduce(&g, |k, z| Cplx::new((ns[k].conj() * z).re, R::zero()));
                    for (k, v) in g.as_mut_slice().iter_mut().enumerate() {
                        let j = self.feature(k);
                        *v = (*v - mg[j] - ns[k] * (r[j].re / cnt)) * st.s[j];
                    }
                } else {
                    for (k, v) in g.as_mut_slice().iter_mut().enumerate() {
                        *v = *v * st.s[self.feature(k)];
                    }
                }
                Ok(g)
            }
            1 => MdArray::from_vec(&fd, self.reduce(dy, |k, z| ns[k].conj() * z)),
            2 => MdArray::from_vec(&fd, self.reduce(dy, |_, z| z)),
            _ => Err(Error::NotDifferentiable(i)),
        }
    }
    fn depends(&self, o: usize, i: usize) -> bool {
        o == 0 && i < 3
    }
    fn differentiable(&self, i: usize) -> bool {
        i < 3
    }
    fn clear_state(&self) {
        self.state.clear()
    }
}

/// Batch normalization nlop on `dims`, with features along `axis`.
pub fn batchnorm_nlop<R: Real>(dims: &[usize], axis: usize, mode: Mode, cfg: BatchNormState) -> Result<Nlop<R>> {
    if axis >= dims.len() {
        return Err(Error::InvalidParameter(format!("feature axis {axis} for rank {}", dims.len())));
    }
    if cfg.epsilon <= 0.0 || !(0.0..1.0).contains(&cfg.momentum) {
        return Err(Error::InvalidParameter("batch norm needs ε > 0 and 0 ≤ momentum < 1".into()));
    }
    let features = dims[axis];
    let fd = vec![features];
    let mut outs = vec![dims.to_vec()];
    if mode == Mode::Train {
        outs.push(fd.clone());
        outs.push(fd.clone());
    }
    Ok(Nlop::new(BatchNorm {
        mode,
        cfg,
        inner: dims[..axis].iter().product(),
        features,
        dims: [vec![dims.to_vec(), fd.clone(), fd.clone(), fd.clone(), fd], outs],
        state: EvalState::new(),
    }))
}

/// Batch normalization layer: input `x`, output `y`, weights
/// `{name}.gamma`, `{name}.beta`, moving statistics `{name}.mean`,
/// `{name}.var`. In training mode the updated statistics are the outputs
/// `{name}.mean.new` and `{name}.var.new`.
pub fn batchnorm<R: Real>(name: &str, dims: &[usize], axis: usize, mode: Mode, cfg: BatchNormState) -> Result<Model<R>> {
    let nlop = batchnorm_nlop(dims, axis, mode, cfg)?;
    let fd = [dims[axis]];
    let (mean, var) = (format!("{name}.mean"), format!("{name}.var"));
    let mut outputs = vec![OutputSpec::output("y")];
    if mode == Mode::Train {
        outputs.push(OutputSpec::moving_stat(&format!("{mean}.new"), &mean));
        outputs.push(OutputSpec::moving_stat(&format!("{var}.new"), &var));
    }
    Model::new(
        nlop,
        vec![
            InputSpec::data("x", dims),
            InputSpec::weight(&format!("{name}.gamma"), &fd, Init::Const(1.0)),
            InputSpec::weight(&format!("{name}.beta"), &fd, Init::Zeros),
            InputSpec::moving_stat(&mean, &fd, Init::Zeros).complex(),
            InputSpec::moving_stat(&var, &fd, Init::Const(1.0)),
        ],
        outputs,
    )
}
