//! Loss functions `(prediction, reference) ↦ real scalar`.

use crate::error::{Error, Result};
use crate::mdarray::MdArray;
use crate::nlop::{Ctx, EvalState, Nlop, Operator};
use crate::real::{Cplx, Real};

use super::model::{InputSpec, Model, OutputSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Loss {
    /// Mean of `|p − r|²`.
    Mse,
    /// Mean of `|p − r|`.
    Mad,
    /// `−Σ_c Re r_c · log max(Re p_c, 10⁻¹²)`, averaged over all positions
    /// off the class axis.
    Cce { axis: usize },
}

const LOG_FLOOR: f64 = 1e-12;

struct LossOp<R: Real> {
    kind: Loss,
    dims: [Vec<Vec<usize>>; 2],
    /// `∂L/∂p` and `∂L/∂r` as complex arrays (real and imaginary partials).
    state: EvalState<[MdArray<R>; 2]>,
}

impl<R: Real> LossOp<R> {
    fn norm(&self) -> R {
        let d = &self.dims[0][0];
        let n: usize = d.iter().product();
        let per = match self.kind {
            Loss::Cce { axis } => d[axis],
            _ => 1,
        };
        R::from_usize(n / per).expect("count")
    }
}

impl<R: Real> Operator<R> for LossOp<R> {
    fn name(&self) -> &str {
        match self.kind {
            Loss::Mse => "mse",
            Loss::Mad => "mad",
            Loss::Cce { .. } => "cce",
        }
    }
    fn input_dims(&self) -> &[Vec<usize>] {
        &self.dims[0]
    }
    fn output_dims(&self) -> &[Vec<usize>] {
        &self.dims[1]
    }
    fn forward(&self, x: &[&MdArray<R>], ctx: Ctx) -> Result<Vec<MdArray<R>>> {
        let (p, r) = (x[0], x[1]);
        let n = self.norm();
        let zero = Cplx::new(R::zero(), R::zero());
        let (value, gp, gr) = match self.kind {
            Loss::Mse => {
                let d = p.sub(r)?;
                let two = R::from_f64_lossy(2.0) / n;
                (d.norm_sqr() / n, d.scale_real(two), d.scale_real(-two))
            }
            Loss::Mad => {
                let d = p.sub(r)?;
                let v: R = d.as_slice().iter().map(|z| z.norm()).sum();
                // subgradient 0 where p = r
                let g = d.map(|z| {
                    let m = z.norm();
                    if m == R::zero() {
                        zero
                    } else {
                        z / (m * n)
                    }
                });
                let gr = g.scale_real(-R::one());
                (v / n, g, gr)
            }
            Loss::Cce { .. } => {
                let floor = R::from_f64_lossy(LOG_FLOOR);
                let mut v = R::zero();
                let mut gp = p.clone();
                let mut gr = r.clone();
                for ((a, b), (&pv, &rv)) in gp
                    .as_mut_slice()
                    .iter_mut()
                    .zip(gr.as_mut_slice())
                    .zip(p.as_slice().iter().zip(r.as_slice()))
                {
                    let q = pv.re.max(floor);
                    v = v - rv.re * q.ln();
                    *a = Cplx::new(if pv.re > floor { -rv.re / (q * n) } else { R::zero() }, R::zero());
                    *b = Cplx::new(-q.ln() / n, R::zero());
                }
                (v / n, gp, gr)
            }
        };
        self.state.update(ctx, || [gp, gr]);
        Ok(vec![MdArray::scalar(Cplx::new(value, R::zero()))])
    }
    fn derivative(&self, _o: usize, i: usize, dx: &MdArray<R>) -> Result<MdArray<R>> {
        let s = self.state.get()?;
        let v = s[i].dot(dx)?.re;
        Ok(MdArray::scalar(Cplx::new(v, R::zero())))
    }
    fn adjoint_derivative(&self, _o: usize, i: usize, dy: &MdArray<R>) -> Result<MdArray<R>> {
        let s = self.state.get()?;
        Ok(s[i].scale_real(dy.as_slice()[0].re))
    }
    fn clear_state(&self) {
        self.state.clear()
    }
}

/// Loss as a two-input nlop with output dims `[1]`.
pub fn loss_nlop<R: Real>(kind: Loss, dims: &[usize]) -> Result<Nlop<R>> {
    if let Loss::Cce { axis } = kind {
        if axis >= dims.len() {
            return Err(Error::InvalidParameter(format!("class axis {axis} for rank {}", dims.len())));
        }
    }
    Ok(Nlop::new(LossOp {
        kind,
        dims: [vec![dims.to_vec(), dims.to_vec()], vec![vec![1]]],
        state: EvalState::new(),
    }))
}

/// Appends a loss to output `output` of `model`, comparing it with a new data
/// input `reference`. The result has the single output `loss` plus any
/// moving-statistics outputs of `model`.
pub fn attach_loss<R: Real>(model: &Model<R>, output: &str, kind: Loss, reference: &str) -> Result<Model<R>> {
    let dims = model.output_dims(output)?;
    let loss = Model::new(
        loss_nlop(kind, &dims)?,
        vec![InputSpec::data("\u{0}pred", &dims), InputSpec::data(reference, &dims)],
        vec![OutputSpec::output("loss")],
    )?;
    model.chain(&loss, output, "\u{0}pred")
}
