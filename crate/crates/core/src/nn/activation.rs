//! Complex activation functions.
//!
//! Sigmoid and softmax act on the real part of their input and return real
//! values; the imaginary part of the input does not influence the output.

use crate::error::{Error, Result};
use crate::mdarray::MdArray;
use crate::nlop::{Ctx, EvalState, Nlop, Operator};
use crate::real::{Cplx, Real};

use super::model::{InputSpec, Model, OutputSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    /// `relu(Re z) + i·relu(Im z)`
    CRelu,
    /// `½(1 + cos arg z)·z`, with `0 ↦ 0`
    Cardioid,
    Sigmoid,
    /// Normalized exponentials along the given class axis.
    Softmax { axis: usize },
}

fn sigmoid<R: Real>(x: R) -> R {
    if x >= R::zero() {
        R::one() / (R::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (R::one() + e)
    }
}

fn real<R: Real>(x: R) -> Cplx<R> {
    Cplx::new(x, R::zero())
}

#[derive(Clone, Copy)]
enum Pointwise {
    CRelu,
    Cardioid,
    Sigmoid,
}

impl Pointwise {
    fn value<R: Real>(self, z: Cplx<R>) -> Cplx<R> {
        let half = R::from_f64_lossy(0.5);
        match self {
            Pointwise::CRelu => Cplx::new(z.re.max(R::zero()), z.im.max(R::zero())),
            Pointwise::Cardioid => {
                let r = z.norm();
                if r == R::zero() {
                    z
                } else {
                    z * (half * (R::one() + z.re / r))
                }
            }
            Pointwise::Sigmoid => real(sigmoid(z.re)),
        }
    }

    fn derivative<R: Real>(self, z: Cplx<R>, dz: Cplx<R>) -> Cplx<R> {
        let half = R::from_f64_lossy(0.5);
        match self {
            Pointwise::CRelu => Cplx::new(
                if z.re > R::zero() { dz.re } else { R::zero() },
                if z.im > R::zero() { dz.im } else { R::zero() },
            ),
            Pointwise::Cardioid => {
                let r = z.norm();
                if r == R::zero() {
                    return dz * half;
                }
                let g = z.re / r;
                // d(x/r) = Re dz / r − x·Re(z̄ dz) / r³
                let dg = dz.re / r - z.re * (z.conj() * dz).re / (r * r * r);
                dz * (half * (R::one() + g)) + z * (half * dg)
            }
            Pointwise::Sigmoid => {
                let s = sigmoid(z.re);
                real(s * (R::one() - s) * dz.re)
            }
        }
    }

    fn adjoint<R: Real>(self, z: Cplx<R>, w: Cplx<R>) -> Cplx<R> {
        let half = R::from_f64_lossy(0.5);
        match self {
            Pointwise::CRelu => self.derivative(z, w),
            Pointwise::Cardioid => {
                let r = z.norm();
                if r == R::zero() {
                    return w * half;
                }
                let g = z.re / r;
                let q = (z.conj() * w).re;
                w * (half * (R::one() + g)) + real(half * q / r) - z * (half * z.re * q / (r * r * r))
            }
            Pointwise::Sigmoid => {
                let s = sigmoid(z.re);
                real(s * (R::one() - s) * w.re)
            }
        }
    }
}

struct PointwiseOp<R: Real> {
    kind: Pointwise,
    dims: [Vec<Vec<usize>>; 2],
    state: EvalState<MdArray<R>>,
}

impl<R: Real> Operator<R> for PointwiseOp<R> {
    fn name(&self) -> &str {
        match self.kind {
            Pointwise::CRelu => "crelu",
            Pointwise::Cardioid => "cardioid",
            Pointwise::Sigmoid => "sigmoid",
        }
    }
    fn input_dims(&self) -> &[Vec<usize>] {
        &self.dims[0]
    }
    fn output_dims(&self) -> &[Vec<usize>] {
        &self.dims[1]
    }
    fn forward(&self, x: &[&MdArray<R>], ctx: Ctx) -> Result<Vec<MdArray<R>>> {
        let k = self.kind;
        self.state.update(ctx, || x[0].clone());
        Ok(vec![x[0].map(|z| k.value(z))])
    }
    fn derivative(&self, _o: usize, _i: usize, dx: &MdArray<R>) -> Result<MdArray<R>> {
        let k = self.kind;
        self.state.get()?.zip_map(dx, |z, d| k.derivative(z, d))
    }
    fn adjoint_derivative(&self, _o: usize, _i: usize, dy: &MdArray<R>) -> Result<MdArray<R>> {
        let k = self.kind;
        self.state.get()?.zip_map(dy, |z, w| k.adjoint(z, w))
    }
    fn clear_state(&self) {
        self.state.clear()
    }
}

struct Softmax<R: Real> {
    axis: usize,
    dims: [Vec<Vec<usize>>; 2],
    state: EvalState<MdArray<R>>,
}

impl<R: Real> Softmax<R> {
    /// `(inner, classes, outer)` sizes around the class axis.
    fn split(&self) -> (usize, usize, usize) {
        let d = &self.dims[0][0];
        (
            d[..self.axis].iter().product(),
            d[self.axis],
            d[self.axis + 1..].iter().product(),
        )
    }

    /// `y ⊙ (u − Σ y·u)` along the class axis, with `u = Re v`.
    fn jacobian(&self, y: &MdArray<R>, v: &MdArray<R>) -> Result<MdArray<R>> {
        let (inner, n, outer) = self.split();
        let (ys, vs) = (y.as_slice(), v.as_slice());
        let mut out = MdArray::zeros(y.dims())?;
        let os = out.as_mut_slice();
        for b in 0..outer {
            for a in 0..inner {
                let at = |k: usize| a + inner * (k + n * b);
                let s: R = (0..n).map(|k| ys[at(k)].re * vs[at(k)].re).sum();
                for k in 0..n {
                    os[at(k)] = real(ys[at(k)].re * (vs[at(k)].re - s));
                }
            }
        }
        Ok(out)
    }
}

impl<R: Real> Operator<R> for Softmax<R> {
    fn name(&self) -> &str {
        "softmax"
    }
    fn input_dims(&self) -> &[Vec<usize>] {
        &self.dims[0]
    }
    fn output_dims(&self) -> &[Vec<usize>] {
        &self.dims[1]
    }
    fn forward(&self, x: &[&MdArray<R>], ctx: Ctx) -> Result<Vec<MdArray<R>>> {
        let (inner, n, outer) = self.split();
        let xs = x[0].as_slice();
        let mut y = MdArray::zeros(x[0].dims())?;
        let ys = y.as_mut_slice();
        for b in 0..outer {
            for a in 0..inner {
                let at = |k: usize| a + inner * (k + n * b);
                let m = (0..n).map(|k| xs[at(k)].re).fold(R::neg_infinity(), R::max);
                let mut s = R::zero();
                for k in 0..n {
                    let e = (xs[at(k)].re - m).exp();
                    ys[at(k)] = real(e);
                    s = s + e;
                }
                for k in 0..n {
                    ys[at(k)] = ys[at(k)] / s;
                }
            }
        }
        self.state.update(ctx, || y.clone());
        Ok(vec![y])
    }
    fn derivative(&self, _o: usize, _i: usize, dx: &MdArray<R>) -> Result<MdArray<R>> {
        self.jacobian(&*self.state.get()?, dx)
    }
    fn adjoint_derivative(&self, _o: usize, _i: usize, dy: &MdArray<R>) -> Result<MdArray<R>> {
        // the real Jacobian is symmetric
        self.jacobian(&*self.state.get()?, dy)
    }
    fn clear_state(&self) {
        self.state.clear()
    }
}

/// Activation as a one-input nlop on arrays of `dims`.
pub fn activation_nlop<R: Real>(kind: Activation, dims: &[usize]) -> Result<Nlop<R>> {
    let d = [vec![dims.to_vec()], vec![dims.to_vec()]];
    let pw = |k| {
        Ok(Nlop::new(PointwiseOp {
            kind: k,
            dims: d.clone(),
            state: EvalState::new(),
        }))
    };
    match kind {
        Activation::CRelu => pw(Pointwise::CRelu),
        Activation::Cardioid => pw(Pointwise::Cardioid),
        Activation::Sigmoid => pw(Pointwise::Sigmoid),
        Activation::Softmax { axis } => {
            if axis >= dims.len() {
                return Err(Error::InvalidParameter(format!(
                    "softmax axis {axis} for rank {}",
                    dims.len()
                )));
            }
            Ok(Nlop::new(Softmax {
                axis,
                dims: d,
                state: EvalState::new(),
            }))
        }
    }
}

/// Activation layer with input `x` and output `y`.
pub fn activation<R: Real>(kind: Activation, dims: &[usize]) -> Result<Model<R>> {
    Model::new(
        activation_nlop(kind, dims)?,
        vec![InputSpec::data("x", dims)],
        vec![OutputSpec::output("y")],
    )
}
