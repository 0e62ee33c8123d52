//! Basic atomic operators.

use crate::error::{Error, Result};
use crate::linop::Linop;
use crate::mdarray::MdArray;
use crate::real::{re as real, Real};

use super::{Ctx, EvalState, Nlop, Operator};

struct LinopOp<R: Real> {
    op: Linop<R>,
    dims: [Vec<Vec<usize>>; 2],
}

impl<R: Real> Operator<R> for LinopOp<R> {
    fn name(&self) -> &str {
        "linop"
    }
    fn input_dims(&self) -> &[Vec<usize>] {
        &self.dims[0]
    }
    fn output_dims(&self) -> &[Vec<usize>] {
        &self.dims[1]
    }
    fn forward(&self, x: &[&MdArray<R>], _ctx: Ctx) -> Result<Vec<MdArray<R>>> {
        Ok(vec![self.op.forward(x[0])?])
    }
    fn derivative(&self, _o: usize, _i: usize, dx: &MdArray<R>) -> Result<MdArray<R>> {
        self.op.forward(dx)
    }
    fn adjoint_derivative(&self, _o: usize, _i: usize, dy: &MdArray<R>) -> Result<MdArray<R>> {
        self.op.adjoint(dy)
    }
    fn holomorphic(&self) -> bool {
        true
    }
}

/// A linear operator as a one-input, one-output nlop.
pub fn from_linop<R: Real>(op: &Linop<R>) -> Nlop<R> {
    Nlop::new(LinopOp {
        dims: [vec![op.in_dims().to_vec()], vec![op.out_dims().to_vec()]],
        op: op.clone(),
    })
}

struct Mul<R: Real> {
    dims: [Vec<Vec<usize>>; 2],
    state: EvalState<(MdArray<R>, MdArray<R>)>,
}

impl<R: Real> Operator<R> for Mul<R> {
    fn name(&self) -> &str {
        "mul"
    }
    fn input_dims(&self) -> &[Vec<usize>] {
        &self.dims[0]
    }
    fn output_dims(&self) -> &[Vec<usize>] {
        &self.dims[1]
    }
    fn forward(&self, x: &[&MdArray<R>], ctx: Ctx) -> Result<Vec<MdArray<R>>> {
        let y = x[0].mul(x[1])?;
        self.state.update(ctx, || (x[0].clone(), x[1].clone()));
        Ok(vec![y])
    }
    fn derivative(&self, _o: usize, i: usize, dx: &MdArray<R>) -> Result<MdArray<R>> {
        let s = self.state.get()?;
        let other = if i == 0 { &s.1 } else { &s.0 };
        other.mul(dx)
    }
    fn adjoint_derivative(&self, _o: usize, i: usize, dy: &MdArray<R>) -> Result<MdArray<R>> {
        let s = self.state.get()?;
        let other = if i == 0 { &s.1 } else { &s.0 };
        other.zip_map(dy, |a, b| a.conj() * b)
    }
    fn holomorphic(&self) -> bool {
        true
    }
    fn clear_state(&self) {
        self.state.clear()
    }
}

/// Elementwise product `x₁·x₂`.
pub fn mul<R: Real>(dims: &[usize]) -> Nlop<R> {
    Nlop::new(Mul {
        dims: [vec![dims.to_vec(), dims.to_vec()], vec![dims.to_vec()]],
        state: EvalState::new(),
    })
}

struct AddSub {
    dims: [Vec<Vec<usize>>; 2],
    negate: bool,
}

impl<R: Real> Operator<R> for AddSub {
    fn name(&self) -> &str {
        if self.negate {
            "sub"
        } else {
            "add"
        }
    }
    fn input_dims(&self) -> &[Vec<usize>] {
        &self.dims[0]
    }
    fn output_dims(&self) -> &[Vec<usize>] {
        &self.dims[1]
    }
    fn forward(&self, x: &[&MdArray<R>], _ctx: Ctx) -> Result<Vec<MdArray<R>>> {
        Ok(vec![if self.negate {
            x[0].sub(x[1])?
        } else {
            x[0].add(x[1])?
        }])
    }
    fn derivative(&self, _o: usize, i: usize, dx: &MdArray<R>) -> Result<MdArray<R>> {
        Ok(if self.negate && i == 1 {
            dx.scale_real(-R::one())
        } else {
            dx.clone()
        })
    }
    fn adjoint_derivative(&self, o: usize, i: usize, dy: &MdArray<R>) -> Result<MdArray<R>> {
        Operator::<R>::derivative(self, o, i, dy)
    }
    fn holomorphic(&self) -> bool {
        true
    }
}

/// Elementwise sum `x₁ + x₂`.
pub fn add<R: Real>(dims: &[usize]) -> Nlop<R> {
    Nlop::new(AddSub {
        dims: [vec![dims.to_vec(), dims.to_vec()], vec![dims.to_vec()]],
        negate: false,
    })
}

/// Elementwise difference `x₁ − x₂`.
pub fn sub<R: Real>(dims: &[usize]) -> Nlop<R> {
    Nlop::new(AddSub {
        dims: [vec![dims.to_vec(), dims.to_vec()], vec![dims.to_vec()]],
        negate: true,
    })
}

/// Elementwise operators `y = f(x)` of a single input.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Pointwise {
    Conj,
    Exp,
    RealPart,
    ExpReal,
}

struct Unary<R: Real> {
    kind: Pointwise,
    dims: [Vec<Vec<usize>>; 2],
    state: EvalState<MdArray<R>>,
}

impl<R: Real> Unary<R> {
    fn new(kind: Pointwise, dims: &[usize]) -> Self {
        Self {
            kind,
            dims: [vec![dims.to_vec()], vec![dims.to_vec()]],
            state: EvalState::new(),
        }
    }
}

impl<R: Real> Operator<R> for Unary<R> {
    fn name(&self) -> &str {
        match self.kind {
            Pointwise::Conj => "conj",
            Pointwise::Exp => "exp",
            Pointwise::RealPart => "real",
            Pointwise::ExpReal => "exp_real",
        }
    }
    fn input_dims(&self) -> &[Vec<usize>] {
        &self.dims[0]
    }
    fn output_dims(&self) -> &[Vec<usize>] {
        &self.dims[1]
    }
    fn forward(&self, x: &[&MdArray<R>], ctx: Ctx) -> Result<Vec<MdArray<R>>> {
        let y = match self.kind {
            Pointwise::Conj => x[0].conj(),
            Pointwise::RealPart => x[0].real_part(),
            Pointwise::Exp => x[0].map(|z| z.exp()),
            Pointwise::ExpReal => x[0].map(|z| real(z.re.exp())),
        };
        if matches!(self.kind, Pointwise::Exp | Pointwise::ExpReal) {
            self.state.update(ctx, || y.clone());
        }
        Ok(vec![y])
    }
    fn derivative(&self, _o: usize, _i: usize, dx: &MdArray<R>) -> Result<MdArray<R>> {
        match self.kind {
            Pointwise::Conj => Ok(dx.conj()),
            Pointwise::RealPart => Ok(dx.real_part()),
            Pointwise::Exp => self.state.get()?.mul(dx),
            Pointwise::ExpReal => self.state.get()?.zip_map(dx, |y, d| y * d.re),
        }
    }
    fn adjoint_derivative(&self, _o: usize, _i: usize, dy: &MdArray<R>) -> Result<MdArray<R>> {
        match self.kind {
            Pointwise::Conj => Ok(dy.conj()),
            Pointwise::RealPart => Ok(dy.real_part()),
            Pointwise::Exp => self.state.get()?.zip_map(dy, |y, d| y.conj() * d),
            Pointwise::ExpReal => self.state.get()?.zip_map(dy, |y, d| y * d.re),
        }
    }
    fn holomorphic(&self) -> bool {
        self.kind == Pointwise::Exp
    }
    fn clear_state(&self) {
        self.state.clear()
    }
}

/// Complex conjugate.
pub fn conj<R: Real>(dims: &[usize]) -> Nlop<R> {
    Nlop::new(Unary::new(Pointwise::Conj, dims))
}

/// Complex exponential.
pub fn exp<R: Real>(dims: &[usize]) -> Nlop<R> {
    Nlop::new(Unary::new(Pointwise::Exp, dims))
}

/// Real part, as a complex array with zero imaginary part.
pub fn real_part<R: Real>(dims: &[usize]) -> Nlop<R> {
    Nlop::new(Unary::new(Pointwise::RealPart, dims))
}

/// `exp(Re x)`, used to keep parameters positive.
pub fn exp_real<R: Real>(dims: &[usize]) -> Nlop<R> {
    Nlop::new(Unary::new(Pointwise::ExpReal, dims))
}

struct ScaleReal<R: Real> {
    dims: [Vec<Vec<usize>>; 2],
    state: EvalState<(R, MdArray<R>)>,
}

impl<R: Real> Operator<R> for ScaleReal<R> {
    fn name(&self) -> &str {
        "scale_real"
    }
    fn input_dims(&self) -> &[Vec<usize>] {
        &self.dims[0]
    }
    fn output_dims(&self) -> &[Vec<usize>] {
        &self.dims[1]
    }
    fn forward(&self, x: &[&MdArray<R>], ctx: Ctx) -> Result<Vec<MdArray<R>>> {
        let s = x[0].as_slice()[0].re;
        let y = x[1].scale_real(s);
        self.state.update(ctx, || (s, x[1].clone()));
        Ok(vec![y])
    }
    fn derivative(&self, _o: usize, i: usize, dx: &MdArray<R>) -> Result<MdArray<R>> {
        let st = self.state.get()?;
        Ok(if i == 0 {
            st.1.scale_real(dx.as_slice()[0].re)
        } else {
            dx.scale_real(st.0)
        })
    }
    fn adjoint_derivative(&self, _o: usize, i: usize, dy: &MdArray<R>) -> Result<MdArray<R>> {
        let st = self.state.get()?;
        if i == 0 {
            let r = st.1.dot(dy)?.re;
            MdArray::filled(&self.dims[0][0], real(r))
        } else {
            Ok(dy.scale_real(st.0))
        }
    }
    fn clear_state(&self) {
        self.state.clear()
    }
}

/// `Re(s)·x` for a scalar `s` (an array with one element) and an array `x`.
pub fn scale_real<R: Real>(s_dims: &[usize], dims: &[usize]) -> Result<Nlop<R>> {
    if s_dims.iter().product::<usize>() != 1 {
        return Err(Error::InvalidShape(format!(
            "scale factor must hold one element, got dims {s_dims:?}"
        )));
    }
    Ok(Nlop::new(ScaleReal {
        dims: [vec![s_dims.to_vec(), dims.to_vec()], vec![dims.to_vec()]],
        state: EvalState::new(),
    }))
}

pub(crate) struct Constant<R: Real> {
    value: MdArray<R>,
    dims: [Vec<Vec<usize>>; 2],
}

impl<R: Real> Constant<R> {
    pub(crate) fn new(value: MdArray<R>) -> Self {
        let d = value.dims().to_vec();
        Self {
            value,
            dims: [vec![], vec![d]],
        }
    }
}

impl<R: Real> Operator<R> for Constant<R> {
    fn name(&self) -> &str {
        "constant"
    }
    fn input_dims(&self) -> &[Vec<usize>] {
        &self.dims[0]
    }
    fn output_dims(&self) -> &[Vec<usize>] {
        &self.dims[1]
    }
    fn forward(&self, _x: &[&MdArray<R>], _ctx: Ctx) -> Result<Vec<MdArray<R>>> {
        Ok(vec![self.value.clone()])
    }
    fn derivative(&self, _o: usize, _i: usize, _dx: &MdArray<R>) -> Result<MdArray<R>> {
        Err(Error::Graph("constant has no inputs".into()))
    }
    fn adjoint_derivative(&self, _o: usize, _i: usize, _dy: &MdArray<R>) -> Result<MdArray<R>> {
        Err(Error::Graph("constant has no inputs".into()))
    }
    fn holomorphic(&self) -> bool {
        true
    }
}

/// Operator without inputs that always returns `value`.
pub fn constant<R: Real>(value: MdArray<R>) -> Nlop<R> {
    Nlop::new(Constant::new(value))
}

struct SumAll {
    dims: [Vec<Vec<usize>>; 2],
}

impl<R: Real> Operator<R> for SumAll {
    fn name(&self) -> &str {
        "sum"
    }
    fn input_dims(&self) -> &[Vec<usize>] {
        &self.dims[0]
    }
    fn output_dims(&self) -> &[Vec<usize>] {
        &self.dims[1]
    }
    fn forward(&self, x: &[&MdArray<R>], _ctx: Ctx) -> Result<Vec<MdArray<R>>> {
        Ok(vec![MdArray::scalar(x[0].as_slice().iter().copied().sum())])
    }
    fn derivative(&self, _o: usize, _i: usize, dx: &MdArray<R>) -> Result<MdArray<R>> {
        Ok(MdArray::scalar(dx.as_slice().iter().copied().sum()))
    }
    fn adjoint_derivative(&self, _o: usize, _i: usize, dy: &MdArray<R>) -> Result<MdArray<R>> {
        MdArray::filled(&self.dims[0][0], dy.as_slice()[0])
    }
    fn holomorphic(&self) -> bool {
        true
    }
}

/// Sum of all elements, as an array of dims `[1]`.
pub fn sum_all<R: Real>(dims: &[usize]) -> Nlop<R> {
    Nlop::new(SumAll {
        dims: [vec![dims.to_vec()], vec![vec![1]]],
    })
}
