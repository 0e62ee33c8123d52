//! Fully-connected layer `y = Wx + b` on `x: [in, B]`.

use crate::error::{Error, Result};
use crate::mdarray::{md_fmac2, md_zfmacc2, Dst, MdArray, Src};
use crate::nlop::{Ctx, EvalState, Nlop, Operator};
use crate::real::Real;

use super::model::{Init, InputSpec, Model, OutputSpec};

#[derive(Clone, Copy)]
struct Shape {
    nin: usize,
    nout: usize,
    batch: usize,
}

impl Shape {
    /// `y[o,b] += W[o,i] · x[i,b]` over the domain `[out, in, B]`.
    fn matvec<R: Real>(&self, w: &MdArray<R>, x: &MdArray<R>) -> Result<MdArray<R>> {
        let mut y = MdArray::zeros(&[self.nout, self.batch])?;
        let (o, i) = (self.nout as isize, self.nin as isize);
        md_fmac2(
            &[self.nout, self.nin, self.batch],
            Dst::new(y.as_mut_slice(), 0, &[1, 0, o]),
            Src::new(w.as_slice(), 0, &[1, o, 0]),
            Src::new(x.as_slice(), 0, &[0, 1, i]),
        )?;
        Ok(y)
    }

    /// `x[i,b] = Σ_o conj(W[o,i]) · y[o,b]`.
    fn matvec_adjoint<R: Real>(&self, w: &MdArray<R>, y: &MdArray<R>) -> Result<MdArray<R>> {
        let mut x = MdArray::zeros(&[self.nin, self.batch])?;
        let (o, i) = (self.nout as isize, self.nin as isize);
        md_zfmacc2(
            &[self.nout, self.nin, self.batch],
            Dst::new(x.as_mut_slice(), 0, &[0, 1, i]),
            Src::new(y.as_slice(), 0, &[1, 0, o]),
            Src::new(w.as_slice(), 0, &[1, o, 0]),
        )?;
        Ok(x)
    }

    /// `W[o,i] = Σ_b y[o,b] · conj(x[i,b])`.
    fn outer<R: Real>(&self, y: &MdArray<R>, x: &MdArray<R>) -> Result<MdArray<R>> {
        let mut w = MdArray::zeros(&[self.nout, self.nin])?;
        let (o, i) = (self.nout as isize, self.nin as isize);
        md_zfmacc2(
            &[self.nout, self.nin, self.batch],
            Dst::new(w.as_mut_slice(), 0, &[1, o, 0]),
            Src::new(y.as_slice(), 0, &[1, 0, o]),
            Src::new(x.as_slice(), 0, &[0, 1, i]),
        )?;
        Ok(w)
    }

    fn broadcast<R: Real>(&self, b: &MdArray<R>) -> Result<MdArray<R>> {
        let v: Vec<_> = (0..self.batch).flat_map(|_| b.as_slice().iter().copied()).collect();
        MdArray::from_vec(&[self.nout, self.batch], v)
    }

    fn sum_batch<R: Real>(&self, y: &MdArray<R>) -> Result<MdArray<R>> {
        let mut s = MdArray::zeros(&[self.nout])?;
        for (k, &v) in y.as_slice().iter().enumerate() {
            let t = &mut s.as_mut_slice()[k % self.nout];
            *t = *t + v;
        }
        Ok(s)
    }
}

/// Inputs `(x, W, b)`.
struct Dense<R: Real> {
    shape: Shape,
    dims: [Vec<Vec<usize>>; 2],
    state: EvalState<(MdArray<R>, MdArray<R>)>,
}

impl<R: Real> Operator<R> for Dense<R> {
    fn name(&self) -> &str {
        "dense"
    }
    fn input_dims(&self) -> &[Vec<usize>] {
        &self.dims[0]
    }
    fn output_dims(&self) -> &[Vec<usize>] {
        &self.dims[1]
    }
    fn forward(&self, x: &[&MdArray<R>], ctx: Ctx) -> Result<Vec<MdArray<R>>> {
        let mut y = self.shape.matvec(x[1], x[0])?;
        y.add_assign(&self.shape.broadcast(x[2])?)?;
        self.state.update(ctx, || (x[0].clone(), x[1].clone()));
        Ok(vec![y])
    }
    fn derivative(&self, _o: usize, i: usize, dx: &MdArray<R>) -> Result<MdArray<R>> {
        let s = self.state.get()?;
        match i {
            0 => self.shape.matvec(&s.1, dx),
            1 => self.shape.matvec(dx, &s.0),
            _ => self.shape.broadcast(dx),
        }
    }
    fn adjoint_derivative(&self, _o: usize, i: usize, dy: &MdArray<R>) -> Result<MdArray<R>> {
        let s = self.state.get()?;
        match i {
            0 => self.shape.matvec_adjoint(&s.1, dy),
            1 => self.shape.outer(dy, &s.0),
            _ => self.shape.sum_batch(dy),
        }
    }
    fn holomorphic(&self) -> bool {
        true
    }
    fn clear_state(&self) {
        self.state.clear()
    }
}

/// `(x, W, b) ↦ Wx + b` with `x: [in, B]`, `W: [out, in]`, `b: [out]`.
pub fn dense_nlop<R: Real>(nin: usize, nout: usize, batch: usize) -> Result<Nlop<R>> {
    if nin == 0 || nout == 0 || batch == 0 {
        return Err(Error::InvalidParameter("dense layer sizes must be positive".into()));
    }
    Ok(Nlop::new(Dense {
        shape: Shape { nin, nout, batch },
        dims: [vec![vec![nin, batch], vec![nout, nin], vec![nout]], vec![vec![nout, batch]]],
        state: EvalState::new(),
    }))
}

/// Dense layer with data input `x`, weights `{name}.w`, `{name}.b` and output `y`.
pub fn dense<R: Real>(name: &str, nin: usize, nout: usize, batch: usize) -> Result<Model<R>> {
    Model::new(
        dense_nlop(nin, nout, batch)?,
        vec![
            InputSpec::data("x", &[nin, batch]),
            InputSpec::weight(
                &format!("{name}.w"),
                &[nout, nin],
                Init::Glorot {
                    fan_in: nin,
                    fan_out: nout,
                },
            ),
            InputSpec::weight(&format!("{name}.b"), &[nout], Init::Zeros),
        ],
        vec![OutputSpec::output("y")],
    )
}
