//! Linear operators bundling a forward map and its adjoint.

use std::fmt;
use std::sync::Arc;

use crate::error::{mismatch, Error, Result};
use crate::mdarray::{DftPlan, Direction, MdArray};
use crate::real::{Cplx, Real};

/// Behaviour of a linear operator `A: Cᴺ → Cᴹ`.
///
/// Implementations may assume their inputs have already been checked against
/// [`in_dims`](Self::in_dims) / [`out_dims`](Self::out_dims).
pub trait LinearOperator<R: Real>: Send + Sync {
    fn in_dims(&self) -> &[usize];
    fn out_dims(&self) -> &[usize];
    fn forward(&self, x: &MdArray<R>) -> Result<MdArray<R>>;
    fn adjoint(&self, y: &MdArray<R>) -> Result<MdArray<R>>;

    /// `AᴴA x`.
    fn normal(&self, x: &MdArray<R>) -> Result<MdArray<R>> {
        let y = self.forward(x)?;
        self.adjoint(&y)
    }
}

/// Shared handle to a linear operator.
#[derive(Clone)]
pub struct Linop<R: Real = f32>(Arc<dyn LinearOperator<R>>);

impl<R: Real> fmt::Debug for Linop<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Linop")
            .field("in", &self.in_dims())
            .field("out", &self.out_dims())
            .finish()
    }
}

impl<R: Real> Linop<R> {
    pub fn new(op: impl LinearOperator<R> + 'static) -> Self {
        Self(Arc::new(op))
    }

    /// Operator defined by a pair of closures.
    pub fn from_fns<F, G>(in_dims: &[usize], out_dims: &[usize], forward: F, adjoint: G) -> Self
    where
        F: Fn(&MdArray<R>) -> Result<MdArray<R>> + Send + Sync + 'static,
        G: Fn(&MdArray<R>) -> Result<MdArray<R>> + Send + Sync + 'static,
    {
        Self::new(FnOp {
            in_dims: in_dims.to_vec(),
            out_dims: out_dims.to_vec(),
            forward: Box::new(forward),
            adjoint: Box::new(adjoint),
        })
    }

    pub fn in_dims(&self) -> &[usize] {
        self.0.in_dims()
    }

    pub fn out_dims(&self) -> &[usize] {
        self.0.out_dims()
    }

    pub fn forward(&self, x: &MdArray<R>) -> Result<MdArray<R>> {
        x.require_dims(self.in_dims(), "linop forward input")?;
        self.0.forward(x)
    }

    pub fn adjoint(&self, y: &MdArray<R>) -> Result<MdArray<R>> {
        y.require_dims(self.out_dims(), "linop adjoint input")?;
        self.0.adjoint(y)
    }

    pub fn normal(&self, x: &MdArray<R>) -> Result<MdArray<R>> {
        x.require_dims(self.in_dims(), "linop normal input")?;
        self.0.normal(x)
    }

    pub fn identity(dims: &[usize]) -> Self {
        Self::new(Identity {
            dims: dims.to_vec(),
        })
    }

    pub fn zero(in_dims: &[usize], out_dims: &[usize]) -> Self {
        let (i, o) = (in_dims.to_vec(), out_dims.to_vec());
        Self::from_fns(in_dims, out_dims, move |_| MdArray::zeros(&o), move |_| MdArray::zeros(&i))
    }

    /// Multiplication by a complex scalar.
    pub fn scaled(dims: &[usize], s: Cplx<R>) -> Self {
        Self::from_fns(dims, dims, move |x| Ok(x.scale(s)), move |y| Ok(y.scale(s.conj())))
    }

    /// Elementwise multiplication by a fixed array of the same dimensions.
    pub fn diag(weights: MdArray<R>) -> Self {
        let dims = weights.dims().to_vec();
        let w = Arc::new(weights);
        let w2 = w.clone();
        Self::from_fns(
            &dims,
            &dims,
            move |x| x.mul(&w),
            move |y| y.zip_map(&w2, |a, b| a * b.conj()),
        )
    }

    /// Dense matrix `m` (column-major, `out_len × in_len`) acting on flattened arrays.
    pub fn matrix(in_dims: &[usize], out_dims: &[usize], m: Vec<Cplx<R>>) -> Result<Self> {
        let n: usize = in_dims.iter().product();
        let k: usize = out_dims.iter().product();
        if m.len() != n * k {
            return Err(Error::InvalidShape(format!(
                "matrix with {} entries for {k}x{n} operator",
                m.len()
            )));
        }
        Ok(Self::new(Matrix {
            in_dims: in_dims.to_vec(),
            out_dims: out_dims.to_vec(),
            m,
        }))
    }

    /// Unitary DFT along the dimensions in `flags`.
    pub fn dft(dims: &[usize], flags: u32) -> Result<Self> {
        let plan = Arc::new(DftPlan::new(dims, flags)?);
        let p2 = plan.clone();
        Ok(Self::from_fns(
            dims,
            dims,
            move |x| plan.apply(x, Direction::Forward),
            move |y| p2.apply(y, Direction::Inverse),
        ))
    }

    pub fn reshape(in_dims: &[usize], out_dims: &[usize]) -> Result<Self> {
        if in_dims.iter().product::<usize>() != out_dims.iter().product::<usize>() {
            return Err(mismatch(in_dims, out_dims, "reshape"));
        }
        let (i, o) = (in_dims.to_vec(), out_dims.to_vec());
        Ok(Self::from_fns(
            in_dims,
            out_dims,
            move |x| x.clone().reshape(&o),
            move |y| y.clone().reshape(&i),
        ))
    }

    /// `B ∘ A`, i.e. `self` first, then `next`.
    pub fn chain(&self, next: &Linop<R>) -> Result<Self> {
        if self.out_dims() != next.in_dims() {
            return Err(mismatch(next.in_dims(), self.out_dims(), "linop chain"));
        }
        Ok(Self::new(Chain {
            first: self.clone(),
            second: next.clone(),
        }))
    }

    /// `A + B` for operators of equal shape.
    pub fn plus(&self, other: &Linop<R>) -> Result<Self> {
        if self.in_dims() != other.in_dims() || self.out_dims() != other.out_dims() {
            return Err(mismatch(self.in_dims(), other.in_dims(), "linop sum"));
        }
        let (a, b) = (self.clone(), other.clone());
        let (a2, b2) = (self.clone(), other.clone());
        Ok(Self::from_fns(
            self.in_dims(),
            self.out_dims(),
            move |x| a.forward(x)?.add(&b.forward(x)?),
            move |y| a2.adjoint(y)?.add(&b2.adjoint(y)?),
        ))
    }

    /// The adjoint as an operator in its own right.
    pub fn adjoint_op(&self) -> Self {
        let (a, b) = (self.clone(), self.clone());
        Self::from_fns(
            self.out_dims(),
            self.in_dims(),
            move |y| a.adjoint(y),
            move |x| b.forward(x),
        )
    }
}

struct FnOp<R: Real> {
    in_dims: Vec<usize>,
    out_dims: Vec<usize>,
    forward: Box<dyn Fn(&MdArray<R>) -> Result<MdArray<R>> + Send + Sync>,
    adjoint: Box<dyn Fn(&MdArray<R>) -> Result<MdArray<R>> + Send + Sync>,
}

impl<R: Real> LinearOperator<R> for FnOp<R> {
    fn in_dims(&self) -> &[usize] {
        &self.in_dims
    }
    fn out_dims(&self) -> &[usize] {
        &self.out_dims
    }
    fn forward(&self, x: &MdArray<R>) -> Result<MdArray<R>> {
        (self.forward)(x)
    }
    fn adjoint(&self, y: &MdArray<R>) -> Result<MdArray<R>> {
        (self.adjoint)(y)
    }
}

struct Identity {
    dims: Vec<usize>,
}

impl<R: Real> LinearOperator<R> for Identity {
    fn in_dims(&self) -> &[usize] {
        &self.dims
    }
    fn out_dims(&self) -> &[usize] {
        &self.dims
    }
    fn forward(&self, x: &MdArray<R>) -> Result<MdArray<R>> {
        Ok(x.clone())
    }
    fn adjoint(&self, y: &MdArray<R>) -> Result<MdArray<R>> {
        Ok(y.clone())
    }
}

struct Chain<R: Real> {
    first: Linop<R>,
    second: Linop<R>,
}

impl<R: Real> LinearOperator<R> for Chain<R> {
    fn in_dims(&self) -> &[usize] {
        self.first.in_dims()
    }
    fn out_dims(&self) -> &[usize] {
        self.second.out_dims()
    }
    fn forward(&self, x: &MdArray<R>) -> Result<MdArray<R>> {
        self.second.forward(&self.first.forward(x)?)
    }
    fn adjoint(&self, y: &MdArray<R>) -> Result<MdArray<R>> {
        self.first.adjoint(&self.second.adjoint(y)?)
    }
}

struct Matrix<R: Real> {
    in_dims: Vec<usize>,
    out_dims: Vec<usize>,
    m: Vec<Cplx<R>>,
}

impl<R: Real> LinearOperator<R> for Matrix<R> {
    fn in_dims(&self) -> &[usize] {
        &self.in_dims
    }
    fn out_dims(&self) -> &[usize] {
        &self.out_dims
    }
    fn forward(&self, x: &MdArray<R>) -> Result<MdArray<R>> {
        let rows: usize = self.out_dims.iter().product();
        let mut y = MdArray::zeros(&self.out_dims)?;
        let ys = y.as_mut_slice();
        for (j, &xj) in x.as_slice().iter().enumerate() {
            let col = &self.m[j * rows..(j + 1) * rows];
            for (yi, &mij) in ys.iter_mut().zip(col) {
                *yi = *yi + mij * xj;
            }
        }
        Ok(y)
    }
    fn adjoint(&self, y: &MdArray<R>) -> Result<MdArray<R>> {
        let rows: usize = self.out_dims.iter().product();
        let ys = y.as_slice();
        let data = self
            .m
            .chunks(rows)
            .map(|col| col.iter().zip(ys).fold(crate::real::zero(), |acc, (&m, &v)| acc + m.conj() * v))
            .collect();
        MdArray::from_vec(&self.in_dims, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::real::c;

    fn mat(rows: usize, cols: usize, seed: f64) -> Vec<Cplx<f64>> {
        (0..rows * cols)
            .map(|i| c((seed + i as f64).sin(), (seed * 2.0 + i as f64).cos()))
            .collect()
    }

    #[test]
    fn chain_with_identity_is_neutral() {
        let a = Linop::matrix(&[3], &[2], mat(2, 3, 0.3)).unwrap();
        let ai = a.chain(&Linop::identity(&[2])).unwrap();
        let x = MdArray::from_vec(&[3], vec![c(1.0, 2.0), c(-1.0, 0.5), c(0.0, 1.0)]).unwrap();
        assert_eq!(a.forward(&x).unwrap(), ai.forward(&x).unwrap());
    }

    #[test]
    fn chain_shape_mismatch() {
        let a = Linop::<f64>::identity(&[3]);
        let b = Linop::<f64>::identity(&[4]);
        assert!(matches!(a.chain(&b), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn chain_matches_matrix_product() {
        // dense oracle: (BA)_{ik} = Σ_j B_ij A_jk, column-major
        let (n, k, m) = (3, 4, 2);
        let am = mat(k, n, 0.1);
        let bm = mat(m, k, 0.7);
        let a = Linop::matrix(&[n], &[k], am.clone()).unwrap();
        let b = Linop::matrix(&[k], &[m], bm.clone()).unwrap();
        let ab = a.chain(&b).unwrap();
        for col in 0..n {
            let mut e = MdArray::<f64>::zeros(&[n]).unwrap();
            e.as_mut_slice()[col] = c(1.0, 0.0);
            let y = ab.forward(&e).unwrap();
            for i in 0..m {
                let expect: Cplx<f64> = (0..k).map(|j| bm[i + j * m] * am[j + col * k]).sum();
                assert!((y.as_slice()[i] - expect).norm() < 1e-12);
            }
        }
        for row in 0..m {
            let mut e = MdArray::<f64>::zeros(&[m]).unwrap();
            e.as_mut_slice()[row] = c(1.0, 0.0);
            let x = ab.adjoint(&e).unwrap();
            for col in 0..n {
                let expect: Cplx<f64> = (0..k).map(|j| bm[row + j * m] * am[j + col * k]).sum();
                assert!((x.as_slice()[col] - expect.conj()).norm() < 1e-12);
            }
        }
    }
}
