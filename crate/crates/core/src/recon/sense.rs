//! The SENSE forward model `A = P·F·C` with one or more sets of coil maps.
//!
//! Layouts (column-major, batch last):
//!
//! | array    | dims                 |
//! |----------|----------------------|
//! | image    | `[nx, ny, M, B]`     |
//! | coils    | `[nx, ny, nc, M, B]` |
//! | k-space  | `[nx, ny, nc, B]`    |
//! | pattern  | `[nx, ny, B]`        |
//!
//! The DFT is unitary and not centered: the k-space origin sits at index 0.

use std::sync::Arc;

use crate::error::{mismatch, Error, Result};
use crate::exec;
use crate::linop::Linop;
use crate::mdarray::{DftPlan, Direction};
use crate::mdarray::MdArray;
use crate::nlop::{Ctx, EvalState, Nlop, Operator};
use crate::real::{Cplx, Real};

/// Sizes shared by all SENSE arrays.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SenseDims {
    pub nx: usize,
    pub ny: usize,
    pub coils: usize,
    pub maps: usize,
    pub batch: usize,
}

impl SenseDims {
    /// Reads the sizes off a coil array `[nx, ny, nc, M, B]`.
    pub fn from_coils(dims: &[usize]) -> Result<Self> {
        if dims.len() != 5 || dims.contains(&0) {
            return Err(Error::InvalidShape(format!(
                "coil maps must have dims [nx, ny, coils, maps, batch], got {dims:?}"
            )));
        }
        Ok(Self {
            nx: dims[0],
            ny: dims[1],
            coils: dims[2],
            maps: dims[3],
            batch: dims[4],
        })
    }

    fn pixels(&self) -> usize {
        self.nx * self.ny
    }

    pub fn image(&self) -> Vec<usize> {
        vec![self.nx, self.ny, self.maps, self.batch]
    }

    pub fn coil_maps(&self) -> Vec<usize> {
        vec![self.nx, self.ny, self.coils, self.maps, self.batch]
    }

    pub fn kspace(&self) -> Vec<usize> {
        vec![self.nx, self.ny, self.coils, self.batch]
    }

    pub fn pattern(&self) -> Vec<usize> {
        vec![self.nx, self.ny, self.batch]
    }

    /// Single-map image `[nx, ny, B]`.
    pub fn map_image(&self) -> Vec<usize> {
        vec![self.nx, self.ny, self.batch]
    }
}

/// Checks that every pattern entry is exactly 0 or 1.
pub fn check_pattern<R: Real>(p: &MdArray<R>) -> Result<()> {
    let ok = p
        .as_slice()
        .iter()
        .all(|z| z.im == R::zero() && (z.re == R::zero() || z.re == R::one()));
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter("sampling pattern must be binary".into()))
    }
}

/// Sampling pattern estimated from k-space: a location counts as sampled if
/// any coil has a nonzero value there.
pub fn estimate_pattern<R: Real>(kspace: &MdArray<R>) -> Result<MdArray<R>> {
    let d = kspace.dims();
    if d.len() != 4 {
        return Err(Error::InvalidShape(format!("k-space must have dims [nx, ny, coils, batch], got {d:?}")));
    }
    let (np, nc, nb) = (d[0] * d[1], d[2], d[3]);
    let k = kspace.as_slice();
    let mut out = vec![crate::real::zero::<R>(); np * nb];
    for b in 0..nb {
        for c in 0..nc {
            let base = np * (c + nc * b);
            for p in 0..np {
                if k[base + p] != crate::real::zero() {
                    out[p + np * b] = Cplx::new(R::one(), R::zero());
                }
            }
        }
    }
    MdArray::from_vec(&[d[0], d[1], nb], out)
}

/// Evaluates `A`, `Aᴴ` and `AᴴA` for given coils and pattern.
#[derive(Clone)]
pub struct SenseModel<R: Real> {
    dims: SenseDims,
    coils: Arc<MdArray<R>>,
    pattern: Arc<MdArray<R>>,
    plan: Arc<DftPlan<R>>,
}

impl<R: Real> std::fmt::Debug for SenseModel<R> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SenseModel").field("dims", &self.dims).finish()
    }
}

impl<R: Real> SenseModel<R> {
    pub fn new(coils: MdArray<R>, pattern: MdArray<R>) -> Result<Self> {
        Self::from_shared(Arc::new(coils), Arc::new(pattern))
    }

    fn from_shared(coils: Arc<MdArray<R>>, pattern: Arc<MdArray<R>>) -> Result<Self> {
        let dims = SenseDims::from_coils(coils.dims())?;
        pattern.require_dims(&dims.pattern(), "sampling pattern")?;
        check_pattern(&pattern)?;
        let plan = Arc::new(DftPlan::new(&dims.kspace(), 0b11)?);
        Ok(Self {
            dims,
            coils,
            pattern,
            plan,
        })
    }

    pub fn dims(&self) -> SenseDims {
        self.dims
    }

    pub fn coils(&self) -> &MdArray<R> {
        &self.coils
    }

    pub fn pattern(&self) -> &MdArray<R> {
        &self.pattern
    }

    /// Coil images `Σ_m C_{c,m}·x_m`.
    fn expand(&self, x: &MdArray<R>) -> Result<MdArray<R>> {
        x.require_dims(&self.dims.image(), "SENSE image")?;
        let SenseDims { coils: nc, maps: nm, .. } = self.dims;
        let np = self.dims.pixels();
        let (xs, cs) = (x.as_slice(), self.coils.as_slice());
        let mut out = MdArray::zeros(&self.dims.kspace())?;
        let work = out.len() * nm;
        exec::for_each_chunk_mut(out.as_mut_slice(), np * nc, work, |b, chunk| {
            for m in 0..nm {
                let xb = &xs[np * (m + nm * b)..][..np];
                for c in 0..nc {
                    let cb = &cs[np * (c + nc * (m + nm * b))..][..np];
                    for ((o, &cv), &xv) in chunk[np * c..][..np].iter_mut().zip(cb).zip(xb) {
                        *o = *o + cv * xv;
                    }
                }
            }
        });
        Ok(out)
    }

    /// `Σ_c conj(C_{c,m})·y_c`.
    fn combine(&self, y: &MdArray<R>) -> Result<MdArray<R>> {
        let SenseDims { coils: nc, maps: nm, .. } = self.dims;
        let np = self.dims.pixels();
        let (ys, cs) = (y.as_slice(), self.coils.as_slice());
        let mut out = MdArray::zeros(&self.dims.image())?;
        let work = y.len() * nm;
        exec::for_each_chunk_mut(out.as_mut_slice(), np * nm, work, |b, chunk| {
            for m in 0..nm {
                let o = &mut chunk[np * m..][..np];
                for c in 0..nc {
                    let cb = &cs[np * (c + nc * (m + nm * b))..][..np];
                    let yb = &ys[np * (c + nc * b)..][..np];
                    for ((o, &cv), &yv) in o.iter_mut().zip(cb).zip(yb) {
                        *o = *o + cv.conj() * yv;
                    }
                }
            }
        });
        Ok(out)
    }

    fn mask(&self, k: &mut MdArray<R>) {
        let np = self.dims.pixels();
        let nc = self.dims.coils;
        let p = self.pattern.as_slice();
        for (j, chunk) in k.as_mut_slice().chunks_mut(np).enumerate() {
            let pb = &p[np * (j / nc)..][..np];
            for (z, &w) in chunk.iter_mut().zip(pb) {
                *z = *z * w.re;
            }
        }
    }

    /// `y = P·F·C x`.
    pub fn forward(&self, x: &MdArray<R>) -> Result<MdArray<R>> {
        let mut k = self.expand(x)?;
        self.plan.apply_inplace(&mut k, Direction::Forward)?;
        self.mask(&mut k);
        Ok(k)
    }

    /// `x = Cᴴ·Fᴴ·P y`.
    pub fn adjoint(&self, y: &MdArray<R>) -> Result<MdArray<R>> {
        y.require_dims(&self.dims.kspace(), "SENSE k-space")?;
        let mut k = y.clone();
        self.mask(&mut k);
        self.plan.apply_inplace(&mut k, Direction::Inverse)?;
        self.combine(&k)
    }

    /// `AᴴA x`.
    pub fn normal(&self, x: &MdArray<R>) -> Result<MdArray<R>> {
        let mut k = self.expand(x)?;
        self.plan.apply_inplace(&mut k, Direction::Forward)?;
        self.mask(&mut k);
        self.plan.apply_inplace(&mut k, Direction::Inverse)?;
        self.combine(&k)
    }

    /// The coil multiplication `C` alone, images to coil images
    /// `[nx, ny, nc, B]`.
    pub fn coil_linop(&self) -> Linop<R> {
        let (f, a) = (self.clone(), self.clone());
        Linop::from_fns(
            &self.dims.image(),
            &self.dims.kspace(),
            move |x| f.expand(x),
            move |y| {
                y.require_dims(&a.dims.kspace(), "coil images")?;
                a.combine(y)
            },
        )
    }

    pub fn linop(&self) -> Linop<R> {
        let (f, a, n) = (self.clone(), self.clone(), self.clone());
        Linop::new(SenseLinop {
            dims: [self.dims.image(), self.dims.kspace()],
            forward: f,
            adjoint: a,
            normal: n,
        })
    }
}

struct SenseLinop<R: Real> {
    dims: [Vec<usize>; 2],
    forward: SenseModel<R>,
    adjoint: SenseModel<R>,
    normal: SenseModel<R>,
}

impl<R: Real> crate::linop::LinearOperator<R> for SenseLinop<R> {
    fn in_dims(&self) -> &[usize] {
        &self.dims[0]
    }
    fn out_dims(&self) -> &[usize] {
        &self.dims[1]
    }
    fn forward(&self, x: &MdArray<R>) -> Result<MdArray<R>> {
        self.forward.forward(x)
    }
    fn adjoint(&self, y: &MdArray<R>) -> Result<MdArray<R>> {
        self.adjoint.adjoint(y)
    }
    fn normal(&self, x: &MdArray<R>) -> Result<MdArray<R>> {
        self.normal.normal(x)
    }
}

/// The SENSE operator for fixed coils and pattern, as a linop from images
/// `[nx, ny, M, B]` to k-space `[nx, ny, nc, B]`.
pub fn build_sense<R: Real>(coils: &MdArray<R>, pattern: &MdArray<R>) -> Result<Linop<R>> {
    Ok(SenseModel::new(coils.clone(), pattern.clone())?.linop())
}

/// Adjoint reconstruction `x⁰ = Aᴴy`.
pub fn adjoint_recon<R: Real>(a: &Linop<R>, y: &MdArray<R>) -> Result<MdArray<R>> {
    if y.dims() != a.out_dims() {
        return Err(mismatch(a.out_dims(), y.dims(), "adjoint reconstruction"));
    }
    a.adjoint(y)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Which {
    Normal,
    Adjoint,
    Forward,
}

/// SENSE operators with coils and pattern as (non-differentiable) inputs.
struct SenseOp<R: Real> {
    which: Which,
    dims: [Vec<Vec<usize>>; 2],
    state: EvalState<SenseModel<R>>,
}

impl<R: Real> SenseOp<R> {
    fn model(&self, coils: &MdArray<R>, pattern: &MdArray<R>) -> Result<SenseModel<R>> {
        SenseModel::new(coils.clone(), pattern.clone())
    }

    fn apply(&self, s: &SenseModel<R>, x: &MdArray<R>) -> Result<MdArray<R>> {
        match self.which {
            Which::Normal => s.normal(x),
            Which::Adjoint => s.adjoint(x),
            Which::Forward => s.forward(x),
        }
    }

    fn apply_adjoint(&self, s: &SenseModel<R>, y: &MdArray<R>) -> Result<MdArray<R>> {
        match self.which {
            Which::Normal => s.normal(y),
            Which::Adjoint => s.forward(y),
            Which::Forward => s.adjoint(y),
        }
    }
}

impl<R: Real> Operator<R> for SenseOp<R> {
    fn name(&self) -> &str {
        match self.which {
            Which::Normal => "sense_normal",
            Which::Adjoint => "sense_adjoint",
            Which::Forward => "sense_forward",
        }
    }
    fn input_dims(&self) -> &[Vec<usize>] {
        &self.dims[0]
    }
    fn output_dims(&self) -> &[Vec<usize>] {
        &self.dims[1]
    }
    fn forward(&self, x: &[&MdArray<R>], ctx: Ctx) -> Result<Vec<MdArray<R>>> {
        let s = self.model(x[1], x[2])?;
        let y = self.apply(&s, x[0])?;
        self.state.update(ctx, || s);
        Ok(vec![y])
    }
    fn derivative(&self, _o: usize, i: usize, dx: &MdArray<R>) -> Result<MdArray<R>> {
        if i != 0 {
            return Err(Error::NotDifferentiable(i));
        }
        self.apply(&*self.state.get()?, dx)
    }
    fn adjoint_derivative(&self, _o: usize, i: usize, dy: &MdArray<R>) -> Result<MdArray<R>> {
        if i != 0 {
            return Err(Error::NotDifferentiable(i));
        }
        self.apply_adjoint(&*self.state.get()?, dy)
    }
    fn differentiable(&self, i: usize) -> bool {
        i == 0
    }
    fn holomorphic(&self) -> bool {
        true
    }
    fn clear_state(&self) {
        self.state.clear()
    }
}

fn sense_op<R: Real>(which: Which, d: &SenseDims) -> Nlop<R> {
    let (a, b) = match which {
        Which::Normal => (d.image(), d.image()),
        Which::Adjoint => (d.kspace(), d.image()),
        Which::Forward => (d.image(), d.kspace()),
    };
    Nlop::new(SenseOp {
        which,
        dims: [vec![a, d.coil_maps(), d.pattern()], vec![b]],
        state: EvalState::new(),
    })
}

/// `(x, coils, pattern) ↦ AᴴA x`.
pub fn sense_normal_nlop<R: Real>(d: &SenseDims) -> Nlop<R> {
    sense_op(Which::Normal, d)
}

/// `(y, coils, pattern) ↦ Aᴴ y`.
pub fn sense_adjoint_nlop<R: Real>(d: &SenseDims) -> Nlop<R> {
    sense_op(Which::Adjoint, d)
}

/// `(x, coils, pattern) ↦ A x`.
pub fn sense_forward_nlop<R: Real>(d: &SenseDims) -> Nlop<R> {
    sense_op(Which::Forward, d)
}
