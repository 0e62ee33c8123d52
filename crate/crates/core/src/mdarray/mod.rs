//! Multidimensional arrays of complex scalars with element strides.
//!
//! An owned [`MdArray`] always stores its elements contiguously in
//! column-major order. Views ([`MdView`], [`MdViewMut`]) borrow the buffer
//! of an array and describe an arbitrary strided window of it: the element
//! at multi-index `p` lives at `offset + p·s`. Transposes, broadcasts and
//! sub-arrays are views; none of them copies.

mod engine;
mod fft;
mod kernel;

pub use engine::{
    detect_kernel_class, md_acc2, md_add2, md_copy2, md_fmac2, md_fmac2_generic, md_mul2,
    md_smul2, md_sub2, md_zfmacc2, md_zfmacc2_generic, Dst, Src,
};
pub use fft::{dft, DftPlan, Direction};
pub use kernel::KernelClass;

use crate::error::{mismatch, Error, Result};
use crate::real::{Cplx, Real};

/// Maximum supported rank.
pub const MAX_RANK: usize = 16;

/// Column-major strides (in elements) for `dims`.
pub fn default_strides(dims: &[usize]) -> Result<Vec<isize>> {
    if dims.is_empty() {
        return Err(Error::InvalidShape("empty dimension vector".into()));
    }
    if let Some(i) = dims.iter().position(|&d| d == 0) {
        return Err(Error::InvalidShape(format!("dimension {i} is zero")));
    }
    let mut s = Vec::with_capacity(dims.len());
    let mut acc = 1isize;
    for &d in dims {
        s.push(acc);
        acc *= d as isize;
    }
    Ok(s)
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() > MAX_RANK {
        return Err(Error::InvalidShape(format!(
            "rank {} exceeds {MAX_RANK}",
            dims.len()
        )));
    }
    default_strides(dims).map(|_| ())
}

/// Owned contiguous array.
#[derive(Clone, Debug, PartialEq)]
pub struct MdArray<R: Real = f32> {
    dims: Vec<usize>,
    data: Vec<Cplx<R>>,
}

impl<R: Real> MdArray<R> {
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        let n = dims.iter().product();
        Ok(Self {
            dims: dims.to_vec(),
            data: vec![crate::real::zero(); n],
        })
    }

    pub fn filled(dims: &[usize], value: Cplx<R>) -> Result<Self> {
        let mut a = Self::zeros(dims)?;
        a.data.fill(value);
        Ok(a)
    }

    pub fn from_vec(dims: &[usize], data: Vec<Cplx<R>>) -> Result<Self> {
        check_dims(dims)?;
        let n: usize = dims.iter().product();
        if data.len() != n {
            return Err(Error::InvalidShape(format!(
                "{} elements for dimensions {dims:?}",
                data.len()
            )));
        }
        Ok(Self {
            dims: dims.to_vec(),
            data,
        })
    }

    /// Builds an array from real values (zero imaginary parts).
    pub fn from_real(dims: &[usize], values: &[R]) -> Result<Self> {
        Self::from_vec(
            dims,
            values.iter().map(|&x| Cplx::new(x, R::zero())).collect(),
        )
    }

    pub fn scalar(value: Cplx<R>) -> Self {
        Self {
            dims: vec![1],
            data: vec![value],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn strides(&self) -> Vec<isize> {
        default_strides(&self.dims).expect("validated at construction")
    }

    pub fn as_slice(&self) -> &[Cplx<R>] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Cplx<R>] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Cplx<R>> {
        self.data
    }

    fn linear_index(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.dims.len() {
            return Err(mismatch(&self.dims, idx, "multi-index rank"));
        }
        let mut o = 0;
        let mut s = 1;
        for (&i, &d) in idx.iter().zip(&self.dims) {
            if i >= d {
                return Err(Error::IndexOutOfRange {
                    what: "array dimension",
                    index: i,
                    len: d,
                });
            }
            o += i * s;
            s *= d;
        }
        Ok(o)
    }

    pub fn get(&self, idx: &[usize]) -> Result<Cplx<R>> {
        Ok(self.data[self.linear_index(idx)?])
    }

    pub fn set(&mut self, idx: &[usize], value: Cplx<R>) -> Result<()> {
        let o = self.linear_index(idx)?;
        self.data[o] = value;
        Ok(())
    }

    /// Reinterprets the buffer with new dimensions of the same total size.
    pub fn reshape(mut self, dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        if dims.iter().product::<usize>() != self.len() {
            return Err(mismatch(&self.dims, dims, "reshape"));
        }
        self.dims = dims.to_vec();
        Ok(self)
    }

    pub fn require_dims(&self, dims: &[usize], context: &str) -> Result<()> {
        if self.dims != dims {
            return Err(mismatch(dims, &self.dims, context));
        }
        Ok(())
    }

    pub fn cast<S: Real>(&self) -> MdArray<S> {
        MdArray {
            dims: self.dims.clone(),
            data: self
                .data
                .iter()
                .map(|z| {
                    Cplx::new(
                        S::from_f64_lossy(z.re.to_f64_lossy()),
                        S::from_f64_lossy(z.im.to_f64_lossy()),
                    )
                })
                .collect(),
        }
    }

    pub fn view(&self) -> MdView<'_, R> {
        MdView {
            data: &self.data,
            offset: 0,
            dims: self.dims.clone(),
            strides: self.strides(),
        }
    }

    pub fn view_mut(&mut self) -> MdViewMut<'_, R> {
        let strides = self.strides();
        MdViewMut {
            dims: self.dims.clone(),
            data: &mut self.data,
            offset: 0,
            strides,
        }
    }

    /// Strided view sharing this array's buffer.
    pub fn make_view(&self, dims: &[usize], strides: &[isize], offset: usize) -> Result<MdView<'_, R>> {
        MdView::new(&self.data, dims, strides, offset)
    }

    pub fn make_view_mut(
        &mut self,
        dims: &[usize],
        strides: &[isize],
        offset: usize,
    ) -> Result<MdViewMut<'_, R>> {
        MdViewMut::new(&mut self.data, dims, strides, offset)
    }

    // Elementwise helpers used throughout the operator code.

    pub fn map(&self, f: impl Fn(Cplx<R>) -> Cplx<R>) -> Self {
        Self {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn map_inplace(&mut self, f: impl Fn(Cplx<R>) -> Cplx<R>) {
        for z in &mut self.data {
            *z = f(*z);
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(Cplx<R>, Cplx<R>) -> Cplx<R>) -> Result<Self> {
        other.require_dims(&self.dims, "elementwise operation")?;
        Ok(Self {
            dims: self.dims.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: Cplx<R>) -> Self {
        self.map(|z| z * s)
    }

    pub fn scale_real(&self, s: R) -> Self {
        self.map(|z| z * s)
    }

    /// `self += s · x`.
    pub fn axpy(&mut self, s: Cplx<R>, x: &Self) -> Result<()> {
        x.require_dims(&self.dims, "axpy")?;
        for (a, &b) in self.data.iter_mut().zip(&x.data) {
            *a = *a + b * s;
        }
        Ok(())
    }

    pub fn add_assign(&mut self, x: &Self) -> Result<()> {
        x.require_dims(&self.dims, "accumulate")?;
        for (a, &b) in self.data.iter_mut().zip(&x.data) {
            *a = *a + b;
        }
        Ok(())
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn real_part(&self) -> Self {
        self.map(|z| Cplx::new(z.re, R::zero()))
    }

    /// Complex inner product `Σ conj(self_i)·other_i`.
    pub fn dot(&self, other: &Self) -> Result<Cplx<R>> {
        other.require_dims(&self.dims, "inner product")?;
        let mut acc = crate::real::zero();
        for (&a, &b) in self.data.iter().zip(&other.data) {
            acc = acc + a.conj() * b;
        }
        Ok(acc)
    }

    pub fn norm_sqr(&self) -> R {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> R {
        self.norm_sqr().sqrt()
    }

    pub fn max_abs(&self) -> R {
        self.data.iter().fold(R::zero(), |m, z| m.max(z.norm()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Copies indices `start..start+count` of the last dimension.
    pub fn slice_last(&self, start: usize, count: usize) -> Result<Self> {
        let last = *self.dims.last().expect("rank >= 1");
        if start + count > last || count == 0 {
            return Err(Error::IndexOutOfRange {
                what: "last dimension",
                index: start + count,
                len: last,
            });
        }
        let inner: usize = self.dims[..self.dims.len() - 1].iter().product();
        let mut dims = self.dims.clone();
        *dims.last_mut().unwrap() = count;
        Ok(Self {
            dims,
            data: self.data[start * inner..(start + count) * inner].to_vec(),
        })
    }

    /// Gathers the given indices of the last dimension, in order.
    pub fn gather_last(&self, indices: &[usize]) -> Result<Self> {
        let last = *self.dims.last().expect("rank >= 1");
        let inner: usize = self.dims[..self.dims.len() - 1].iter().product();
        let mut data = Vec::with_capacity(inner * indices.len());
        for &i in indices {
            if i >= last {
                return Err(Error::IndexOutOfRange {
                    what: "last dimension",
                    index: i,
                    len: last,
                });
            }
            data.extend_from_slice(&self.data[i * inner..(i + 1) * inner]);
        }
        let mut dims = self.dims.clone();
        *dims.last_mut().unwrap() = indices.len();
        Self::from_vec(&dims, data)
    }

    /// Zero-padded copy: `self` lands at `offset` inside an array of `dims`.
    pub fn pad(&self, dims: &[usize], offset: &[usize]) -> Result<Self> {
        let mut out = Self::zeros(dims)?;
        let st = out.window(&self.dims, offset)?;
        let ss = self.strides();
        let s = out.strides();
        md_copy2(
            &self.dims,
            Dst::new(&mut out.data, st, &s),
            Src::new(&self.data, 0, &ss),
        )?;
        Ok(out)
    }

    /// Copy of the window of size `dims` starting at `offset`.
    pub fn crop(&self, dims: &[usize], offset: &[usize]) -> Result<Self> {
        let mut out = Self::zeros(dims)?;
        let st = self.window(dims, offset)?;
        let s = self.strides();
        let os = out.strides();
        md_copy2(dims, Dst::new(&mut out.data, 0, &os), Src::new(&self.data, st, &s))?;
        Ok(out)
    }

    fn window(&self, dims: &[usize], offset: &[usize]) -> Result<usize> {
        if dims.len() != self.dims.len() || offset.len() != self.dims.len() {
            return Err(mismatch(&self.dims, dims, "window rank"));
        }
        if dims.iter().zip(offset).zip(&self.dims).any(|((&d, &o), &n)| d + o > n) {
            return Err(mismatch(&self.dims, dims, "window exceeds array"));
        }
        Ok(self.strides().iter().zip(offset).map(|(&s, &o)| s as usize * o).sum())
    }

    /// Concatenates arrays along their last dimension.
    pub fn concat_last(parts: &[Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidShape("nothing to concatenate".into()))?;
        let head = &first.dims[..first.dims.len() - 1];
        let mut data = Vec::new();
        let mut total = 0;
        for p in parts {
            if &p.dims[..p.dims.len() - 1] != head || p.dims.len() != first.dims.len() {
                return Err(mismatch(&first.dims, &p.dims, "concatenation"));
            }
            total += p.dims[p.dims.len() - 1];
            data.extend_from_slice(&p.data);
        }
        let mut dims = first.dims.clone();
        *dims.last_mut().unwrap() = total;
        Self::from_vec(&dims, data)
    }
}

fn view_check(len: usize, dims: &[usize], strides: &[isize], offset: usize) -> Result<()> {
    check_dims(dims)?;
    engine::check_bounds(dims, strides, offset, len)
}

/// Borrowed strided view.
#[derive(Clone, Debug)]
pub struct MdView<'a, R: Real = f32> {
    data: &'a [Cplx<R>],
    offset: usize,
    dims: Vec<usize>,
    strides: Vec<isize>,
}

impl<'a, R: Real> MdView<'a, R> {
    pub fn new(data: &'a [Cplx<R>], dims: &[usize], strides: &[isize], offset: usize) -> Result<Self> {
        view_check(data.len(), dims, strides, offset)?;
        Ok(Self {
            data,
            offset,
            dims: dims.to_vec(),
            strides: strides.to_vec(),
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn strides(&self) -> &[isize] {
        &self.strides
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn buffer(&self) -> &'a [Cplx<R>] {
        self.data
    }

    fn index(&self, idx: &[usize]) -> Result<usize> {
        strided_index(&self.dims, &self.strides, self.offset, idx)
    }

    pub fn get(&self, idx: &[usize]) -> Result<Cplx<R>> {
        Ok(self.data[self.index(idx)?])
    }

    /// View of a sub-window: `dims`, `strides` and `offset` relative to this view.
    pub fn make_view(&self, dims: &[usize], strides: &[isize], offset: usize) -> Result<MdView<'a, R>> {
        MdView::new(self.data, dims, strides, self.offset + offset)
    }

    pub fn src(&self) -> Src<'_, R> {
        Src::new(self.data, self.offset, &self.strides)
    }

    pub fn to_owned(&self) -> MdArray<R> {
        let mut out = MdArray::zeros(&self.dims).expect("view dims are valid");
        let os = out.strides();
        md_copy2(&self.dims, Dst::new(&mut out.data, 0, &os), self.src()).expect("bounds checked");
        out
    }
}

/// Mutable borrowed strided view.
#[derive(Debug)]
pub struct MdViewMut<'a, R: Real = f32> {
    data: &'a mut [Cplx<R>],
    offset: usize,
    dims: Vec<usize>,
    strides: Vec<isize>,
}

impl<'a, R: Real> MdViewMut<'a, R> {
    pub fn new(data: &'a mut [Cplx<R>], dims: &[usize], strides: &[isize], offset: usize) -> Result<Self> {
        view_check(data.len(), dims, strides, offset)?;
        Ok(Self {
            data,
            offset,
            dims: dims.to_vec(),
            strides: strides.to_vec(),
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn strides(&self) -> &[isize] {
        &self.strides
    }

    pub fn get(&self, idx: &[usize]) -> Result<Cplx<R>> {
        Ok(self.data[strided_index(&self.dims, &self.strides, self.offset, idx)?])
    }

    pub fn set(&mut self, idx: &[usize], value: Cplx<R>) -> Result<()> {
        let o = strided_index(&self.dims, &self.strides, self.offset, idx)?;
        self.data[o] = value;
        Ok(())
    }

    pub fn dst(&mut self) -> Dst<'_, R> {
        Dst::new(self.data, self.offset, &self.strides)
    }

    /// Copies `src` (same dims) into the viewed elements.
    pub fn assign(&mut self, src: &MdView<'_, R>) -> Result<()> {
        if src.dims() != self.dims.as_slice() {
            return Err(mismatch(&self.dims, src.dims(), "view assignment"));
        }
        let dims = self.dims.clone();
        md_copy2(&dims, self.dst(), src.src())
    }
}

fn strided_index(dims: &[usize], strides: &[isize], offset: usize, idx: &[usize]) -> Result<usize> {
    if idx.len() != dims.len() {
        return Err(mismatch(dims, idx, "multi-index rank"));
    }
    let mut o = offset as isize;
    for ((&i, &d), &s) in idx.iter().zip(dims).zip(strides) {
        if i >= d {
            return Err(Error::IndexOutOfRange {
                what: "view dimension",
                index: i,
                len: d,
            });
        }
        o += i as isize * s;
    }
    Ok(o as usize)
}
