//! Generic strided loops ("md-functions").
//!
//! Every md-function iterates over all positions `p` of an iteration domain
//! `dims` and applies a scalar kernel to the elements at offsets `p·s` of its
//! arguments. Dimension 0 is the innermost loop; for a fixed output element,
//! contributions are therefore accumulated in lexicographic order of the
//! reduced positions with the lowest dimension running fastest. Size-one
//! dimensions are dropped and adjacent dimensions that are contiguous in all
//! arguments are merged; neither changes the visiting order.

use crate::error::{Error, Result};
use crate::exec;
use crate::real::{Cplx, Real};

use super::kernel::{self, KernelClass};

/// Read-only strided argument of an md-function.
#[derive(Clone, Copy, Debug)]
pub struct Src<'a, R: Real> {
    pub data: &'a [Cplx<R>],
    pub offset: usize,
    pub strides: &'a [isize],
}

impl<'a, R: Real> Src<'a, R> {
    pub fn new(data: &'a [Cplx<R>], offset: usize, strides: &'a [isize]) -> Self {
        Self {
            data,
            offset,
            strides,
        }
    }
}

/// Written strided argument of an md-function.
#[derive(Debug)]
pub struct Dst<'a, R: Real> {
    pub data: &'a mut [Cplx<R>],
    pub offset: usize,
    pub strides: &'a [isize],
}

impl<'a, R: Real> Dst<'a, R> {
    pub fn new(data: &'a mut [Cplx<R>], offset: usize, strides: &'a [isize]) -> Self {
        Self {
            data,
            offset,
            strides,
        }
    }
}

/// Scalar kernel applied at every position of the iteration domain.
pub(crate) trait Kernel<R: Real>: std::marker::Copy + Send + Sync {
    fn apply(self, a: &mut Cplx<R>, b: Cplx<R>, c: Cplx<R>);

    /// Kernels of the form `a += b · f(c)` may use specialized loops.
    fn is_mac(self) -> bool {
        false
    }

    fn conj_c(self) -> bool {
        false
    }
}

#[derive(Clone, Copy)]
pub(crate) struct Fmac;
#[derive(Clone, Copy)]
pub(crate) struct Zfmacc;
#[derive(Clone, Copy)]
pub(crate) struct Acc;
#[derive(Clone, Copy)]
pub(crate) struct Assign;
#[derive(Clone, Copy)]
pub(crate) struct Add;
#[derive(Clone, Copy)]
pub(crate) struct Sub;
#[derive(Clone, Copy)]
pub(crate) struct Mul;
#[derive(Clone, Copy)]
pub(crate) struct Smul<R: Real>(pub Cplx<R>);

#[inline(always)]
pub(crate) fn cmul<R: Real>(b: Cplx<R>, c: Cplx<R>) -> Cplx<R> {
    Cplx::new(b.re * c.re - b.im * c.im, b.re * c.im + b.im * c.re)
}

impl<R: Real> Kernel<R> for Fmac {
    #[inline(always)]
    fn apply(self, a: &mut Cplx<R>, b: Cplx<R>, c: Cplx<R>) {
        *a = *a + cmul(b, c);
    }
    fn is_mac(self) -> bool {
        true
    }
}

impl<R: Real> Kernel<R> for Zfmacc {
    #[inline(always)]
    fn apply(self, a: &mut Cplx<R>, b: Cplx<R>, c: Cplx<R>) {
        *a = *a + cmul(b, c.conj());
    }
    fn is_mac(self) -> bool {
        true
    }
    fn conj_c(self) -> bool {
        true
    }
}

impl<R: Real> Kernel<R> for Acc {
    #[inline(always)]
    fn apply(self, a: &mut Cplx<R>, b: Cplx<R>, _c: Cplx<R>) {
        *a = *a + b;
    }
}

impl<R: Real> Kernel<R> for Assign {
    #[inline(always)]
    fn apply(self, a: &mut Cplx<R>, b: Cplx<R>, _c: Cplx<R>) {
        *a = b;
    }
}

impl<R: Real> Kernel<R> for Add {
    #[inline(always)]
    fn apply(self, a: &mut Cplx<R>, b: Cplx<R>, c: Cplx<R>) {
        *a = b + c;
    }
}

impl<R: Real> Kernel<R> for Sub {
    #[inline(always)]
    fn apply(self, a: &mut Cplx<R>, b: Cplx<R>, c: Cplx<R>) {
        *a = b - c;
    }
}

impl<R: Real> Kernel<R> for Mul {
    #[inline(always)]
    fn apply(self, a: &mut Cplx<R>, b: Cplx<R>, c: Cplx<R>) {
        *a = cmul(b, c);
    }
}

impl<R: Real> Kernel<R> for Smul<R> {
    #[inline(always)]
    fn apply(self, a: &mut Cplx<R>, b: Cplx<R>, _c: Cplx<R>) {
        *a = cmul(b, self.0);
    }
}

/// Iteration domain after dropping unit dimensions and merging contiguous ones.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Loops {
    pub dims: Vec<usize>,
    pub sa: Vec<isize>,
    pub sb: Vec<isize>,
    pub sc: Vec<isize>,
}

impl Loops {
    pub(crate) fn simplify(dims: &[usize], sa: &[isize], sb: &[isize], sc: &[isize]) -> Self {
        let mut out = Loops {
            dims: Vec::with_capacity(dims.len()),
            sa: Vec::new(),
            sb: Vec::new(),
            sc: Vec::new(),
        };
        for i in 0..dims.len() {
            if dims[i] == 1 {
                continue;
            }
            if let Some(last) = out.dims.len().checked_sub(1) {
                let d = out.dims[last] as isize;
                if sa[i] == out.sa[last] * d && sb[i] == out.sb[last] * d && sc[i] == out.sc[last] * d
                {
                    out.dims[last] *= dims[i];
                    continue;
                }
            }
            out.dims.push(dims[i]);
            out.sa.push(sa[i]);
            out.sb.push(sb[i]);
            out.sc.push(sc[i]);
        }
        out
    }

}

/// Smallest and largest offset reachable from `offset` over `dims`.
pub(crate) fn reach(dims: &[usize], strides: &[isize], offset: usize) -> (isize, isize) {
    let mut lo = offset as isize;
    let mut hi = offset as isize;
    for (&d, &s) in dims.iter().zip(strides) {
        let span = (d as isize - 1) * s;
        if span > 0 {
            hi += span;
        } else {
            lo += span;
        }
    }
    (lo, hi)
}

pub(crate) fn check_bounds(dims: &[usize], strides: &[isize], offset: usize, len: usize) -> Result<()> {
    if strides.len() != dims.len() {
        return Err(Error::InvalidShape(format!(
            "{} strides for {} dimensions",
            strides.len(),
            dims.len()
        )));
    }
    let (lo, hi) = reach(dims, strides, offset);
    if lo < 0 {
        return Err(Error::OutOfBounds { offset: lo, len });
    }
    if hi >= len as isize {
        return Err(Error::OutOfBounds { offset: hi, len });
    }
    Ok(())
}

/// Plain strided loop nest. Offsets must have been bounds-checked.
pub(crate) fn generic_loop<R: Real, K: Kernel<R>>(
    l: &Loops,
    a: &mut [Cplx<R>],
    oa: isize,
    b: &[Cplx<R>],
    ob: isize,
    c: &[Cplx<R>],
    oc: isize,
    k: K,
) {
    let n = l.dims.len();
    if n == 0 {
        k.apply(&mut a[oa as usize], b[ob as usize], c[oc as usize]);
        return;
    }
    let d0 = l.dims[0];
    let (sa0, sb0, sc0) = (l.sa[0], l.sb[0], l.sc[0]);
    let mut idx = vec![0usize; n];
    let (mut pa, mut pb, mut pc) = (oa, ob, oc);
    loop {
        let (mut ia, mut ib, mut ic) = (pa, pb, pc);
        for _ in 0..d0 {
            k.apply(&mut a[ia as usize], b[ib as usize], c[ic as usize]);
            ia += sa0;
            ib += sb0;
            ic += sc0;
        }
        let mut dim = 1;
        loop {
            if dim == n {
                return;
            }
            idx[dim] += 1;
            pa += l.sa[dim];
            pb += l.sb[dim];
            pc += l.sc[dim];
            if idx[dim] < l.dims[dim] {
                break;
            }
            let d = l.dims[dim] as isize;
            pa -= l.sa[dim] * d;
            pb -= l.sb[dim] * d;
            pc -= l.sc[dim] * d;
            idx[dim] = 0;
            dim += 1;
        }
    }
}

/// Picks a dimension along which the written regions are disjoint, contiguous
/// blocks of the output buffer.
fn split_dim(l: &Loops) -> Option<usize> {
    let (k, &sk) = l
        .sa
        .iter()
        .enumerate()
        .filter(|(i, _)| l.dims[*i] > 1)
        .max_by_key(|(_, s)| **s)?;
    if sk <= 0 {
        return None;
    }
    let mut span = 0isize;
    for i in 0..l.dims.len() {
        if i == k {
            continue;
        }
        if l.sa[i] < 0 {
            return None;
        }
        span += (l.dims[i] as isize - 1) * l.sa[i];
    }
    (span < sk).then_some(k)
}

type Exec<'f, R> = dyn Fn(&Loops, &mut [Cplx<R>], isize, &[Cplx<R>], isize, &[Cplx<R>], isize) + Sync + 'f;

/// Runs `exec` over the domain, splitting across workers along a disjoint
/// output dimension when possible.
fn dispatch<R: Real>(
    l: &Loops,
    a: &mut [Cplx<R>],
    oa: usize,
    b: &[Cplx<R>],
    ob: usize,
    c: &[Cplx<R>],
    oc: usize,
    exec_fn: &Exec<'_, R>,
) {
    let work: usize = l.dims.iter().product();
    if exec::parallel_enabled() && work >= exec::PAR_THRESHOLD {
        if let Some(k) = split_dim(l) {
            let (sk, sbk, sck) = (l.sa[k] as usize, l.sb[k], l.sc[k]);
            let dk = l.dims[k];
            let group = dk.div_ceil(4 * exec::num_threads()).max(1);
            let region = &mut a[oa..];
            exec::for_each_chunk_mut(region, sk * group, work, |i, chunk| {
                let first = i * group;
                if first >= dk {
                    return;
                }
                let mut sub = l.clone();
                sub.dims[k] = group.min(dk - first);
                exec_fn(
                    &sub,
                    chunk,
                    0,
                    b,
                    ob as isize + first as isize * sbk,
                    c,
                    oc as isize + first as isize * sck,
                );
            });
            return;
        }
    }
    exec_fn(l, a, oa as isize, b, ob as isize, c, oc as isize);
}

fn check_all<R: Real>(dims: &[usize], a: &Dst<'_, R>, b: &Src<'_, R>, c: &Src<'_, R>) -> Result<()> {
    check_bounds(dims, a.strides, a.offset, a.data.len())?;
    check_bounds(dims, b.strides, b.offset, b.data.len())?;
    check_bounds(dims, c.strides, c.offset, c.data.len())?;
    Ok(())
}

pub(crate) fn run<R: Real, K: Kernel<R>>(
    dims: &[usize],
    a: Dst<'_, R>,
    b: Src<'_, R>,
    c: Src<'_, R>,
    k: K,
    specialize: bool,
) -> Result<()> {
    if dims.iter().any(|&d| d == 0) {
        return Ok(());
    }
    check_all(dims, &a, &b, &c)?;
    let l = Loops::simplify(dims, a.strides, b.strides, c.strides);
    if specialize && k.is_mac() {
        let conj = k.conj_c();
        let f = move |l: &Loops,
                      a: &mut [Cplx<R>],
                      oa: isize,
                      b: &[Cplx<R>],
                      ob: isize,
                      c: &[Cplx<R>],
                      oc: isize| {
            kernel::execute_mac(l, a, oa, b, ob, c, oc, conj);
        };
        dispatch(&l, a.data, a.offset, b.data, b.offset, c.data, c.offset, &f);
    } else {
        let f = move |l: &Loops,
                      a: &mut [Cplx<R>],
                      oa: isize,
                      b: &[Cplx<R>],
                      ob: isize,
                      c: &[Cplx<R>],
                      oc: isize| generic_loop(l, a, oa, b, ob, c, oc, k);
        dispatch(&l, a.data, a.offset, b.data, b.offset, c.data, c.offset, &f);
    }
    Ok(())
}

fn unused<'a, R: Real>(b: &Src<'a, R>, zeros: &'a [isize]) -> Src<'a, R> {
    // one-input kernels never read `c`; alias `b` with zero strides
    Src {
        data: b.data,
        offset: b.offset,
        strides: zeros,
    }
}

/// `a[p·sa] += b[p·sb] · c[p·sc]` for all `p` in `dims`.
pub fn md_fmac2<R: Real>(dims: &[usize], a: Dst<'_, R>, b: Src<'_, R>, c: Src<'_, R>) -> Result<()> {
    run(dims, a, b, c, Fmac, true)
}

/// Same as [`md_fmac2`] but always on the generic loop nest.
pub fn md_fmac2_generic<R: Real>(
    dims: &[usize],
    a: Dst<'_, R>,
    b: Src<'_, R>,
    c: Src<'_, R>,
) -> Result<()> {
    run(dims, a, b, c, Fmac, false)
}

/// `a[p·sa] += b[p·sb] · conj(c[p·sc])`.
pub fn md_zfmacc2<R: Real>(dims: &[usize], a: Dst<'_, R>, b: Src<'_, R>, c: Src<'_, R>) -> Result<()> {
    run(dims, a, b, c, Zfmacc, true)
}

pub fn md_zfmacc2_generic<R: Real>(
    dims: &[usize],
    a: Dst<'_, R>,
    b: Src<'_, R>,
    c: Src<'_, R>,
) -> Result<()> {
    run(dims, a, b, c, Zfmacc, false)
}

/// `a = b + c`.
pub fn md_add2<R: Real>(dims: &[usize], a: Dst<'_, R>, b: Src<'_, R>, c: Src<'_, R>) -> Result<()> {
    run(dims, a, b, c, Add, false)
}

/// `a = b - c`.
pub fn md_sub2<R: Real>(dims: &[usize], a: Dst<'_, R>, b: Src<'_, R>, c: Src<'_, R>) -> Result<()> {
    run(dims, a, b, c, Sub, false)
}

/// `a = b · c`.
pub fn md_mul2<R: Real>(dims: &[usize], a: Dst<'_, R>, b: Src<'_, R>, c: Src<'_, R>) -> Result<()> {
    run(dims, a, b, c, Mul, false)
}

/// `a = b`.
pub fn md_copy2<R: Real>(dims: &[usize], a: Dst<'_, R>, b: Src<'_, R>) -> Result<()> {
    let zeros = vec![0isize; dims.len()];
    let c = unused(&b, &zeros);
    run(dims, a, b, c, Assign, false)
}

/// `a += b`; with zero strides in `a` this sums over those dimensions.
pub fn md_acc2<R: Real>(dims: &[usize], a: Dst<'_, R>, b: Src<'_, R>) -> Result<()> {
    let zeros = vec![0isize; dims.len()];
    let c = unused(&b, &zeros);
    run(dims, a, b, c, Acc, false)
}

/// `a = s · b`.
pub fn md_smul2<R: Real>(dims: &[usize], a: Dst<'_, R>, b: Src<'_, R>, s: Cplx<R>) -> Result<()> {
    let zeros = vec![0isize; dims.len()];
    let c = unused(&b, &zeros);
    run(dims, a, b, c, Smul(s), false)
}

/// Classifies the stride pattern of a multiply-accumulate call.
pub fn detect_kernel_class(dims: &[usize], sa: &[isize], sb: &[isize], sc: &[isize]) -> KernelClass {
    if sa.len() != dims.len() || sb.len() != dims.len() || sc.len() != dims.len() {
        return KernelClass::Generic;
    }
    kernel::classify(&Loops::simplify(dims, sa, sb, sc))
}
