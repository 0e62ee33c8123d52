//! Stride-pattern detection and specialized multiply-accumulate loops.
//!
//! Every specialized loop visits, for each output element, the reduced
//! positions in the same order as the generic loop nest, so results are
//! bitwise identical to it in deterministic mode.

use crate::exec;
use crate::real::{Cplx, Real};

use super::engine::{cmul, generic_loop, Fmac, Loops, Zfmacc};

/// Operation recognized from the strides of a multiply-accumulate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelClass {
    Generic,
    /// `a[0] += Σ b[i]·c[i]`
    Dot,
    /// `a[m,n] += Σ_k b[m,k]·c[k,n]`, including matrix-vector products.
    MatMul,
    /// Sliding window: `b` is read at the same stride along an output
    /// dimension and a kernel dimension.
    Convolution,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    M,
    K,
    N,
}

fn roles(l: &Loops) -> Option<Vec<Role>> {
    l.dims
        .iter()
        .enumerate()
        .map(|(i, _)| match (l.sa[i] == 0, l.sb[i] == 0, l.sc[i] == 0) {
            (false, false, true) => Some(Role::M),
            (true, false, false) => Some(Role::K),
            (false, true, false) => Some(Role::N),
            _ => None,
        })
        .collect()
}

pub(crate) fn classify(l: &Loops) -> KernelClass {
    let n = l.dims.len();
    if n == 1 && l.sa[0] == 0 && l.sb[0] != 0 && l.sc[0] != 0 {
        return KernelClass::Dot;
    }
    for i in 0..n {
        for j in 0..n {
            if i != j
                && l.sb[i] != 0
                && l.sb[i] == l.sb[j]
                && l.sc[i] == 0
                && l.sa[j] == 0
                && l.sa[i] != 0
                && l.sc[j] != 0
            {
                return KernelClass::Convolution;
            }
        }
    }
    if (2..=3).contains(&n) {
        if let Some(r) = roles(l) {
            let count = |x| r.iter().filter(|&&y| y == x).count();
            if count(Role::K) == 1 && count(Role::M) <= 1 && count(Role::N) <= 1 {
                return KernelClass::MatMul;
            }
        }
    }
    KernelClass::Generic
}

#[inline(always)]
fn mac<R: Real>(a: &mut Cplx<R>, b: Cplx<R>, c: Cplx<R>, conj: bool) {
    let c = if conj { c.conj() } else { c };
    *a = *a + cmul(b, c);
}

pub(crate) fn execute_mac<R: Real>(
    l: &Loops,
    a: &mut [Cplx<R>],
    oa: isize,
    b: &[Cplx<R>],
    ob: isize,
    c: &[Cplx<R>],
    oc: isize,
    conj: bool,
) {
    match classify(l) {
        KernelClass::Dot => dot(l, a, oa, b, ob, c, oc, conj),
        KernelClass::MatMul => matmul(l, a, oa, b, ob, c, oc, conj),
        KernelClass::Convolution => conv(l, a, oa, b, ob, c, oc, conj),
        KernelClass::Generic => {
            if conj {
                generic_loop(l, a, oa, b, ob, c, oc, Zfmacc)
            } else {
                generic_loop(l, a, oa, b, ob, c, oc, Fmac)
            }
        }
    }
}

fn dot<R: Real>(
    l: &Loops,
    a: &mut [Cplx<R>],
    oa: isize,
    b: &[Cplx<R>],
    ob: isize,
    c: &[Cplx<R>],
    oc: isize,
    conj: bool,
) {
    let n = l.dims[0];
    let (sb, sc) = (l.sb[0], l.sc[0]);
    #[cfg(feature = "parallel")]
    {
        // Tree reduction: association order depends on the scheduler.
        if !exec::deterministic() && exec::parallel_enabled() && n >= exec::PAR_THRESHOLD {
            use rayon::prelude::*;
            let s: Cplx<R> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let cv = c[(oc + i as isize * sc) as usize];
                    let cv = if conj { cv.conj() } else { cv };
                    cmul(b[(ob + i as isize * sb) as usize], cv)
                })
                .reduce(crate::real::zero, |x, y| x + y);
            a[oa as usize] = a[oa as usize] + s;
            return;
        }
    }
    let _ = exec::deterministic;
    let mut acc = a[oa as usize];
    if sb == 1 && sc == 1 {
        let bs = &b[ob as usize..ob as usize + n];
        let cs = &c[oc as usize..oc as usize + n];
        for (&x, &y) in bs.iter().zip(cs) {
            mac(&mut acc, x, y, conj);
        }
    } else {
        let (mut pb, mut pc) = (ob, oc);
        for _ in 0..n {
            mac(&mut acc, b[pb as usize], c[pc as usize], conj);
            pb += sb;
            pc += sc;
        }
    }
    a[oa as usize] = acc;
}

fn matmul<R: Real>(
    l: &Loops,
    a: &mut [Cplx<R>],
    oa: isize,
    b: &[Cplx<R>],
    ob: isize,
    c: &[Cplx<R>],
    oc: isize,
    conj: bool,
) {
    let r = roles(l).expect("classified as matmul");
    let find = |x: Role| r.iter().position(|&y| y == x);
    let k = find(Role::K).expect("reduction dimension");
    let dims_or_unit = |i: Option<usize>| i.map_or((1usize, 0isize, 0isize, 0isize), |i| (l.dims[i], l.sa[i], l.sb[i], l.sc[i]));
    let (dm, sam, sbm, _) = dims_or_unit(find(Role::M));
    let (dn, san, _, scn) = dims_or_unit(find(Role::N));
    let (dk, sbk, sck) = (l.dims[k], l.sb[k], l.sc[k]);
    let contiguous = sam == 1 && sbm == 1;
    for n in 0..dn as isize {
        let an = oa + n * san;
        for kk in 0..dk as isize {
            let cv = c[(oc + n * scn + kk * sck) as usize];
            let cv = if conj { cv.conj() } else { cv };
            let bk = ob + kk * sbk;
            if contiguous {
                let arow = &mut a[an as usize..an as usize + dm];
                let brow = &b[bk as usize..bk as usize + dm];
                for (x, &y) in arow.iter_mut().zip(brow) {
                    *x = *x + cmul(y, cv);
                }
            } else {
                for m in 0..dm as isize {
                    let ai = (an + m * sam) as usize;
                    a[ai] = a[ai] + cmul(b[(bk + m * sbm) as usize], cv);
                }
            }
        }
    }
}

/// Odometer over dimensions 1.. with a vectorizable inner loop over
/// dimension 0 when it is contiguous.
fn conv<R: Real>(
    l: &Loops,
    a: &mut [Cplx<R>],
    oa: isize,
    b: &[Cplx<R>],
    ob: isize,
    c: &[Cplx<R>],
    oc: isize,
    conj: bool,
) {
    let n = l.dims.len();
    let d0 = l.dims[0];
    let (sa0, sb0, sc0) = (l.sa[0], l.sb[0], l.sc[0]);
    let mut idx = vec![0usize; n];
    let (mut pa, mut pb, mut pc) = (oa, ob, oc);
    loop {
        if sa0 == 1 && sb0 == 1 && sc0 == 0 {
            let cv = c[pc as usize];
            let cv = if conj { cv.conj() } else { cv };
            let arow = &mut a[pa as usize..pa as usize + d0];
            let brow = &b[pb as usize..pb as usize + d0];
            for (x, &y) in arow.iter_mut().zip(brow) {
                *x = *x + cmul(y, cv);
            }
        } else if sa0 == 0 && sb0 == 1 && sc0 == 1 {
            let mut acc = a[pa as usize];
            let brow = &b[pb as usize..pb as usize + d0];
            let crow = &c[pc as usize..pc as usize + d0];
            for (&x, &y) in brow.iter().zip(crow) {
                mac(&mut acc, x, y, conj);
            }
            a[pa as usize] = acc;
        } else {
            let (mut ia, mut ib, mut ic) = (pa, pb, pc);
            for _ in 0..d0 {
                mac(&mut a[ia as usize], b[ib as usize], c[ic as usize], conj);
                ia += sa0;
                ib += sb0;
                ic += sc0;
            }
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
