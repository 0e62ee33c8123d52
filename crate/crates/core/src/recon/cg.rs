//! Conjugate gradients for self-adjoint positive-definite systems.

use crate::error::{Error, Result};
use crate::linop::Linop;
use crate::mdarray::MdArray;
use crate::real::{Cplx, Real};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgConfig {
    pub max_iter: usize,
    /// Stop once `‖r‖ ≤ tol·‖b‖`.
    pub tol: f64,
    /// Treat non-convergence within `max_iter` as an error.
    pub strict: bool,
    /// The last dimension indexes independent systems (a block-diagonal
    /// operator), each with its own step sizes and stopping test.
    pub batched: bool,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-6,
            strict: true,
            batched: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CgResult<R: Real> {
    pub x: MdArray<R>,
    pub iterations: usize,
    /// Worst relative residual over the systems.
    pub residual: f64,
    pub converged: bool,
}

/// `Re⟨a, b⟩` of each system.
fn dots<R: Real>(a: &MdArray<R>, b: &MdArray<R>, n: usize) -> Vec<f64> {
    let len = a.len() / n;
    a.as_slice()
        .chunks(len)
        .zip(b.as_slice().chunks(len))
        .map(|(x, y)| {
            x.iter()
                .zip(y)
                .map(|(p, q)| (p.re * q.re + p.im * q.im).to_f64_lossy())
                .sum()
        })
        .collect()
}

/// `a += s_k·b` on system `k`.
fn axpy_sys<R: Real>(a: &mut MdArray<R>, s: &[f64], b: &MdArray<R>) {
    let len = a.len() / s.len();
    for ((x, y), &s) in a.as_mut_slice().chunks_mut(len).zip(b.as_slice().chunks(len)).zip(s) {
        let s = R::from_f64_lossy(s);
        for (p, q) in x.iter_mut().zip(y) {
            *p = *p + *q * s;
        }
    }
}

/// `p = r + β_k·p` on system `k`.
fn xpay_sys<R: Real>(p: &mut MdArray<R>, beta: &[f64], r: &MdArray<R>) {
    let len = p.len() / beta.len();
    for ((x, y), &b) in p.as_mut_slice().chunks_mut(len).zip(r.as_slice().chunks(len)).zip(beta) {
        let b = R::from_f64_lossy(b);
        for (p, q) in x.iter_mut().zip(y) {
            *p = *q + *p * b;
        }
    }
}

/// Solves `S x = b` with `S` given by `apply`, starting from zero.
pub fn cg<R, F>(apply: F, b: &MdArray<R>, cfg: &CgConfig) -> Result<CgResult<R>>
where
    R: Real,
    F: Fn(&MdArray<R>) -> Result<MdArray<R>>,
{
    let n = if cfg.batched {
        *b.dims().last().unwrap_or(&1)
    } else {
        1
    };
    let bnorm: Vec<f64> = dots(b, b, n).into_iter().map(f64::sqrt).collect();
    let mut x = MdArray::zeros(b.dims())?;
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = dots(&r, &r, n);
    let rel = |rr: &[f64]| {
        rr.iter()
            .zip(&bnorm)
            .map(|(&v, &bn)| if bn > 0.0 { v.sqrt() / bn } else { 0.0 })
            .fold(0.0, f64::max)
    };
    let done = |rr: f64, bn: f64| rr.sqrt() <= cfg.tol * bn;
    let mut it = 0;
    while it < cfg.max_iter && !rr.iter().zip(&bnorm).all(|(&v, &bn)| done(v, bn)) {
        let sp = apply(&p)?;
        let psp = dots(&p, &sp, n);
        let alpha: Vec<f64> = (0..n)
            .map(|k| if done(rr[k], bnorm[k]) { 0.0 } else { rr[k] / psp[k] })
            .collect();
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::Breakdown(format!("conjugate gradients at iteration {it}")));
        }
        axpy_sys(&mut x, &alpha, &p);
        let neg: Vec<f64> = alpha.iter().map(|a| -a).collect();
        axpy_sys(&mut r, &neg, &sp);
        let rr_new = dots(&r, &r, n);
        let beta: Vec<f64> = (0..n)
            .map(|k| if alpha[k] == 0.0 { 0.0 } else { rr_new[k] / rr[k] })
            .collect();
        xpay_sys(&mut p, &beta, &r);
        if !rr_new.iter().all(|v| v.is_finite()) {
            return Err(Error::Breakdown(format!("conjugate gradients at iteration {it}")));
        }
        rr = rr_new;
        it += 1;
    }
    let residual = rel(&rr);
    let converged = rr.iter().zip(&bnorm).all(|(&v, &bn)| done(v, bn));
    if cfg.strict && !converged {
        return Err(Error::SolverFailure {
            residual,
            iterations: it,
        });
    }
    Ok(CgResult {
        x,
        iterations: it,
        residual,
        converged,
    })
}

/// Solves `(AᴴA + λ·1) x = b`.
pub fn cg_normal_solve<R: Real>(a: &Linop<R>, lambda: f64, b: &MdArray<R>, max_iter: usize, tol: f64) -> Result<CgResult<R>> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!("λ must be non-negative, got {lambda}")));
    }
    b.require_dims(a.in_dims(), "right-hand side")?;
    let l = Cplx::new(R::from_f64_lossy(lambda), R::zero());
    let cfg = CgConfig {
        max_iter,
        tol,
        strict: false,
        batched: false,
    };
    cg(
        |x| {
            let mut y = a.normal(x)?;
            y.axpy(l, x)?;
            Ok(y)
        },
        b,
        &cfg,
    )
}
