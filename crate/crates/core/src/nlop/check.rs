//! Numerical derivative checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::mdarray::MdArray;
use crate::real::{Cplx, Real};

use super::{Ctx, Nlop};

/// Worst relative errors found by [`check_derivatives`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DerivativeCheck {
    /// Derivative against central finite differences.
    pub finite_difference: f64,
    /// `Re⟨DF dx, dy⟩` against `Re⟨dx, DFᴴ dy⟩`.
    pub adjoint: f64,
}

/// Uniform random complex array with entries in `[-scale, scale]²`.
pub fn random_array<R: Real>(rng: &mut ChaCha8Rng, dims: &[usize], scale: f64) -> MdArray<R> {
    let n: usize = dims.iter().product();
    let mut u = || R::from_f64_lossy(scale * (2.0 * rng.random::<f64>() - 1.0));
    let v = (0..n).map(|_| Cplx::new(u(), u())).collect();
    MdArray::from_vec(dims, v).expect("valid dimensions")
}

fn rel(a: &MdArray<f64>, b: &MdArray<f64>) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale < 1e-300 {
        return 0.0;
    }
    a.sub(b).expect("same dims").norm() / scale
}

/// Compares derivatives of outputs `outputs` with respect to inputs `wrt`
/// at `x` against central differences with step `h`, along random
/// directions. Perturbed evaluations run in replay mode, so operators with
/// internal randomness keep the draw made at `x`.
pub fn check_derivatives(
    f: &Nlop<f64>,
    x: &[MdArray<f64>],
    outputs: &[usize],
    wrt: &[usize],
    h: f64,
    seed: u64,
) -> Result<DerivativeCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xr: Vec<&MdArray<f64>> = x.iter().collect();
    let y0 = f.apply(&xr)?;
    let handle = f.derivative_handle()?;
    let mut cases = Vec::new();
    for &i in wrt {
        let dx = random_array::<f64>(&mut rng, x[i].dims(), 1.0);
        for &o in outputs {
            let dy = random_array::<f64>(&mut rng, y0[o].dims(), 1.0);
            let fx = handle.derivative(o, i, &dx)?;
            let ay = handle.adjoint_derivative(o, i, &dy)?;
            let lhs = fx.dot(&dy)?.re;
            let rhs = dx.dot(&ay)?.re;
            let scale = fx.norm() * dy.norm() + dx.norm() * ay.norm();
            let adj = if scale < 1e-300 { 0.0 } else { (lhs - rhs).abs() / scale };
            cases.push((i, o, dx.clone(), fx, adj));
        }
    }
    let replay = Ctx {
        keep_state: false,
        replay: true,
    };
    let mut out = DerivativeCheck::default();
    for (i, o, dx, fx, adj) in cases {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[i].axpy(Cplx::new(h, 0.0), &dx)?;
        xm[i].axpy(Cplx::new(-h, 0.0), &dx)?;
        let mut xs = xr.clone();
        xs[i] = &xp[i];
        let fp = f.apply_with(&xs, replay)?.swap_remove(o);
        xs[i] = &xm[i];
        let fm = f.apply_with(&xs, replay)?.swap_remove(o);
        let fd = fp.sub(&fm)?.scale_real(0.5 / h);
        out.finite_difference = out.finite_difference.max(rel(&fd, &fx));
        out.adjoint = out.adjoint.max(adj);
    }
    Ok(out)
}
