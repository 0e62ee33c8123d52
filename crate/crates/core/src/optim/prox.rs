use crate::mdarray::MdArray;
use crate::real::{Cplx, Real};

/// Proximal map attached to a weight input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Prox {
    /// Projection onto non-negative reals.
    NonNegative,
    /// Projection onto the reals (imaginary part set to zero).
    RealValued,
    /// Complex soft-thresholding `z ↦ z·max(0, 1 − τη/|z|)` with step `η`.
    SoftThreshold(f64),
}

impl Prox {
    /// Applies the map for step size `step`.
    pub fn apply<R: Real>(&self, x: &mut MdArray<R>, step: f64) {
        match *self {
            Prox::NonNegative => x.map_inplace(|z| Cplx::new(z.re.max(R::zero()), R::zero())),
            Prox::RealValued => x.map_inplace(|z| Cplx::new(z.re, R::zero())),
            Prox::SoftThreshold(tau) => {
                let t = R::from_f64_lossy(tau * step);
                x.map_inplace(|z| {
                    let m = z.norm();
                    if m <= t {
                        Cplx::new(R::zero(), R::zero())
                    } else {
                        z * ((m - t) / m)
                    }
                })
            }
        }
    }
}
