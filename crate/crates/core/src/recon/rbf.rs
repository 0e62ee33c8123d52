//! Activation built from Gaussian radial basis functions, one weight vector
//! per filter channel.

use crate::error::{Error, Result};
use crate::mdarray::MdArray;
use crate::nlop::{Ctx, EvalState, Nlop, Operator};
use crate::real::{Cplx, Real};

/// Centers and width of the basis.
#[derive(Clone, Debug, PartialEq)]
pub struct RbfGrid {
    pub centers: Vec<f64>,
    pub sigma: f64,
}

impl RbfGrid {
    pub fn new(centers: Vec<f64>, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter(format!("RBF width must be positive, got {sigma}")));
        }
        if centers.is_empty() || centers.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter("RBF centers must be strictly increasing".into()));
        }
        Ok(Self { centers, sigma })
    }

    /// `n` centers spread evenly over `[lo, hi]`, width equal to their spacing.
    pub fn uniform(n: usize, lo: f64, hi: f64) -> Result<Self> {
        if n < 2 || !(lo < hi) {
            return Err(Error::InvalidParameter(format!("uniform RBF grid needs n ≥ 2 and lo < hi, got {n}, [{lo}, {hi}]")));
        }
        let h = (hi - lo) / (n - 1) as f64;
        Self::new((0..n).map(|j| lo + h * j as f64).collect(), h)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    fn basis(&self, z: f64, j: usize) -> f64 {
        let d = z - self.centers[j];
        (-d * d / (2.0 * self.sigma * self.sigma)).exp()
    }

    /// `Φ(z) = Σ_j w_j exp(−(z−μ_j)²/(2σ²))` and `Φ'(z)`.
    pub fn eval(&self, z: f64, w: &[f64]) -> (f64, f64) {
        let s2 = self.sigma * self.sigma;
        let mut v = 0.0;
        let mut d = 0.0;
        for (j, &wj) in w.iter().enumerate() {
            let b = self.basis(z, j);
            v += wj * b;
            d -= wj * b * (z - self.centers[j]) / s2;
        }
        (v, d)
    }
}

/// Applies the basis expansion to the real values `z` with weights `w`
/// (one per center).
pub fn rbf_activation(grid: &RbfGrid, z: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    if w.len() != grid.len() {
        return Err(Error::InvalidParameter(format!("{} weights for {} centers", w.len(), grid.len())));
    }
    Ok(z.iter().map(|&x| grid.eval(x, w).0).collect())
}

struct Rbf<R: Real> {
    grid: RbfGrid,
    axis: usize,
    dims: [Vec<Vec<usize>>; 2],
    state: EvalState<RbfState<R>>,
}

struct RbfState<R: Real> {
    z: Vec<f64>,
    w: Vec<f64>,
    slope: MdArray<R>,
}

impl<R: Real> Rbf<R> {
    /// Filter index of each flat element.
    fn channel(&self, idx: usize) -> usize {
        let d = &self.dims[0][0];
        let inner: usize = d[..self.axis].iter().product();
        (idx / inner) % d[self.axis]
    }

    fn nw(&self) -> usize {
        self.grid.len()
    }
}

impl<R: Real> Operator<R> for Rbf<R> {
    fn name(&self) -> &str {
        "rbf"
    }
    fn input_dims(&self) -> &[Vec<usize>] {
        &self.dims[0]
    }
    fn output_dims(&self) -> &[Vec<usize>] {
        &self.dims[1]
    }
    fn forward(&self, x: &[&MdArray<R>], ctx: Ctx) -> Result<Vec<MdArray<R>>> {
        let nw = self.nw();
        let z: Vec<f64> = x[0].as_slice().iter().map(|v| v.re.to_f64_lossy()).collect();
        let w: Vec<f64> = x[1].as_slice().iter().map(|v| v.re.to_f64_lossy()).collect();
        let mut y = Vec::with_capacity(z.len());
        let mut slope = Vec::with_capacity(z.len());
        for (k, &zk) in z.iter().enumerate() {
            let c = self.channel(k);
            let (v, d) = self.grid.eval(zk, &w[c * nw..][..nw]);
            y.push(Cplx::new(R::from_f64_lossy(v), R::zero()));
            slope.push(Cplx::new(R::from_f64_lossy(d), R::zero()));
        }
        let dims = x[0].dims();
        let slope = MdArray::from_vec(dims, slope)?;
        self.state.update(ctx, || RbfState { z, w, slope });
        Ok(vec![MdArray::from_vec(dims, y)?])
    }
    fn derivative(&self, _o: usize, i: usize, dx: &MdArray<R>) -> Result<MdArray<R>> {
        let s = self.state.get()?;
        if i == 0 {
            return Ok(s.slope.zip_map(dx, |a, b| Cplx::new(a.re * b.re, R::zero()))?);
        }
        let nw = self.nw();
        let dw: Vec<f64> = dx.as_slice().iter().map(|v| v.re.to_f64_lossy()).collect();
        let out = s
            .z
            .iter()
            .enumerate()
            .map(|(k, &zk)| {
                let c = self.channel(k);
                let v: f64 = (0..nw).map(|j| dw[c * nw + j] * self.grid.basis(zk, j)).sum();
                Cplx::new(R::from_f64_lossy(v), R::zero())
            })
            .collect();
        MdArray::from_vec(&self.dims[1][0], out)
    }
    fn adjoint_derivative(&self, _o: usize, i: usize, dy: &MdArray<R>) -> Result<MdArray<R>> {
        let s = self.state.get()?;
        if i == 0 {
            return Ok(s.slope.zip_map(dy, |a, b| Cplx::new(a.re * b.re, R::zero()))?);
        }
        let nw = self.nw();
        let mut g = vec![0.0; s.w.len()];
        for (k, (&zk, v)) in s.z.iter().zip(dy.as_slice()).enumerate() {
            let c = self.channel(k);
            let r = v.re.to_f64_lossy();
            for (j, gj) in g[c * nw..][..nw].iter_mut().enumerate() {
                *gj += r * self.grid.basis(zk, j);
            }
        }
        let g = g.into_iter().map(|v| Cplx::new(R::from_f64_lossy(v), R::zero())).collect();
        MdArray::from_vec(&self.dims[0][1], g)
    }
    fn clear_state(&self) {
        self.state.clear()
    }
}

/// `(z, w) ↦ Φ(Re z)` with one weight column `w[:, c]` (dims `[N_w, C]`)
/// for each index `c` of `z` along `axis`. Only real parts of `z` and `w`
/// enter; the output is real.
pub fn rbf_nlop<R: Real>(grid: RbfGrid, dims: &[usize], axis: usize) -> Result<Nlop<R>> {
    if axis >= dims.len() {
        return Err(Error::InvalidParameter(format!("channel axis {axis} for rank {}", dims.len())));
    }
    let wd = vec![grid.len(), dims[axis]];
    Ok(Nlop::new(Rbf {
        grid,
        axis,
        dims: [vec![dims.to_vec(), wd], vec![dims.to_vec()]],
        state: EvalState::new(),
    }))
}
