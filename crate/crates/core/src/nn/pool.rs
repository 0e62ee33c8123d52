//! Max-pooling and dropout.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdarray::{default_strides, MdArray};
use crate::nlop::{Ctx, EvalState, Nlop, Operator};
use crate::real::{Cplx, Real};

use super::batchnorm::Mode;
use super::model::{InputSpec, Model, OutputSpec};

/// Windows tile the leading axes; a window that runs past the end of an
/// axis is truncated. Within a window the element of largest magnitude wins,
/// ties going to the lowest linear index.
struct MaxPool {
    window: Vec<usize>,
    dims: [Vec<Vec<usize>>; 2],
    state: EvalState<Vec<usize>>,
}

impl MaxPool {
    /// Output position of every input element.
    fn target(&self, k: usize, out_strides: &[isize]) -> usize {
        let mut rem = k;
        let mut t = 0usize;
        for (a, &d) in self.dims[0][0].iter().enumerate() {
            let i = rem % d;
            rem /= d;
            let w = self.window.get(a).copied().unwrap_or(1);
            t += (i / w) * out_strides[a] as usize;
        }
        t
    }
}

impl<R: Real> Operator<R> for MaxPool {
    fn name(&self) -> &str {
        "maxpool"
    }
    fn input_dims(&self) -> &[Vec<usize>] {
        &self.dims[0]
    }
    fn output_dims(&self) -> &[Vec<usize>] {
        &self.dims[1]
    }
    fn forward(&self, x: &[&MdArray<R>], ctx: Ctx) -> Result<Vec<MdArray<R>>> {
        let os = default_strides(&self.dims[1][0])?;
        let n_out: usize = self.dims[1][0].iter().product();
        let mut best: Vec<Option<(usize, R)>> = vec![None; n_out];
        for (k, z) in x[0].as_slice().iter().enumerate() {
            let t = self.target(k, &os);
            let m = z.norm();
            match best[t] {
                Some((_, bm)) if bm >= m => {}
                _ => best[t] = Some((k, m)),
            }
        }
        let arg: Vec<usize> = best.into_iter().map(|b| b.expect("window is non-empty").0).collect();
        let xs = x[0].as_slice();
        let y = MdArray::from_vec(&self.dims[1][0], arg.iter().map(|&k| xs[k]).collect())?;
        self.state.update(ctx, || arg);
        Ok(vec![y])
    }
    fn derivative(&self, _o: usize, _i: usize, dx: &MdArray<R>) -> Result<MdArray<R>> {
        let arg = self.state.get()?;
        let d = dx.as_slice();
        MdArray::from_vec(&self.dims[1][0], arg.iter().map(|&k| d[k]).collect())
    }
    fn adjoint_derivative(&self, _o: usize, _i: usize, dy: &MdArray<R>) -> Result<MdArray<R>> {
        let arg = self.state.get()?;
        let mut out = MdArray::zeros(&self.dims[0][0])?;
        let os = out.as_mut_slice();
        for (&k, &v) in arg.iter().zip(dy.as_slice()) {
            os[k] = os[k] + v;
        }
        Ok(out)
    }
    fn clear_state(&self) {
        self.state.clear()
    }
}

/// Max-pooling over the leading `window.len()` axes of `dims`.
pub fn maxpool_nlop<R: Real>(dims: &[usize], window: &[usize]) -> Result<Nlop<R>> {
    if window.len() > dims.len() || window.contains(&0) {
        return Err(Error::InvalidParameter(format!("pooling window {window:?} for dimensions {dims:?}")));
    }
    let out: Vec<usize> = dims
        .iter()
        .enumerate()
        .map(|(a, &d)| d.div_ceil(window.get(a).copied().unwrap_or(1)))
        .collect();
    Ok(Nlop::new(MaxPool {
        window: window.to_vec(),
        dims: [vec![dims.to_vec()], vec![out]],
        state: EvalState::new(),
    }))
}

pub fn maxpool<R: Real>(dims: &[usize], window: &[usize]) -> Result<Model<R>> {
    Model::new(
        maxpool_nlop(dims, window)?,
        vec![InputSpec::data("x", dims)],
        vec![OutputSpec::output("y")],
    )
}

struct Dropout<R: Real> {
    rate: f64,
    seed: u64,
    layer: u64,
    mode: Mode,
    next_step: AtomicU64,
    last_step: AtomicU64,
    dims: [Vec<Vec<usize>>; 2],
    state: EvalState<MdArray<R>>,
}

/// Keep-mask scaled by `1/(1 − rate)`, drawn from a stream keyed by
/// `(seed, layer, step)`.
pub fn dropout_mask<R: Real>(dims: &[usize], rate: f64, seed: u64, layer: u64, step: u64) -> Result<MdArray<R>> {
    let key = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .rotate_left(17)
        ^ layer.wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ step.wrapping_mul(0x1656_67B1_9E37_79F9);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    let keep = R::from_f64_lossy(1.0 / (1.0 - rate));
    let n: usize = dims.iter().product();
    let v = (0..n)
        .map(|_| {
            if rng.random::<f64>() < rate {
                Cplx::new(R::zero(), R::zero())
            } else {
                Cplx::new(keep, R::zero())
            }
        })
        .collect();
    MdArray::from_vec(dims, v)
}

impl<R: Real> Dropout<R> {
    fn mask(&self) -> Result<std::sync::Arc<MdArray<R>>> {
        self.state.get()
    }
}

impl<R: Real> Operator<R> for Dropout<R> {
    fn name(&self) -> &str {
        "dropout"
    }
    fn input_dims(&self) -> &[Vec<usize>] {
        &self.dims[0]
    }
    fn output_dims(&self) -> &[Vec<usize>] {
        &self.dims[1]
    }
    fn forward(&self, x: &[&MdArray<R>], ctx: Ctx) -> Result<Vec<MdArray<R>>> {
        if self.mode == Mode::Infer {
            return Ok(vec![x[0].clone()]);
        }
        let step = if ctx.replay {
            self.last_step.load(Ordering::Acquire)
        } else {
            let s = self.next_step.fetch_add(1, Ordering::AcqRel);
            self.last_step.store(s, Ordering::Release);
            s
        };
        let m = dropout_mask(&self.dims[0][0], self.rate, self.seed, self.layer, step)?;
        let y = x[0].mul(&m)?;
        self.state.update(ctx, || m);
        Ok(vec![y])
    }
    fn derivative(&self, _o: usize, _i: usize, dx: &MdArray<R>) -> Result<MdArray<R>> {
        match self.mode {
            Mode::Infer => Ok(dx.clone()),
            Mode::Train => self.mask()?.mul(dx),
        }
    }
    fn adjoint_derivative(&self, o: usize, i: usize, dy: &MdArray<R>) -> Result<MdArray<R>> {
        Operator::<R>::derivative(self, o, i, dy)
    }
    fn holomorphic(&self) -> bool {
        true
    }
    fn clear_state(&self) {
        self.state.clear()
    }
}

/// Dropout with the given rate. `layer` distinguishes layers sharing a seed.
/// Replayed evaluations (checkpoint recomputation) reuse the last mask.
pub fn dropout_nlop<R: Real>(dims: &[usize], rate: f64, seed: u64, layer: u64, mode: Mode) -> Result<Nlop<R>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidParameter(format!("dropout rate {rate} outside [0, 1)")));
    }
    Ok(Nlop::new(Dropout {
        rate,
        seed,
        layer,
        mode,
        next_step: AtomicU64::new(0),
        last_step: AtomicU64::new(0),
        dims: [vec![dims.to_vec()], vec![dims.to_vec()]],
        state: EvalState::new(),
    }))
}

pub fn dropout<R: Real>(dims: &[usize], rate: f64, seed: u64, layer: u64, mode: Mode) -> Result<Model<R>> {
    Model::new(
        dropout_nlop(dims, rate, seed, layer, mode)?,
        vec![InputSpec::data("x", dims)],
        vec![OutputSpec::output("y")],
    )
}
