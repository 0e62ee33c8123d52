//! Inverse of a parametrized self-adjoint positive-definite operator.
//!
//! Given `S: (x, p₁, …, p_k) ↦ S_p x`, linear in `x`, the inverse operator
//! maps `(y, p₁, …, p_k)` to the solution of `S_p x = y`. Its derivatives
//! follow from implicit differentiation of `S_p x = y`:
//!
//! * `D_y S⁻¹ = S_p⁻¹`
//! * `D_{p_i} S⁻¹ = −S_p⁻¹ ∘ D_{p_i} S |_{(x, p)}`
//!
//! and every application of `S_p⁻¹` is a CG solve.

use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::mdarray::MdArray;
use crate::nlop::{Ctx, EvalState, Nlop, Operator};
use crate::real::{Cplx, Real};

use super::cg::{cg, CgConfig};

struct Point<R: Real> {
    x: MdArray<R>,
    params: Vec<MdArray<R>>,
}

struct Inverse<R: Real> {
    s: Nlop<R>,
    cfg: CgConfig,
    dims: [Vec<Vec<usize>>; 2],
    state: EvalState<Point<R>>,
    // `s` keeps derivative state internally; one user at a time
    lock: Mutex<()>,
}

impl<R: Real> Inverse<R> {
    fn apply_s(&self, v: &MdArray<R>, params: &[MdArray<R>], ctx: Ctx) -> Result<MdArray<R>> {
        let mut args: Vec<&MdArray<R>> = Vec::with_capacity(params.len() + 1);
        args.push(v);
        args.extend(params.iter());
        Ok(self.s.apply_with(&args, ctx)?.swap_remove(0))
    }

    fn solve(&self, b: &MdArray<R>, params: &[MdArray<R>], replay: bool) -> Result<MdArray<R>> {
        let ctx = Ctx {
            keep_state: false,
            replay,
        };
        Ok(cg(|v| self.apply_s(v, params, ctx), b, &self.cfg)?.x)
    }

    /// Evaluates `S` at the stored point so that its derivatives are available.
    fn relinearize(&self, p: &Point<R>) -> Result<crate::nlop::DerivativeHandle<R>> {
        self.apply_s(
            &p.x,
            &p.params,
            Ctx {
                keep_state: true,
                replay: true,
            },
        )?;
        self.s.derivative_handle()
    }
}

impl<R: Real> Operator<R> for Inverse<R> {
    fn name(&self) -> &str {
        "cg_inverse"
    }
    fn input_dims(&self) -> &[Vec<usize>] {
        &self.dims[0]
    }
    fn output_dims(&self) -> &[Vec<usize>] {
        &self.dims[1]
    }
    fn forward(&self, inputs: &[&MdArray<R>], ctx: Ctx) -> Result<Vec<MdArray<R>>> {
        let _g = self.lock.lock().expect("inverse lock");
        let params: Vec<MdArray<R>> = inputs[1..].iter().map(|a| (*a).clone()).collect();
        let x = self.solve(inputs[0], &params, ctx.replay)?;
        self.state.update(ctx, || Point { x: x.clone(), params });
        Ok(vec![x])
    }
    fn derivative(&self, _o: usize, i: usize, dx: &MdArray<R>) -> Result<MdArray<R>> {
        let _g = self.lock.lock().expect("inverse lock");
        let p = self.state.get()?;
        if i == 0 {
            return self.solve(dx, &p.params, true);
        }
        let t = self.relinearize(&p)?.derivative(0, i, dx)?;
        Ok(self.solve(&t, &p.params, true)?.scale(Cplx::new(-R::one(), R::zero())))
    }
    fn adjoint_derivative(&self, _o: usize, i: usize, dy: &MdArray<R>) -> Result<MdArray<R>> {
        let _g = self.lock.lock().expect("inverse lock");
        let p = self.state.get()?;
        let z = self.solve(dy, &p.params, true)?;
        if i == 0 {
            return Ok(z);
        }
        let g = self.relinearize(&p)?.adjoint_derivative(0, i, &z)?;
        Ok(g.scale(Cplx::new(-R::one(), R::zero())))
    }
    fn adjoint_batch(&self, dys: &[Option<&MdArray<R>>], want: &[bool]) -> Result<Vec<Option<MdArray<R>>>> {
        // one solve shared by all parameters
        let _g = self.lock.lock().expect("inverse lock");
        let mut out = vec![None; want.len()];
        let Some(dy) = dys[0] else { return Ok(out) };
        let p = self.state.get()?;
        let z = self.solve(dy, &p.params, true)?;
        if want[1..].iter().any(|&w| w) {
            let h = self.relinearize(&p)?;
            for (i, &w) in want.iter().enumerate().skip(1) {
                if w {
                    let g = h.adjoint_derivative(0, i, &z)?;
                    out[i] = Some(g.scale(Cplx::new(-R::one(), R::zero())));
                }
            }
        }
        if want[0] {
            out[0] = Some(z);
        }
        Ok(out)
    }
    fn clear_state(&self) {
        self.state.clear()
    }
}

/// Builds `(y, p₁, …, p_k) ↦ S_p⁻¹ y` from `S: (x, p₁, …, p_k) ↦ S_p x`.
///
/// `S_p` must be self-adjoint and positive definite in `x` for admissible
/// parameters. With `cfg.strict`, a CG solve that misses the tolerance
/// fails with [`Error::SolverFailure`]; otherwise the iterate after
/// `cfg.max_iter` steps is used. The operator `s` must not be shared with
/// other graphs, since solves re-evaluate it.
pub fn make_inverse_nlop<R: Real>(s: &Nlop<R>, cfg: CgConfig) -> Result<Nlop<R>> {
    if s.num_outputs() != 1 || s.num_inputs() == 0 {
        return Err(Error::Graph("inverse needs an operator with one output and at least one input".into()));
    }
    let out = s.output_dims().swap_remove(0);
    if out.as_slice() != s.input_dims(0) {
        return Err(crate::error::mismatch(s.input_dims(0), &out, "inverse operator"));
    }
    if cfg.max_iter == 0 || !(cfg.tol >= 0.0) {
        return Err(Error::InvalidParameter("CG needs max_iter ≥ 1 and tol ≥ 0".into()));
    }
    Ok(Nlop::new(Inverse {
        s: s.clone(),
        cfg,
        dims: [s.all_input_dims().to_vec(), vec![out]],
        state: EvalState::new(),
        lock: Mutex::new(()),
    }))
}
