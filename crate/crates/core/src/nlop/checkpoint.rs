//! Checkpointing container: trade memory for recomputation.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::error::Result;
use crate::mdarray::MdArray;
use crate::real::Real;

use super::{Ctx, EvalState, Nlop, Operator};

/// Counts how often a checkpoint container re-ran its inner operator.
#[derive(Clone, Debug, Default)]
pub struct RerunCounter(Arc<AtomicUsize>);

impl RerunCounter {
    pub fn get(&self) -> usize {
        self.0.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.0.store(0, Ordering::Relaxed)
    }
}

struct Checkpoint<R: Real> {
    inner: Nlop<R>,
    in_dims: Vec<Vec<usize>>,
    out_dims: Vec<Vec<usize>>,
    inputs: EvalState<Vec<MdArray<R>>>,
    reruns: RerunCounter,
    deps: Vec<Vec<bool>>,
    name: String,
}

impl<R: Real> Checkpoint<R> {
    /// Re-evaluates the inner operator on the stored inputs so that its
    /// derivative state is available.
    fn rerun(&self) -> Result<()> {
        let x = self.inputs.get()?;
        let refs: Vec<&MdArray<R>> = x.iter().collect();
        self.inner.apply_with(
            &refs,
            Ctx {
                keep_state: true,
                replay: true,
            },
        )?;
        self.reruns.0.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }
}

impl<R: Real> Operator<R> for Checkpoint<R> {
    fn name(&self) -> &str {
        &self.name
    }

    fn input_dims(&self) -> &[Vec<usize>] {
        &self.in_dims
    }

    fn output_dims(&self) -> &[Vec<usize>] {
        &self.out_dims
    }

    fn forward(&self, inputs: &[&MdArray<R>], ctx: Ctx) -> Result<Vec<MdArray<R>>> {
        let out = self.inner.apply_with(inputs, ctx.no_state())?;
        self.inputs
            .update(ctx, || inputs.iter().map(|&x| x.clone()).collect());
        Ok(out)
    }

    fn derivative(&self, o: usize, i: usize, dx: &MdArray<R>) -> Result<MdArray<R>> {
        let mut dxs = vec![None; self.in_dims.len()];
        dxs[i] = Some(dx);
        let mut want = vec![false; self.out_dims.len()];
        want[o] = true;
        let mut r = self.derivative_batch(&dxs, &want)?;
        Ok(r[o].take().expect("wanted output"))
    }

    fn adjoint_derivative(&self, o: usize, i: usize, dy: &MdArray<R>) -> Result<MdArray<R>> {
        let mut dys = vec![None; self.out_dims.len()];
        dys[o] = Some(dy);
        let mut want = vec![false; self.in_dims.len()];
        want[i] = true;
        let mut r = self.adjoint_batch(&dys, &want)?;
        match r[i].take() {
            Some(x) => Ok(x),
            None => MdArray::zeros(&self.in_dims[i]),
        }
    }

    fn depends(&self, o: usize, i: usize) -> bool {
        self.deps[o][i]
    }

    fn holomorphic(&self) -> bool {
        self.inner.holomorphic()
    }

    fn clear_state(&self) {
        self.inputs.clear();
        self.inner.clear_state();
    }

    fn derivative_batch(
        &self,
        dxs: &[Option<&MdArray<R>>],
        want: &[bool],
    ) -> Result<Vec<Option<MdArray<R>>>> {
        self.rerun()?;
        let r = self
            .inner
            .derivative_handle()
            .and_then(|h| h.derivative_multi(dxs, want));
        self.inner.clear_state();
        r
    }

    fn adjoint_batch(
        &self,
        dys: &[Option<&MdArray<R>>],
        want: &[bool],
    ) -> Result<Vec<Option<MdArray<R>>>> {
        self.rerun()?;
        let r = self
            .inner
            .derivative_handle()
            .and_then(|h| h.adjoint_multi(dys, want));
        self.inner.clear_state();
        r
    }
}

/// Wraps `f` so that a forward call keeps only the inputs; derivative
/// batches re-run `f` first.
pub fn checkpoint<R: Real>(f: &Nlop<R>) -> Nlop<R> {
    checkpoint_counted(f).0
}

/// Like [`checkpoint`], also returning the re-execution counter.
pub fn checkpoint_counted<R: Real>(f: &Nlop<R>) -> (Nlop<R>, RerunCounter) {
    let reruns = RerunCounter::default();
    (checkpoint_with(f, &reruns), reruns)
}

/// Like [`checkpoint`], counting re-executions in `reruns` (which may be
/// shared by several containers).
pub fn checkpoint_with<R: Real>(f: &Nlop<R>, reruns: &RerunCounter) -> Nlop<R> {
    let op = Checkpoint {
        inner: f.clone(),
        in_dims: f.all_input_dims().to_vec(),
        out_dims: f.output_dims(),
        inputs: EvalState::new(),
        reruns: reruns.clone(),
        deps: f.graph().dependency_matrix(),
        name: "checkpoint".into(),
    };
    Nlop::new(op)
}
