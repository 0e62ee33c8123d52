//! Non-linear operators with automatic differentiation.
//!
//! An [`Nlop`] maps `I` input arrays to `O` output arrays. For every pair
//! `(o, i)` it provides the derivative `D_i F_o`, evaluated at the inputs of
//! the most recent forward call, and its adjoint. Complex numbers are treated
//! as pairs of reals: for operators that are not holomorphic the adjoint
//! derivative is the transpose of the real Jacobian, so that
//! `Re⟨DF(dx), dy⟩ = Re⟨dx, DFᴴ(dy)⟩`. For a real scalar output,
//! `DFᴴ(1)` holds the partial derivatives with respect to the real parts of
//! the inputs in its real part, and with respect to the imaginary parts in its
//! imaginary part.
//!
//! Internally every `Nlop` is a directed acyclic graph of atomic operators
//! ([`Operator`]). Atoms keep whatever their derivatives need in interior
//! state, refreshed by each forward call. Each atom also carries a
//! generation counter, bumped on every forward call; derivative handles record
//! the generations they were taken at and refuse to run once any atom they
//! depend on has been evaluated again.

mod atoms;
mod check;
mod checkpoint;
mod compose;
mod graph;

pub use atoms::{
    add, conj, constant, exp, exp_real, from_linop, mul, real_part, scale_real, sub, sum_all,
};
pub use check::{check_derivatives, random_array, DerivativeCheck};
pub use checkpoint::{checkpoint, checkpoint_counted, checkpoint_with, RerunCounter};
pub use graph::DerivativeHandle;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::linop::Linop;
use crate::mdarray::MdArray;
use crate::real::Real;

use graph::Graph;

/// Options for a single forward evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ctx {
    /// Store the data needed by derivatives.
    pub keep_state: bool,
    /// Re-evaluation of the previous call (e.g. by a checkpoint container):
    /// operators with internal randomness reuse their last draw.
    pub replay: bool,
}

impl Default for Ctx {
    fn default() -> Self {
        Self {
            keep_state: true,
            replay: false,
        }
    }
}

impl Ctx {
    pub fn no_state(self) -> Self {
        Self {
            keep_state: false,
            ..self
        }
    }
}

/// An atomic differentiable operator.
///
/// Implementations store what their derivatives need during
/// [`forward`](Self::forward) (when `ctx.keep_state` is set) and must
/// return [`Error::NoForwardState`] from derivative calls otherwise.
pub trait Operator<R: Real>: Send + Sync {
    fn name(&self) -> &str;

    fn input_dims(&self) -> &[Vec<usize>];

    fn output_dims(&self) -> &[Vec<usize>];

    fn forward(&self, inputs: &[&MdArray<R>], ctx: Ctx) -> Result<Vec<MdArray<R>>>;

    fn derivative(&self, o: usize, i: usize, dx: &MdArray<R>) -> Result<MdArray<R>>;

    fn adjoint_derivative(&self, o: usize, i: usize, dy: &MdArray<R>) -> Result<MdArray<R>>;

    /// Structural dependence of output `o` on input `i`.
    fn depends(&self, _o: usize, _i: usize) -> bool {
        true
    }

    /// Inputs carrying fixed data (e.g. coil maps) may opt out of derivatives.
    fn differentiable(&self, _i: usize) -> bool {
        true
    }

    /// Complex-linear derivatives: `DF(i·dx) = i·DF(dx)`.
    fn holomorphic(&self) -> bool {
        false
    }

    /// Drops stored derivative data.
    fn clear_state(&self) {}

    /// Forward-mode derivative for several input tangents at once; output
    /// `o` is computed only when `want[o]` is set.
    fn derivative_batch(
        &self,
        dxs: &[Option<&MdArray<R>>],
        want: &[bool],
    ) -> Result<Vec<Option<MdArray<R>>>> {
        let mut out = Vec::with_capacity(want.len());
        for (o, &w) in want.iter().enumerate() {
            let mut acc: Option<MdArray<R>> = None;
            if w {
                for (i, dx) in dxs.iter().enumerate() {
                    if let Some(dx) = dx {
                        if self.depends(o, i) {
                            let d = self.derivative(o, i, dx)?;
                            accumulate(&mut acc, d)?;
                        }
                    }
                }
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// Reverse-mode derivative for several output cotangents at once; input
    /// `i` is computed only when `want[i]` is set.
    fn adjoint_batch(
        &self,
        dys: &[Option<&MdArray<R>>],
        want: &[bool],
    ) -> Result<Vec<Option<MdArray<R>>>> {
        let mut out = Vec::with_capacity(want.len());
        for (i, &w) in want.iter().enumerate() {
            let mut acc: Option<MdArray<R>> = None;
            if w {
                for (o, dy) in dys.iter().enumerate() {
                    if let Some(dy) = dy {
                        if self.depends(o, i) {
                            let d = self.adjoint_derivative(o, i, dy)?;
                            accumulate(&mut acc, d)?;
                        }
                    }
                }
            }
            out.push(acc);
        }
        Ok(out)
    }
}

pub(crate) fn accumulate<R: Real>(acc: &mut Option<MdArray<R>>, x: MdArray<R>) -> Result<()> {
    match acc {
        Some(a) => a.add_assign(&x),
        None => {
            *acc = Some(x);
            Ok(())
        }
    }
}

/// Interior storage for the data an operator's derivatives need.
pub struct EvalState<T> {
    slot: Mutex<Option<Arc<T>>>,
}

impl<T> Default for EvalState<T> {
    fn default() -> Self {
        Self {
            slot: Mutex::new(None),
        }
    }
}

impl<T> EvalState<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores `make()` if the context asks for state, clears otherwise.
    pub fn update(&self, ctx: Ctx, make: impl FnOnce() -> T) {
        let v = ctx.keep_state.then(|| Arc::new(make()));
        *self.slot.lock().expect("state lock") = v;
    }

    pub fn clear(&self) {
        *self.slot.lock().expect("state lock") = None;
    }

    pub fn get(&self) -> Result<Arc<T>> {
        self.slot
            .lock()
            .expect("state lock")
            .clone()
            .ok_or(Error::NoForwardState)
    }
}

static NEXT_ATOM_ID: AtomicU64 = AtomicU64::new(1);

/// An operator instance inside one or more graphs.
pub(crate) struct Atom<R: Real> {
    id: u64,
    op: Box<dyn Operator<R>>,
    generation: AtomicU64,
}

impl<R: Real> Atom<R> {
    fn new(op: Box<dyn Operator<R>>) -> Self {
        Self {
            id: NEXT_ATOM_ID.fetch_add(1, Ordering::Relaxed),
            op,
            generation: AtomicU64::new(0),
        }
    }

    pub(crate) fn generation(&self) -> u64 {
        self.generation.load(Ordering::Acquire)
    }

    fn forward(&self, inputs: &[&MdArray<R>], ctx: Ctx) -> Result<Vec<MdArray<R>>> {
        self.generation.fetch_add(1, Ordering::AcqRel);
        let out = self.op.forward(inputs, ctx)?;
        debug_assert_eq!(out.len(), self.op.output_dims().len());
        Ok(out)
    }
}

/// Non-linear operator: a shared, immutable graph of atomic operators.
#[derive(Clone)]
pub struct Nlop<R: Real = f32> {
    graph: Arc<Graph<R>>,
}

impl<R: Real> fmt::Debug for Nlop<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nlop")
            .field("inputs", &self.graph.input_dims)
            .field("outputs", &self.output_dims())
            .field("atoms", &self.graph.nodes.len())
            .finish()
    }
}

impl<R: Real> Nlop<R> {
    /// Wraps an atomic operator.
    pub fn new(op: impl Operator<R> + 'static) -> Self {
        Self::from_graph(Graph::atomic(Arc::new(Atom::new(Box::new(op)))))
    }

    /// Identity on arrays of the given dimensions.
    pub fn identity(dims: &[usize]) -> Self {
        Self::from_graph(Graph::identity(dims))
    }

    fn from_graph(g: Graph<R>) -> Self {
        Self { graph: Arc::new(g) }
    }

    pub fn num_inputs(&self) -> usize {
        self.graph.input_dims.len()
    }

    pub fn num_outputs(&self) -> usize {
        self.graph.outputs.len()
    }

    pub fn input_dims(&self, i: usize) -> &[usize] {
        &self.graph.input_dims[i]
    }

    pub fn output_dims(&self) -> Vec<Vec<usize>> {
        (0..self.num_outputs()).map(|o| self.graph.output_dims(o)).collect()
    }

    pub fn all_input_dims(&self) -> &[Vec<usize>] {
        &self.graph.input_dims
    }

    /// Number of atomic operators in the graph.
    pub fn num_atoms(&self) -> usize {
        self.graph.nodes.len()
    }

    /// Evaluates the operator and refreshes derivative state.
    pub fn apply(&self, inputs: &[&MdArray<R>]) -> Result<Vec<MdArray<R>>> {
        self.graph.forward(inputs, Ctx::default())
    }

    pub fn apply_with(&self, inputs: &[&MdArray<R>], ctx: Ctx) -> Result<Vec<MdArray<R>>> {
        self.graph.forward(inputs, ctx)
    }

    /// Derivative handle for the state left by the last forward call.
    pub fn derivative_handle(&self) -> Result<DerivativeHandle<R>> {
        DerivativeHandle::new(self.graph.clone())
    }

    /// `D_i F_o` at the last evaluation point, as a linear operator whose
    /// adjoint is the adjoint derivative.
    pub fn derivative(&self, o: usize, i: usize) -> Result<Linop<R>> {
        self.check_io(o, i)?;
        let h = Arc::new(self.derivative_handle()?);
        let h2 = h.clone();
        let in_dims = self.graph.input_dims[i].clone();
        let out_dims = self.graph.output_dims(o);
        Ok(Linop::from_fns(
            &in_dims,
            &out_dims,
            move |dx| h.derivative(o, i, dx),
            move |dy| h2.adjoint_derivative(o, i, dy),
        ))
    }

    pub fn apply_derivative(&self, o: usize, i: usize, dx: &MdArray<R>) -> Result<MdArray<R>> {
        self.check_io(o, i)?;
        self.derivative_handle()?.derivative(o, i, dx)
    }

    pub fn apply_adjoint_derivative(&self, o: usize, i: usize, dy: &MdArray<R>) -> Result<MdArray<R>> {
        self.check_io(o, i)?;
        self.derivative_handle()?.adjoint_derivative(o, i, dy)
    }

    /// One reverse pass from output `o` to every input flagged in `want`.
    /// Unflagged inputs, and inputs the output does not depend on, yield `None`.
    pub fn adjoint_all(&self, o: usize, dy: &MdArray<R>, want: &[bool]) -> Result<Vec<Option<MdArray<R>>>> {
        if o >= self.num_outputs() {
            return Err(Error::IndexOutOfRange {
                what: "nlop output",
                index: o,
                len: self.num_outputs(),
            });
        }
        self.derivative_handle()?.adjoint_all(o, dy, want)
    }

    /// Evaluates a real scalar-valued operator and returns `DFᴴ(1)` for every
    /// input. For a complex scalar output this is the gradient of its real part.
    pub fn gradient(&self, inputs: &[&MdArray<R>]) -> Result<Vec<MdArray<R>>> {
        if self.num_outputs() != 1 || self.graph.output_dims(0).iter().product::<usize>() != 1 {
            return Err(Error::InvalidShape(
                "gradient requires a single scalar output".into(),
            ));
        }
        let out = self.apply(inputs)?;
        let seed = MdArray::filled(out[0].dims(), crate::real::one())?;
        let want = vec![true; self.num_inputs()];
        let grads = self.adjoint_all(0, &seed, &want)?;
        grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| match g {
                Some(g) => Ok(g),
                None => MdArray::zeros(&self.graph.input_dims[i]),
            })
            .collect()
    }

    /// Whether every atom in the graph declares complex-linear derivatives.
    pub fn holomorphic(&self) -> bool {
        self.graph.nodes.iter().all(|n| n.atom.op.holomorphic())
    }

    fn check_io(&self, o: usize, i: usize) -> Result<()> {
        if o >= self.num_outputs() {
            return Err(Error::IndexOutOfRange {
                what: "nlop output",
                index: o,
                len: self.num_outputs(),
            });
        }
        if i >= self.num_inputs() {
            return Err(Error::IndexOutOfRange {
                what: "nlop input",
                index: i,
                len: self.num_inputs(),
            });
        }
        Ok(())
    }

    pub(crate) fn graph(&self) -> &Graph<R> {
        &self.graph
    }

    pub(crate) fn clear_state(&self) {
        for n in &self.graph.nodes {
            n.atom.op.clear_state();
        }
    }
}
