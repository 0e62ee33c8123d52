//! Flattened operator graphs and derivative propagation.

use std::sync::Arc;

use crate::error::{mismatch, Error, Result};
use crate::mdarray::MdArray;
use crate::real::Real;

use super::{accumulate, Atom, Ctx};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub(crate) enum Source {
    Input(usize),
    Node(usize, usize),
}

pub(crate) struct Node<R: Real> {
    pub(crate) atom: Arc<Atom<R>>,
    pub(crate) inputs: Vec<Source>,
}

impl<R: Real> Clone for Node<R> {
    fn clone(&self) -> Self {
        Self {
            atom: self.atom.clone(),
            inputs: self.inputs.clone(),
        }
    }
}

/// Nodes are kept in topological order: a node only reads from graph inputs
/// and from nodes before it.
pub(crate) struct Graph<R: Real> {
    pub(crate) input_dims: Vec<Vec<usize>>,
    pub(crate) nodes: Vec<Node<R>>,
    pub(crate) outputs: Vec<Source>,
}

impl<R: Real> Clone for Graph<R> {
    fn clone(&self) -> Self {
        Self {
            input_dims: self.input_dims.clone(),
            nodes: self.nodes.clone(),
            outputs: self.outputs.clone(),
        }
    }
}

/// Small dense bitset over graph inputs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct Bits(Vec<u64>);

impl Bits {
    fn new(n: usize) -> Self {
        Bits(vec![0; n.div_ceil(64)])
    }
    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }
    fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }
    fn or(&mut self, o: &Bits) {
        for (a, b) in self.0.iter_mut().zip(&o.0) {
            *a |= b;
        }
    }
    fn first_in(&self, mask: &[bool]) -> Option<usize> {
        (0..mask.len()).find(|&i| mask[i] && self.get(i))
    }
    fn intersects(&self, mask: &[bool]) -> bool {
        mask.iter().enumerate().any(|(i, &m)| m && self.get(i))
    }
}

impl<R: Real> Graph<R> {
    pub(crate) fn atomic(atom: Arc<Atom<R>>) -> Self {
        let input_dims = atom.op.input_dims().to_vec();
        let nout = atom.op.output_dims().len();
        let ninp = input_dims.len();
        Self {
            input_dims,
            nodes: vec![Node {
                atom,
                inputs: (0..ninp).map(Source::Input).collect(),
            }],
            outputs: (0..nout).map(|s| Source::Node(0, s)).collect(),
        }
    }

    pub(crate) fn identity(dims: &[usize]) -> Self {
        Self {
            input_dims: vec![dims.to_vec()],
            nodes: Vec::new(),
            outputs: vec![Source::Input(0)],
        }
    }

    pub(crate) fn source_dims(&self, s: Source) -> Vec<usize> {
        match s {
            Source::Input(j) => self.input_dims[j].clone(),
            Source::Node(k, slot) => self.nodes[k].atom.op.output_dims()[slot].clone(),
        }
    }

    pub(crate) fn output_dims(&self, o: usize) -> Vec<usize> {
        self.source_dims(self.outputs[o])
    }

    /// Number of consumers of every node slot, counting graph outputs.
    fn use_counts(&self) -> Vec<Vec<usize>> {
        let mut uses: Vec<Vec<usize>> = self
            .nodes
            .iter()
            .map(|n| vec![0; n.atom.op.output_dims().len()])
            .collect();
        let mut bump = |s: &Source| {
            if let Source::Node(k, slot) = *s {
                uses[k][slot] += 1;
            }
        };
        for n in &self.nodes {
            n.inputs.iter().for_each(&mut bump);
        }
        self.outputs.iter().for_each(&mut bump);
        uses
    }

    pub(crate) fn forward(&self, inputs: &[&MdArray<R>], ctx: Ctx) -> Result<Vec<MdArray<R>>> {
        if inputs.len() != self.input_dims.len() {
            return Err(Error::InvalidShape(format!(
                "operator takes {} inputs, got {}",
                self.input_dims.len(),
                inputs.len()
            )));
        }
        for (j, (x, d)) in inputs.iter().zip(&self.input_dims).enumerate() {
            if x.dims() != d.as_slice() {
                return Err(mismatch(d, x.dims(), format!("operator input {j}")));
            }
        }
        let mut remaining = self.use_counts();
        let mut values: Vec<Vec<Option<MdArray<R>>>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let out = {
                let args: Vec<&MdArray<R>> = node
                    .inputs
                    .iter()
                    .map(|s| match *s {
                        Source::Input(j) => inputs[j],
                        Source::Node(k, slot) => values[k][slot]
                            .as_ref()
                            .expect("value consumed before its last use"),
                    })
                    .collect();
                node.atom.forward(&args, ctx)?
            };
            for s in &node.inputs {
                if let Source::Node(k, slot) = *s {
                    remaining[k][slot] -= 1;
                    if remaining[k][slot] == 0 {
                        values[k][slot] = None;
                    }
                }
            }
            values.push(out.into_iter().map(Some).collect());
        }
        let mut outs = Vec::with_capacity(self.outputs.len());
        for s in &self.outputs {
            outs.push(match *s {
                Source::Input(j) => inputs[j].clone(),
                Source::Node(k, slot) => {
                    remaining[k][slot] -= 1;
                    if remaining[k][slot] == 0 {
                        values[k][slot].take().expect("output value")
                    } else {
                        values[k][slot].clone().expect("output value")
                    }
                }
            });
        }
        Ok(outs)
    }

    /// For every node slot, the set of graph inputs it structurally depends on.
    fn input_reach(&self) -> Vec<Vec<Bits>> {
        let ni = self.input_dims.len();
        let mut reach: Vec<Vec<Bits>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let op = &node.atom.op;
            let nout = op.output_dims().len();
            let mut slots = vec![Bits::new(ni); nout];
            for (k, s) in node.inputs.iter().enumerate() {
                let src = match *s {
                    Source::Input(j) => {
                        let mut b = Bits::new(ni);
                        b.set(j);
                        b
                    }
                    Source::Node(n, slot) => reach[n][slot].clone(),
                };
                for (o, bits) in slots.iter_mut().enumerate() {
                    if op.depends(o, k) {
                        bits.or(&src);
                    }
                }
            }
            reach.push(slots);
        }
        reach
    }

    /// `m[o][i]`: whether output `o` structurally depends on input `i`.
    pub(crate) fn dependency_matrix(&self) -> Vec<Vec<bool>> {
        let reach = self.input_reach();
        self.outputs
            .iter()
            .map(|&s| {
                let r = self.source_reach(&reach, s);
                (0..self.input_dims.len()).map(|i| r.get(i)).collect()
            })
            .collect()
    }

    fn source_reach(&self, reach: &[Vec<Bits>], s: Source) -> Bits {
        match s {
            Source::Input(j) => {
                let mut b = Bits::new(self.input_dims.len());
                b.set(j);
                b
            }
            Source::Node(k, slot) => reach[k][slot].clone(),
        }
    }

    /// For every node slot, whether any graph output flagged in `want`
    /// depends on it.
    fn output_need(&self, want: &[bool]) -> Vec<Vec<bool>> {
        let mut need: Vec<Vec<bool>> = self
            .nodes
            .iter()
            .map(|n| vec![false; n.atom.op.output_dims().len()])
            .collect();
        for (o, s) in self.outputs.iter().enumerate() {
            if let (true, Source::Node(k, slot)) = (want[o], *s) {
                need[k][slot] = true;
            }
        }
        for k in (0..self.nodes.len()).rev() {
            let node = &self.nodes[k];
            let op = &node.atom.op;
            for (i, s) in node.inputs.iter().enumerate() {
                if let Source::Node(n, slot) = *s {
                    if (0..need[k].len()).any(|out| need[k][out] && op.depends(out, i)) {
                        need[n][slot] = true;
                    }
                }
            }
        }
        need
    }
}

/// Derivatives of an operator at the point of its last forward call.
///
/// A handle remains valid until any atom of the graph is evaluated again.
pub struct DerivativeHandle<R: Real> {
    graph: Arc<Graph<R>>,
    generations: Vec<u64>,
}

impl<R: Real> DerivativeHandle<R> {
    pub(crate) fn new(graph: Arc<Graph<R>>) -> Result<Self> {
        let mut generations = Vec::with_capacity(graph.nodes.len());
        for n in &graph.nodes {
            let g = n.atom.generation();
            if g == 0 {
                return Err(Error::NoForwardState);
            }
            generations.push(g);
        }
        Ok(Self { graph, generations })
    }

    fn check(&self) -> Result<()> {
        for (n, &held) in self.graph.nodes.iter().zip(&self.generations) {
            let current = n.atom.generation();
            if current != held {
                return Err(Error::StaleDerivative { held, current });
            }
        }
        Ok(())
    }

    pub fn num_inputs(&self) -> usize {
        self.graph.input_dims.len()
    }

    pub fn num_outputs(&self) -> usize {
        self.graph.outputs.len()
    }

    fn check_index(&self, o: Option<usize>, i: Option<usize>) -> Result<()> {
        let g = &*self.graph;
        if let Some(o) = o.filter(|&o| o >= g.outputs.len()) {
            return Err(Error::IndexOutOfRange {
                what: "nlop output",
                index: o,
                len: g.outputs.len(),
            });
        }
        if let Some(i) = i.filter(|&i| i >= g.input_dims.len()) {
            return Err(Error::IndexOutOfRange {
                what: "nlop input",
                index: i,
                len: g.input_dims.len(),
            });
        }
        Ok(())
    }

    /// Forward-mode derivative `D_i F_o (dx)`.
    pub fn derivative(&self, o: usize, i: usize, dx: &MdArray<R>) -> Result<MdArray<R>> {
        self.check_index(Some(o), Some(i))?;
        let mut dxs = vec![None; self.num_inputs()];
        dxs[i] = Some(dx);
        let mut want = vec![false; self.num_outputs()];
        want[o] = true;
        let mut r = self.derivative_multi(&dxs, &want)?;
        Ok(r[o].take().expect("wanted output"))
    }

    /// Forward-mode derivative for tangents on several inputs at once
    /// (`None` means zero). Returns a value for every output flagged in `want`.
    pub fn derivative_multi(
        &self,
        dxs: &[Option<&MdArray<R>>],
        want: &[bool],
    ) -> Result<Vec<Option<MdArray<R>>>> {
        self.check()?;
        let g = &*self.graph;
        let ni = g.input_dims.len();
        if dxs.len() != ni || want.len() != g.outputs.len() {
            return Err(Error::InvalidShape(
                "tangent or output mask length does not match the operator".into(),
            ));
        }
        for (j, dx) in dxs.iter().enumerate() {
            if let Some(dx) = dx {
                if dx.dims() != g.input_dims[j].as_slice() {
                    return Err(mismatch(&g.input_dims[j], dx.dims(), "derivative input"));
                }
            }
        }
        let active_in: Vec<bool> = dxs.iter().map(Option::is_some).collect();
        let need = g.output_need(want);
        let reach = g.input_reach();
        let mut tangents: Vec<Vec<Option<MdArray<R>>>> = Vec::with_capacity(g.nodes.len());
        for (k, node) in g.nodes.iter().enumerate() {
            let op = &node.atom.op;
            let want_out = &need[k];
            let tin: Vec<Option<&MdArray<R>>> = node
                .inputs
                .iter()
                .map(|s| match *s {
                    Source::Input(j) => dxs[j],
                    Source::Node(n, slot) => tangents[n][slot].as_ref(),
                })
                .collect();
            let active = want_out.iter().any(|&w| w) && tin.iter().any(Option::is_some);
            if !active {
                tangents.push(vec![None; want_out.len()]);
                continue;
            }
            for (s, d) in tin.iter().enumerate() {
                if d.is_some()
                    && !op.differentiable(s)
                    && (0..want_out.len()).any(|out| want_out[out] && op.depends(out, s))
                {
                    let r = g.source_reach(&reach, node.inputs[s]);
                    return Err(Error::NotDifferentiable(r.first_in(&active_in).unwrap_or(0)));
                }
            }
            tangents.push(op.derivative_batch(&tin, want_out)?);
        }
        let mut res = Vec::with_capacity(want.len());
        for (o, &w) in want.iter().enumerate() {
            if !w {
                res.push(None);
                continue;
            }
            let v = match g.outputs[o] {
                Source::Input(j) => dxs[j].cloned(),
                Source::Node(k, slot) => tangents[k][slot].clone(),
            };
            res.push(Some(match v {
                Some(v) => v,
                None => MdArray::zeros(&g.output_dims(o))?,
            }));
        }
        Ok(res)
    }

    /// Reverse-mode derivative `(D_i F_o)ᴴ (dy)`.
    pub fn adjoint_derivative(&self, o: usize, i: usize, dy: &MdArray<R>) -> Result<MdArray<R>> {
        self.check_index(Some(o), Some(i))?;
        let mut want = vec![false; self.num_inputs()];
        want[i] = true;
        let mut r = self.adjoint_all(o, dy, &want)?;
        match r[i].take() {
            Some(x) => Ok(x),
            None => MdArray::zeros(&self.graph.input_dims[i]),
        }
    }

    /// One reverse pass from output `o`; returns cotangents for the inputs
    /// flagged in `want` (`None` where there is no dependence).
    pub fn adjoint_all(&self, o: usize, dy: &MdArray<R>, want: &[bool]) -> Result<Vec<Option<MdArray<R>>>> {
        self.check_index(Some(o), None)?;
        let mut dys = vec![None; self.num_outputs()];
        dys[o] = Some(dy);
        self.adjoint_multi(&dys, want)
    }

    /// Reverse pass seeded on several outputs at once (`None` means zero).
    pub fn adjoint_multi(
        &self,
        dys: &[Option<&MdArray<R>>],
        want: &[bool],
    ) -> Result<Vec<Option<MdArray<R>>>> {
        self.check()?;
        let g = &*self.graph;
        let ni = g.input_dims.len();
        if want.len() != ni || dys.len() != g.outputs.len() {
            return Err(Error::InvalidShape(
                "cotangent or input mask length does not match the operator".into(),
            ));
        }
        let reach = g.input_reach();
        let mut input_cot: Vec<Option<MdArray<R>>> = vec![None; ni];
        let mut cot: Vec<Vec<Option<MdArray<R>>>> = g
            .nodes
            .iter()
            .map(|n| vec![None; n.atom.op.output_dims().len()])
            .collect();
        for (o, dy) in dys.iter().enumerate() {
            let Some(dy) = dy else { continue };
            let od = g.output_dims(o);
            if dy.dims() != od.as_slice() {
                return Err(mismatch(&od, dy.dims(), "adjoint derivative input"));
            }
            match g.outputs[o] {
                Source::Input(j) => {
                    if want[j] {
                        accumulate(&mut input_cot[j], (*dy).clone())?;
                    }
                }
                Source::Node(k, slot) => {
                    if reach[k][slot].intersects(want) {
                        accumulate(&mut cot[k][slot], (*dy).clone())?;
                    }
                }
            }
        }
        for k in (0..g.nodes.len()).rev() {
            if cot[k].iter().all(Option::is_none) {
                continue;
            }
            let node = &g.nodes[k];
            let op = &node.atom.op;
            let dys_owned = std::mem::take(&mut cot[k]);
            let dys: Vec<Option<&MdArray<R>>> = dys_owned.iter().map(Option::as_ref).collect();
            let mut want_in = Vec::with_capacity(node.inputs.len());
            for (s, src) in node.inputs.iter().enumerate() {
                let r = g.source_reach(&reach, *src);
                let hit = r.intersects(want)
                    && (0..dys.len()).any(|out| dys[out].is_some() && op.depends(out, s));
                if hit && !op.differentiable(s) {
                    return Err(Error::NotDifferentiable(r.first_in(want).unwrap_or(0)));
                }
                want_in.push(hit);
            }
            if !want_in.iter().any(|&w| w) {
                continue;
            }
            let res = op.adjoint_batch(&dys, &want_in)?;
            for (s, r) in res.into_iter().enumerate() {
                let Some(r) = r else { continue };
                if !want_in[s] {
                    continue;
                }
                match node.inputs[s] {
                    Source::Input(j) => accumulate(&mut input_cot[j], r)?,
                    Source::Node(n, slot) => accumulate(&mut cot[n][slot], r)?,
                }
            }
        }
        Ok(input_cot)
    }
}
