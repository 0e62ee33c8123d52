//! Composition of operators: combine, link, duplicate, chain.

use std::collections::{BTreeSet, HashSet};

use crate::error::{mismatch, Error, Result};
use crate::mdarray::MdArray;
use crate::real::Real;

use super::atoms::Constant;
use super::graph::{Graph, Node, Source};
use super::Nlop;

fn out_of_range(what: &'static str, index: usize, len: usize) -> Error {
    Error::IndexOutOfRange { what, index, len }
}

/// Sorts nodes topologically (stable with respect to the current order) and
/// drops nodes that no output depends on.
fn finish<R: Real>(input_dims: Vec<Vec<usize>>, nodes: Vec<Node<R>>, outputs: Vec<Source>) -> Result<Graph<R>> {
    let n = nodes.len();
    let mut indeg = vec![0usize; n];
    let mut users: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, node) in nodes.iter().enumerate() {
        for s in &node.inputs {
            if let Source::Node(p, _) = *s {
                indeg[k] += 1;
                users[p].push(k);
            }
        }
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&k| indeg[k] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(k) = ready.pop_first() {
        order.push(k);
        for &u in &users[k] {
            indeg[u] -= 1;
            if indeg[u] == 0 {
                ready.insert(u);
            }
        }
    }
    if order.len() != n {
        return Err(Error::Graph("link would create a cycle".into()));
    }

    // liveness: nodes reachable backwards from the outputs
    let mut live = vec![false; n];
    let mut stack: Vec<usize> = outputs
        .iter()
        .filter_map(|s| match *s {
            Source::Node(k, _) => Some(k),
            Source::Input(_) => None,
        })
        .collect();
    while let Some(k) = stack.pop() {
        if live[k] {
            continue;
        }
        live[k] = true;
        for s in &nodes[k].inputs {
            if let Source::Node(p, _) = *s {
                stack.push(p);
            }
        }
    }

    let mut new_index = vec![usize::MAX; n];
    let mut kept = Vec::new();
    for &k in &order {
        if live[k] {
            new_index[k] = kept.len();
            kept.push(k);
        }
    }
    let remap = |s: Source| match s {
        Source::Node(k, slot) => Source::Node(new_index[k], slot),
        s => s,
    };
    let new_nodes = kept
        .iter()
        .map(|&k| Node {
            atom: nodes[k].atom.clone(),
            inputs: nodes[k].inputs.iter().map(|&s| remap(s)).collect(),
        })
        .collect();
    Ok(Graph {
        input_dims,
        nodes: new_nodes,
        outputs: outputs.into_iter().map(remap).collect(),
    })
}

fn map_sources<R: Real>(nodes: &mut [Node<R>], outputs: &mut [Source], f: impl Fn(Source) -> Source) {
    for n in nodes.iter_mut() {
        for s in n.inputs.iter_mut() {
            *s = f(*s);
        }
    }
    for s in outputs.iter_mut() {
        *s = f(*s);
    }
}

impl<R: Real> Nlop<R> {
    /// Stacks the inputs and outputs of `self` followed by those of `other`.
    pub fn combine(&self, other: &Nlop<R>) -> Result<Nlop<R>> {
        let (a, b) = (self.graph(), other.graph());
        let ids: HashSet<u64> = a.nodes.iter().map(|n| n.atom.id).collect();
        if b.nodes.iter().any(|n| ids.contains(&n.atom.id)) {
            return Err(Error::Graph(
                "combine: the same operator instance appears in both graphs".into(),
            ));
        }
        let (ni, nn) = (a.input_dims.len(), a.nodes.len());
        let shift = |s: Source| match s {
            Source::Input(j) => Source::Input(j + ni),
            Source::Node(k, slot) => Source::Node(k + nn, slot),
        };
        let mut nodes = a.nodes.clone();
        nodes.extend(b.nodes.iter().map(|n| Node {
            atom: n.atom.clone(),
            inputs: n.inputs.iter().map(|&s| shift(s)).collect(),
        }));
        let mut outputs = a.outputs.clone();
        outputs.extend(b.outputs.iter().map(|&s| shift(s)));
        let mut input_dims = a.input_dims.clone();
        input_dims.extend(b.input_dims.iter().cloned());
        Ok(Nlop::from_graph(Graph {
            input_dims,
            nodes,
            outputs,
        }))
    }

    /// Feeds output `o` into input `i`; both disappear from the signature.
    pub fn link(&self, o: usize, i: usize) -> Result<Nlop<R>> {
        let g = self.graph();
        if o >= g.outputs.len() {
            return Err(out_of_range("nlop output", o, g.outputs.len()));
        }
        if i >= g.input_dims.len() {
            return Err(out_of_range("nlop input", i, g.input_dims.len()));
        }
        let od = g.output_dims(o);
        if od != g.input_dims[i] {
            return Err(mismatch(&g.input_dims[i], &od, "link"));
        }
        let src = g.outputs[o];
        if src == Source::Input(i) {
            return Err(Error::Graph("link would create a cycle".into()));
        }
        let shift = |j: usize| if j > i { j - 1 } else { j };
        let src = match src {
            Source::Input(j) => Source::Input(shift(j)),
            s => s,
        };
        let mut nodes = g.nodes.clone();
        let mut outputs = g.outputs.clone();
        outputs.remove(o);
        map_sources(&mut nodes, &mut outputs, |s| match s {
            Source::Input(j) if j == i => src,
            Source::Input(j) => Source::Input(shift(j)),
            s => s,
        });
        let mut input_dims = g.input_dims.clone();
        input_dims.remove(i);
        Ok(Nlop::from_graph(finish(input_dims, nodes, outputs)?))
    }

    /// Merges input `j` into input `i`.
    pub fn duplicate(&self, i: usize, j: usize) -> Result<Nlop<R>> {
        let g = self.graph();
        let ni = g.input_dims.len();
        for k in [i, j] {
            if k >= ni {
                return Err(out_of_range("nlop input", k, ni));
            }
        }
        if i == j {
            return Err(Error::Graph("duplicate: indices must differ".into()));
        }
        if g.input_dims[i] != g.input_dims[j] {
            return Err(mismatch(&g.input_dims[i], &g.input_dims[j], "duplicate"));
        }
        let shift = |k: usize| if k > j { k - 1 } else { k };
        let mut nodes = g.nodes.clone();
        let mut outputs = g.outputs.clone();
        map_sources(&mut nodes, &mut outputs, |s| match s {
            Source::Input(k) if k == j => Source::Input(shift(i)),
            Source::Input(k) => Source::Input(shift(k)),
            s => s,
        });
        let mut input_dims = g.input_dims.clone();
        input_dims.remove(j);
        Ok(Nlop::from_graph(finish(input_dims, nodes, outputs)?))
    }

    /// `G ∘ F` for single-output `F = self` and single-input `G = next`.
    pub fn chain(&self, next: &Nlop<R>) -> Result<Nlop<R>> {
        if self.num_outputs() != 1 || next.num_inputs() != 1 {
            return Err(Error::Graph(
                "chain requires a single-output operator followed by a single-input one".into(),
            ));
        }
        // inputs: [F.., G.in], outputs: [F.out, G..]
        let ni = self.num_inputs();
        self.combine(next)?.link(0, ni)
    }

    /// Reorders inputs: new input `k` is old input `perm[k]`.
    pub fn permute_inputs(&self, perm: &[usize]) -> Result<Nlop<R>> {
        let g = self.graph();
        let inv = inverse_perm(perm, g.input_dims.len())?;
        let mut nodes = g.nodes.clone();
        let mut outputs = g.outputs.clone();
        map_sources(&mut nodes, &mut outputs, |s| match s {
            Source::Input(j) => Source::Input(inv[j]),
            s => s,
        });
        let input_dims = perm.iter().map(|&p| g.input_dims[p].clone()).collect();
        Ok(Nlop::from_graph(Graph {
            input_dims,
            nodes,
            outputs,
        }))
    }

    /// Reorders outputs: new output `k` is old output `perm[k]`.
    pub fn permute_outputs(&self, perm: &[usize]) -> Result<Nlop<R>> {
        let g = self.graph();
        inverse_perm(perm, g.outputs.len())?;
        let mut ng = g.clone();
        ng.outputs = perm.iter().map(|&p| g.outputs[p]).collect();
        Ok(Nlop::from_graph(ng))
    }

    /// Removes output `o`, dropping operators only it depended on.
    pub fn del_output(&self, o: usize) -> Result<Nlop<R>> {
        let g = self.graph();
        if o >= g.outputs.len() {
            return Err(out_of_range("nlop output", o, g.outputs.len()));
        }
        let mut outputs = g.outputs.clone();
        outputs.remove(o);
        Ok(Nlop::from_graph(finish(
            g.input_dims.clone(),
            g.nodes.clone(),
            outputs,
        )?))
    }

    /// Fixes input `i` to a constant value.
    pub fn bind_input(&self, i: usize, value: MdArray<R>) -> Result<Nlop<R>> {
        if i >= self.num_inputs() {
            return Err(out_of_range("nlop input", i, self.num_inputs()));
        }
        Nlop::new(Constant::new(value)).combine(self)?.link(0, i)
    }
}

fn inverse_perm(perm: &[usize], n: usize) -> Result<Vec<usize>> {
    if perm.len() != n {
        return Err(Error::Graph(format!(
            "permutation of length {} for {n} entries",
            perm.len()
        )));
    }
    let mut inv = vec![usize::MAX; n];
    for (k, &p) in perm.iter().enumerate() {
        if p >= n || inv[p] != usize::MAX {
            return Err(Error::Graph(format!("invalid permutation {perm:?}")));
        }
        inv[p] = k;
    }
    Ok(inv)
}
