//! Named-argument wrapper around an [`Nlop`].

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{mismatch, Error, Result};
use crate::mdarray::MdArray;
use crate::nlop::Nlop;
use crate::optim::Prox;
use crate::real::{Cplx, Real};

/// Arrays keyed by argument name.
pub type Params<R> = BTreeMap<String, MdArray<R>>;

/// How the training loop treats an input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArgKind {
    /// Trainable parameter.
    Weight,
    /// Per-sample data, supplied by the dataset.
    Data,
    /// Running statistics, updated through a designated output.
    MovingStat,
}

/// Initialization scheme for weight and statistics inputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Zeros,
    Const(f64),
    /// Uniform complex (or real) values with variance `2/(fan_in+fan_out)`.
    Glorot { fan_in: usize, fan_out: usize },
    /// Linear ramp from `lo` to `hi` along the first dimension, repeated
    /// along the others.
    Ramp { lo: f64, hi: f64 },
}

impl Init {
    /// Draws an array. `real` restricts values to the real axis.
    pub fn sample<R: Real>(&self, dims: &[usize], real: bool, rng: &mut ChaCha8Rng) -> Result<MdArray<R>> {
        let n: usize = dims.iter().product();
        let f = R::from_f64_lossy;
        let data: Vec<Cplx<R>> = match *self {
            Init::Zeros => vec![Cplx::new(R::zero(), R::zero()); n],
            Init::Const(v) => vec![Cplx::new(f(v), R::zero()); n],
            Init::Glorot { fan_in, fan_out } => {
                let var = 2.0 / (fan_in + fan_out).max(1) as f64;
                // uniform on [-a, a] has variance a²/3; split it over re/im
                let a = if real { (3.0 * var).sqrt() } else { (1.5 * var).sqrt() };
                (0..n)
                    .map(|_| {
                        let re = a * (2.0 * rng.random::<f64>() - 1.0);
                        let im = if real { 0.0 } else { a * (2.0 * rng.random::<f64>() - 1.0) };
                        Cplx::new(f(re), f(im))
                    })
                    .collect()
            }
            Init::Ramp { lo, hi } => {
                let d0 = dims.first().copied().unwrap_or(1);
                (0..n)
                    .map(|k| {
                        let j = k % d0;
                        let t = if d0 > 1 { j as f64 / (d0 - 1) as f64 } else { 0.5 };
                        Cplx::new(f(lo + (hi - lo) * t), R::zero())
                    })
                    .collect()
            }
        };
        MdArray::from_vec(dims, data)
    }
}

/// Description of one model input.
#[derive(Clone, Debug, PartialEq)]
pub struct InputSpec {
    pub name: String,
    pub kind: ArgKind,
    pub dims: Vec<usize>,
    pub init: Option<Init>,
    pub prox: Option<Prox>,
    /// Only the real part is meaningful; counts one parameter per element.
    pub real: bool,
}

impl InputSpec {
    pub fn data(name: &str, dims: &[usize]) -> Self {
        Self {
            name: name.into(),
            kind: ArgKind::Data,
            dims: dims.to_vec(),
            init: None,
            prox: None,
            real: false,
        }
    }

    pub fn weight(name: &str, dims: &[usize], init: Init) -> Self {
        Self {
            name: name.into(),
            kind: ArgKind::Weight,
            dims: dims.to_vec(),
            init: Some(init),
            prox: None,
            real: false,
        }
    }

    pub fn moving_stat(name: &str, dims: &[usize], init: Init) -> Self {
        Self {
            name: name.into(),
            kind: ArgKind::MovingStat,
            dims: dims.to_vec(),
            init: Some(init),
            prox: None,
            real: true,
        }
    }

    pub fn real(mut self) -> Self {
        self.real = true;
        self
    }

    pub fn complex(mut self) -> Self {
        self.real = false;
        self
    }

    pub fn with_prox(mut self, prox: Prox) -> Self {
        self.prox = Some(prox);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OutputKind {
    Output,
    /// New value of the named moving-statistics input.
    MovingStat(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OutputSpec {
    pub name: String,
    pub kind: OutputKind,
}

impl OutputSpec {
    pub fn output(name: &str) -> Self {
        Self {
            name: name.into(),
            kind: OutputKind::Output,
        }
    }

    pub fn moving_stat(name: &str, input: &str) -> Self {
        Self {
            name: name.into(),
            kind: OutputKind::MovingStat(input.into()),
        }
    }
}

/// An operator whose inputs and outputs carry names and kinds.
#[derive(Clone, Debug)]
pub struct Model<R: Real = f32> {
    nlop: Nlop<R>,
    inputs: Vec<InputSpec>,
    outputs: Vec<OutputSpec>,
}

fn unique<'a>(names: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(Error::DuplicateName(n.into()));
        }
    }
    Ok(())
}

fn stable_hash(s: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

impl<R: Real> Model<R> {
    pub fn new(nlop: Nlop<R>, inputs: Vec<InputSpec>, outputs: Vec<OutputSpec>) -> Result<Self> {
        if inputs.len() != nlop.num_inputs() || outputs.len() != nlop.num_outputs() {
            return Err(Error::Graph(format!(
                "model declares {} inputs / {} outputs, operator has {} / {}",
                inputs.len(),
                outputs.len(),
                nlop.num_inputs(),
                nlop.num_outputs()
            )));
        }
        for (i, spec) in inputs.iter().enumerate() {
            if spec.dims.as_slice() != nlop.input_dims(i) {
                return Err(mismatch(nlop.input_dims(i), &spec.dims, format!("input `{}`", spec.name)));
            }
            if spec.kind != ArgKind::Data && spec.init.is_none() {
                return Err(Error::InvalidParameter(format!(
                    "input `{}` needs an initializer",
                    spec.name
                )));
            }
        }
        unique(inputs.iter().map(|s| s.name.as_str()))?;
        unique(outputs.iter().map(|s| s.name.as_str()))?;
        Ok(Self {
            nlop,
            inputs,
            outputs,
        })
    }

    pub fn nlop(&self) -> &Nlop<R> {
        &self.nlop
    }

    pub fn inputs(&self) -> &[InputSpec] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[OutputSpec] {
        &self.outputs
    }

    pub fn input_index(&self, name: &str) -> Result<usize> {
        self.inputs
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| Error::UnknownName(name.into()))
    }

    pub fn output_index(&self, name: &str) -> Result<usize> {
        self.outputs
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| Error::UnknownName(name.into()))
    }

    pub fn input(&self, name: &str) -> Result<&InputSpec> {
        Ok(&self.inputs[self.input_index(name)?])
    }

    pub fn output_dims(&self, name: &str) -> Result<Vec<usize>> {
        let o = self.output_index(name)?;
        Ok(self.nlop.output_dims().swap_remove(o))
    }

    /// Trainable inputs in declaration order.
    pub fn weights(&self) -> impl Iterator<Item = &InputSpec> {
        self.inputs.iter().filter(|s| s.kind == ArgKind::Weight)
    }

    /// Real trainable parameters: one per element for real weights, two
    /// for complex ones.
    pub fn num_parameters(&self) -> usize {
        self.weights()
            .map(|s| s.dims.iter().product::<usize>() * if s.real { 1 } else { 2 })
            .sum()
    }

    /// Draws every weight and statistics input from its initializer.
    /// Each input has its own stream keyed by `(seed, name)`.
    pub fn init_params(&self, seed: u64) -> Result<Params<R>> {
        let mut p = Params::new();
        for s in &self.inputs {
            if let Some(init) = &s.init {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ stable_hash(&s.name));
                p.insert(s.name.clone(), init.sample(&s.dims, s.real, &mut rng)?);
            }
        }
        Ok(p)
    }

    /// Input arrays in operator order, looked up in `args`.
    pub fn gather<'a>(&self, args: &[&'a Params<R>]) -> Result<Vec<&'a MdArray<R>>> {
        self.inputs
            .iter()
            .map(|s| {
                let a = args
                    .iter()
                    .find_map(|m| m.get(&s.name))
                    .ok_or_else(|| Error::UnknownName(s.name.clone()))?;
                if a.dims() != s.dims.as_slice() {
                    return Err(mismatch(&s.dims, a.dims(), format!("argument `{}`", s.name)));
                }
                Ok(a)
            })
            .collect()
    }

    /// Evaluates the model; arguments are looked up by name in the given maps
    /// (earlier maps take precedence).
    pub fn apply(&self, args: &[&Params<R>]) -> Result<Params<R>> {
        let x = self.gather(args)?;
        let y = self.nlop.apply(&x)?;
        Ok(self.outputs.iter().map(|s| s.name.clone()).zip(y).collect())
    }

    /// Stacks two models with disjoint argument names.
    pub fn combine(&self, other: &Model<R>) -> Result<Model<R>> {
        let mut inputs = self.inputs.clone();
        inputs.extend(other.inputs.iter().cloned());
        let mut outputs = self.outputs.clone();
        outputs.extend(other.outputs.iter().cloned());
        Model::new(self.nlop.combine(&other.nlop)?, inputs, outputs)
    }

    /// Stacks two models, merging inputs that share a name. Merged inputs
    /// must agree in kind and dimensions.
    pub fn combine_shared(&self, other: &Model<R>) -> Result<Model<R>> {
        let mut m = self.combine_unchecked(other)?;
        let n_self = self.inputs.len();
        // merge from the back so earlier indices stay valid
        for j in (0..other.inputs.len()).rev() {
            let name = &other.inputs[j].name;
            if let Some(i) = self.inputs.iter().position(|s| &s.name == name) {
                let (a, b) = (&self.inputs[i], &other.inputs[j]);
                if a.kind != b.kind || a.dims != b.dims {
                    return Err(Error::Graph(format!(
                        "cannot share input `{name}`: kinds or dimensions differ"
                    )));
                }
                m.nlop = m.nlop.duplicate(i, n_self + j)?;
                m.inputs.remove(n_self + j);
            }
        }
        unique(m.inputs.iter().map(|s| s.name.as_str()))?;
        unique(m.outputs.iter().map(|s| s.name.as_str()))?;
        Ok(m)
    }

    fn combine_unchecked(&self, other: &Model<R>) -> Result<Model<R>> {
        let mut inputs = self.inputs.clone();
        inputs.extend(other.inputs.iter().cloned());
        let mut outputs = self.outputs.clone();
        outputs.extend(other.outputs.iter().cloned());
        Ok(Model {
            nlop: self.nlop.combine(&other.nlop)?,
            inputs,
            outputs,
        })
    }

    /// Feeds output `out` into input `inp`.
    pub fn link(&self, out: &str, inp: &str) -> Result<Model<R>> {
        let o = self.output_index(out)?;
        let i = self.input_index(inp)?;
        let mut inputs = self.inputs.clone();
        inputs.remove(i);
        let mut outputs = self.outputs.clone();
        outputs.remove(o);
        Ok(Model {
            nlop: self.nlop.link(o, i)?,
            inputs,
            outputs,
        })
    }

    /// Feeds output `out` of `self` into input `inp` of `next`. Other inputs
    /// sharing a name are merged, except moving statistics produced by
    /// `self`, which are passed on to `next`.
    pub fn chain(&self, next: &Model<R>, out: &str, inp: &str) -> Result<Model<R>> {
        const TMP: &str = "\u{0}chain";
        self.output_index(out)?;
        let mut next = next.rename_input(inp, TMP)?;
        let mut passed = Vec::new();
        for (k, spec) in self.outputs.iter().enumerate() {
            if let OutputKind::MovingStat(stat) = &spec.kind {
                if next.input_index(stat).is_ok() {
                    let tmp = format!("\u{0}stat{k}");
                    next = next.rename_input(stat, &tmp)?;
                    passed.push((spec.name.clone(), tmp, stat.clone()));
                }
            }
        }
        let mut m = self.combine_shared_outputs(&next)?;
        m = m.link(out, TMP)?;
        for (o, tmp, _) in &passed {
            m = m.link(o, tmp)?;
        }
        // the rename above also retargeted `next`'s own stat outputs
        for o in &mut m.outputs {
            if let OutputKind::MovingStat(s) = &o.kind {
                if let Some((_, _, stat)) = passed.iter().find(|(_, t, _)| t == s) {
                    o.kind = OutputKind::MovingStat(stat.clone());
                }
            }
        }
        unique(m.outputs.iter().map(|s| s.name.as_str()))?;
        Ok(m)
    }

    /// Like [`combine_shared`](Self::combine_shared) but allows duplicate
    /// output names until links resolve them.
    fn combine_shared_outputs(&self, other: &Model<R>) -> Result<Model<R>> {
        let mut m = self.combine_unchecked(other)?;
        let n_self = self.inputs.len();
        for j in (0..other.inputs.len()).rev() {
            let name = &other.inputs[j].name;
            if let Some(i) = self.inputs.iter().position(|s| &s.name == name) {
                let (a, b) = (&self.inputs[i], &other.inputs[j]);
                if a.kind != b.kind || a.dims != b.dims {
                    return Err(Error::Graph(format!(
                        "cannot share input `{name}`: kinds or dimensions differ"
                    )));
                }
                m.nlop = m.nlop.duplicate(i, n_self + j)?;
                m.inputs.remove(n_self + j);
            }
        }
        unique(m.inputs.iter().map(|s| s.name.as_str()))?;
        // an output name may appear twice only if the first copy is about to be linked
        Ok(m)
    }

    pub fn rename_input(&self, old: &str, new: &str) -> Result<Model<R>> {
        let i = self.input_index(old)?;
        if old != new && self.input_index(new).is_ok() {
            return Err(Error::DuplicateName(new.into()));
        }
        let mut m = self.clone();
        m.inputs[i].name = new.into();
        for o in &mut m.outputs {
            if o.kind == OutputKind::MovingStat(old.into()) {
                o.kind = OutputKind::MovingStat(new.into());
            }
        }
        Ok(m)
    }

    pub fn rename_output(&self, old: &str, new: &str) -> Result<Model<R>> {
        let o = self.output_index(old)?;
        if old != new && self.output_index(new).is_ok() {
            return Err(Error::DuplicateName(new.into()));
        }
        let mut m = self.clone();
        m.outputs[o].name = new.into();
        Ok(m)
    }

    /// Prefixes every weight and moving-statistics name.
    pub fn prefix_params(&self, prefix: &str) -> Result<Model<R>> {
        let mut m = self.clone();
        for i in 0..m.inputs.len() {
            if m.inputs[i].kind != ArgKind::Data {
                let old = m.inputs[i].name.clone();
                m = m.rename_input(&old, &format!("{prefix}{old}"))?;
            }
        }
        Ok(m)
    }

    pub fn remove_output(&self, name: &str) -> Result<Model<R>> {
        let o = self.output_index(name)?;
        let mut outputs = self.outputs.clone();
        outputs.remove(o);
        Ok(Model {
            nlop: self.nlop.del_output(o)?,
            inputs: self.inputs.clone(),
            outputs,
        })
    }

    /// Fixes an input to a constant.
    pub fn bind(&self, name: &str, value: MdArray<R>) -> Result<Model<R>> {
        let i = self.input_index(name)?;
        value.require_dims(&self.inputs[i].dims, name)?;
        let mut inputs = self.inputs.clone();
        inputs.remove(i);
        Ok(Model {
            nlop: self.nlop.bind_input(i, value)?,
            inputs,
            outputs: self.outputs.clone(),
        })
    }

    /// Feeds input `keep` to the operator wherever `drop` was used; `drop`
    /// disappears from the signature.
    pub fn merge_inputs(&self, keep: &str, drop: &str) -> Result<Model<R>> {
        let i = self.input_index(keep)?;
        let j = self.input_index(drop)?;
        let (a, b) = (&self.inputs[i], &self.inputs[j]);
        if i == j || a.kind != b.kind || a.dims != b.dims {
            return Err(Error::Graph(format!(
                "cannot merge `{drop}` into `{keep}`: kinds or dimensions differ"
            )));
        }
        let mut inputs = self.inputs.clone();
        inputs.remove(j);
        Ok(Model {
            nlop: self.nlop.duplicate(i, j)?,
            inputs,
            outputs: self.outputs.clone(),
        })
    }

    pub fn set_kind(&self, name: &str, kind: ArgKind) -> Result<Model<R>> {
        let i = self.input_index(name)?;
        let mut m = self.clone();
        m.inputs[i].kind = kind;
        Ok(m)
    }

    pub fn set_prox(&self, name: &str, prox: Option<Prox>) -> Result<Model<R>> {
        let i = self.input_index(name)?;
        let mut m = self.clone();
        m.inputs[i].prox = prox;
        Ok(m)
    }

    /// Replaces the operator by a transformed one with the same signature,
    /// e.g. a checkpointed version.
    pub fn map_nlop(&self, f: impl FnOnce(&Nlop<R>) -> Nlop<R>) -> Result<Model<R>> {
        Model::new(f(&self.nlop), self.inputs.clone(), self.outputs.clone())
    }
}
