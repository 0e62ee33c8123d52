//! Small named building blocks shared by the network builders.

use crate::error::Result;
use crate::linop::Linop;
use crate::mdarray::MdArray;
use crate::nlop::{self, Nlop};
use crate::nn::{InputSpec, Model, OutputSpec};
use crate::real::Real;

use super::sense::{sense_adjoint_nlop, sense_normal_nlop, SenseDims};

/// A linear operator with input `inp` and output `out`.
pub fn linear<R: Real>(op: &Linop<R>, inp: &str, out: &str) -> Result<Model<R>> {
    Model::new(
        nlop::from_linop(op),
        vec![InputSpec::data(inp, op.in_dims())],
        vec![OutputSpec::output(out)],
    )
}

/// Picks map set `m` of an image `[nx, ny, M, B]` as `[nx, ny, 1, B]`.
/// The adjoint embeds into map set `m` with zeros elsewhere.
pub fn select_map<R: Real>(d: &SenseDims, m: usize) -> Linop<R> {
    let full = d.image();
    let part = vec![d.nx, d.ny, 1, d.batch];
    let np = d.nx * d.ny;
    let strides = vec![1, d.nx as isize, np as isize, (np * d.maps) as isize];
    let (s1, s2) = (strides.clone(), strides);
    let (p1, p2) = (part.clone(), part.clone());
    let f2 = full.clone();
    Linop::from_fns(
        &full,
        &part,
        move |x: &MdArray<R>| Ok(x.make_view(&p1, &s1, m * np)?.to_owned()),
        move |y: &MdArray<R>| {
            let mut out = MdArray::zeros(&f2)?;
            out.make_view_mut(&p2, &s2, m * np)?.assign(&y.view())?;
            Ok(out)
        },
    )
}

/// `(a, b) ↦ a ± b` with named arguments.
pub fn add_sub<R: Real>(dims: &[usize], a: &str, b: &str, out: &str, negate: bool) -> Result<Model<R>> {
    let op = if negate { nlop::sub(dims) } else { nlop::add(dims) };
    Model::new(
        op,
        vec![InputSpec::data(a, dims), InputSpec::data(b, dims)],
        vec![OutputSpec::output(out)],
    )
}

/// `(s, x) ↦ Re(s)·x` for a scalar input `s` given by `scalar`.
pub fn scale_by<R: Real>(scalar: InputSpec, dims: &[usize], x: &str, out: &str) -> Result<Model<R>> {
    Model::new(
        nlop::scale_real(&scalar.dims, dims)?,
        vec![scalar, InputSpec::data(x, dims)],
        vec![OutputSpec::output(out)],
    )
}

/// `ℓ ↦ exp(Re ℓ)` for a named (typically weight) input.
pub fn exp_of<R: Real>(arg: InputSpec, out: &str) -> Result<Model<R>> {
    let d = arg.dims.clone();
    Model::new(nlop::exp_real(&d), vec![arg], vec![OutputSpec::output(out)])
}

/// `(x, coils, pattern) ↦ AᴴA x`.
pub fn sense_normal<R: Real>(d: &SenseDims, x: &str, out: &str) -> Result<Model<R>> {
    Model::new(
        sense_normal_nlop(d),
        vec![
            InputSpec::data(x, &d.image()),
            InputSpec::data("coils", &d.coil_maps()),
            InputSpec::data("pattern", &d.pattern()),
        ],
        vec![OutputSpec::output(out)],
    )
}

/// `(kspace, coils, pattern) ↦ Aᴴ kspace`.
pub fn sense_adjoint<R: Real>(d: &SenseDims, out: &str) -> Result<Model<R>> {
    Model::new(
        sense_adjoint_nlop(d),
        vec![
            InputSpec::data("kspace", &d.kspace()),
            InputSpec::data("coils", &d.coil_maps()),
            InputSpec::data("pattern", &d.pattern()),
        ],
        vec![OutputSpec::output(out)],
    )
}

/// Reorders the inputs of `m`'s operator to the given names.
pub fn nlop_with_inputs<R: Real>(m: &Model<R>, names: &[&str]) -> Result<Nlop<R>> {
    let perm = names.iter().map(|n| m.input_index(n)).collect::<Result<Vec<_>>>()?;
    m.nlop().permute_inputs(&perm)
}

/// Wraps a network: `kspace, coils, pattern ↦ image` (map set 0, `[nx, ny, B]`)
/// from a model mapping `aty` (the adjoint reconstruction) to `x`.
pub fn finish_network<R: Real>(d: &SenseDims, steps: &Model<R>) -> Result<Model<R>> {
    let adj = sense_adjoint(d, "aty")?;
    let net = adj.chain(steps, "aty", "aty")?;
    let flat = select_map::<R>(d, 0).chain(&Linop::reshape(&[d.nx, d.ny, 1, d.batch], &d.map_image())?)?;
    net.chain(&linear(&flat, "\u{0}x", "image")?, "x", "\u{0}x")
}
