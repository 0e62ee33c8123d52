//! Per-sample scaling so that the adjoint reconstruction has `max |x⁰| = 1`.

use crate::error::{Error, Result};
use crate::mdarray::MdArray;
use crate::real::Real;

/// Multiplies item `b` (along the last dimension) of `a` by `scales[b]`.
pub fn scale_items<R: Real>(a: &MdArray<R>, scales: &[f64]) -> Result<MdArray<R>> {
    let n = *a.dims().last().unwrap_or(&1);
    if n != scales.len() {
        return Err(Error::InvalidShape(format!("{} scale factors for {n} items", scales.len())));
    }
    let mut out = a.clone();
    let len = a.len() / n.max(1);
    for (chunk, &s) in out.as_mut_slice().chunks_mut(len.max(1)).zip(scales) {
        let s = R::from_f64_lossy(s);
        for z in chunk {
            *z = *z * s;
        }
    }
    Ok(out)
}

/// Scale factors `1 / max|x⁰_b|` for every item `b` of `x0`, and `y` scaled
/// by them. The network output is mapped back with the reciprocals.
pub fn normalize<R: Real>(x0: &MdArray<R>, y: &MdArray<R>) -> Result<(Vec<f64>, MdArray<R>)> {
    let n = *x0.dims().last().unwrap_or(&1);
    let len = x0.len() / n.max(1);
    let mut scales = Vec::with_capacity(n);
    for (b, chunk) in x0.as_slice().chunks(len.max(1)).enumerate() {
        let m = chunk.iter().map(|z| z.norm().to_f64_lossy()).fold(0.0, f64::max);
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "cannot normalize item {b}: adjoint reconstruction is zero or non-finite"
            )));
        }
        scales.push(1.0 / m);
    }
    let scaled = scale_items(y, &scales)?;
    Ok((scales, scaled))
}

/// Undoes [`normalize`] on a network output.
pub fn denormalize<R: Real>(x: &MdArray<R>, scales: &[f64]) -> Result<MdArray<R>> {
    let inv: Vec<f64> = scales.iter().map(|s| 1.0 / s).collect();
    scale_items(x, &inv)
}
