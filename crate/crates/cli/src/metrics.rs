//! Image quality on magnitude images, optionally restricted to a foreground mask.

use nlop::MdArray;

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub mse: f64,
    /// `20·log₁₀(max|reference| / rmse)`; `+∞` for identical images.
    pub psnr: f64,
}

fn mag(z: &nlop::Cplx<f32>) -> f64 {
    (z.re as f64).hypot(z.im as f64)
}

/// Metrics over all entries of `recon` and `reference` (same shape); entries
/// where `mask` is false are left out.
pub fn eval_metrics(recon: &[nlop::Cplx<f32>], reference: &[nlop::Cplx<f32>], mask: Option<&[bool]>) -> Result<Metrics> {
    if recon.len() != reference.len() || mask.is_some_and(|m| m.len() != recon.len()) {
        return Err(CliError::Usage("metric inputs differ in size".into()));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut peak = 0.0f64;
    for (k, (x, r)) in recon.iter().zip(reference).enumerate() {
        if mask.is_some_and(|m| !m[k]) {
            continue;
        }
        let (a, b) = (mag(x), mag(r));
        sum += (a - b) * (a - b);
        peak = peak.max(b);
        count += 1;
    }
    if count == 0 {
        return Err(CliError::Usage("empty mask".into()));
    }
    let mse = sum / count as f64;
    let psnr = if mse == 0.0 {
        f64::INFINITY
    } else {
        20.0 * (peak / mse.sqrt()).log10()
    };
    Ok(Metrics { mse, psnr })
}

/// Metrics of every item along the last dimension of images `[nx, ny, B]`.
pub fn per_item(recon: &MdArray<f32>, reference: &MdArray<f32>, mask: Option<&[bool]>) -> Result<Vec<Metrics>> {
    if recon.dims() != reference.dims() {
        return Err(CliError::Usage(format!(
            "reconstruction {:?} and reference {:?} differ in shape",
            recon.dims(),
            reference.dims()
        )));
    }
    let b = *recon.dims().last().unwrap_or(&1);
    let n = recon.len() / b.max(1);
    (0..b)
        .map(|i| {
            let r = i * n..(i + 1) * n;
            eval_metrics(&recon.as_slice()[r.clone()], &reference.as_slice()[r.clone()], mask.map(|m| &m[r]))
        })
        .collect()
}

/// Foreground `[nx, ny, B]` of coil maps `[nx, ny, nc, M, B]`: pixels where
/// any map is nonzero.
pub fn coil_mask(coils: &MdArray<f32>) -> Vec<bool> {
    let d = coils.dims();
    let (np, inner, b) = (d[0] * d[1], d[2] * d[3], d[4]);
    let mut m = vec![false; np * b];
    for bi in 0..b {
        for c in 0..inner {
            for p in 0..np {
                if coils.as_slice()[p + np * (c + inner * bi)].norm_sqr() > 0.0 {
                    m[p + np * bi] = true;
                }
            }
        }
    }
    m
}
