//! Conversion between file layout and the network layout.
//!
//! Files use dimension 0/1 for the image axes, 3 for coils, 4 for map sets
//! and 15 for the batch; every other dimension must be 1. In memory the
//! networks use `kspace [nx, ny, nc, B]`, `coils [nx, ny, nc, M, B]`,
//! `pattern [nx, ny, B]` and images `[nx, ny, B]`.

use nlop::recon::SenseDims;
use nlop::MdArray;

use crate::cfl::{BATCH_DIM, DIMS};
use crate::error::{CliError, Result};

pub const COIL_DIM: usize = 3;
pub const MAPS_DIM: usize = 4;

/// Checks that only the dimensions in `keep` exceed 1 and returns their sizes.
fn squeeze(a: &MdArray<f32>, file: &str, keep: &[usize]) -> Result<Vec<usize>> {
    let dims = a.dims();
    for (k, &n) in dims.iter().enumerate() {
        if n != 1 && !keep.contains(&k) {
            return Err(CliError::shape(file, k, format!("size {n}, expected 1")));
        }
    }
    Ok(keep.iter().map(|&k| dims.get(k).copied().unwrap_or(1)).collect())
}

/// Repeats a single item `b` times along the last dimension.
fn broadcast(a: MdArray<f32>, file: &str, have: usize, b: usize) -> Result<MdArray<f32>> {
    if have == b {
        Ok(a)
    } else if have == 1 {
        Ok(a.gather_last(&vec![0; b])?)
    } else {
        Err(CliError::shape(file, BATCH_DIM, format!("{have} items, expected {b} or 1")))
    }
}

fn expect(file: &str, dim: usize, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(CliError::shape(file, dim, format!("size {got}, expected {want}")))
    }
}

/// Validated inputs of a reconstruction.
#[derive(Clone, Debug)]
pub struct ReconInputs {
    pub dims: SenseDims,
    pub kspace: MdArray<f32>,
    pub coils: MdArray<f32>,
    pub pattern: MdArray<f32>,
}

pub fn kspace_from_file(a: MdArray<f32>, file: &str) -> Result<MdArray<f32>> {
    let s = squeeze(&a, file, &[0, 1, COIL_DIM, BATCH_DIM])?;
    Ok(a.reshape(&s)?)
}

/// Reads `(kspace, coils, pattern?)` into network layout. The coils and the
/// pattern may hold a single item shared by the whole batch; without a
/// pattern it is estimated from the nonzero k-space samples.
pub fn recon_inputs(
    kspace: MdArray<f32>,
    coils: MdArray<f32>,
    pattern: Option<MdArray<f32>>,
    names: [&str; 3],
) -> Result<ReconInputs> {
    let kspace = kspace_from_file(kspace, names[0])?;
    let (nx, ny, nc, b) = (kspace.dims()[0], kspace.dims()[1], kspace.dims()[2], kspace.dims()[3]);

    let cs = squeeze(&coils, names[1], &[0, 1, COIL_DIM, MAPS_DIM, BATCH_DIM])?;
    expect(names[1], 0, cs[0], nx)?;
    expect(names[1], 1, cs[1], ny)?;
    expect(names[1], COIL_DIM, cs[2], nc)?;
    let maps = cs[3];
    let coils = broadcast(coils.reshape(&cs)?, names[1], cs[4], b)?;

    let pattern = match pattern {
        Some(p) => {
            let ps = squeeze(&p, names[2], &[0, 1, BATCH_DIM])?;
            expect(names[2], 0, ps[0], nx)?;
            expect(names[2], 1, ps[1], ny)?;
            broadcast(p.reshape(&ps)?, names[2], ps[2], b)?
        }
        None => nlop::recon::estimate_pattern(&kspace)?,
    };
    nlop::recon::check_pattern(&pattern).map_err(|e| CliError::shape(names[2], 0, e.to_string()))?;
    Ok(ReconInputs {
        dims: SenseDims {
            nx,
            ny,
            coils: nc,
            maps,
            batch: b,
        },
        kspace,
        coils,
        pattern,
    })
}

/// A reference image `[nx, ny, 1, …, B]` in network layout `[nx, ny, B]`.
pub fn image_from_file(a: MdArray<f32>, file: &str, d: &SenseDims) -> Result<MdArray<f32>> {
    let s = squeeze(&a, file, &[0, 1, BATCH_DIM])?;
    expect(file, 0, s[0], d.nx)?;
    expect(file, 1, s[1], d.ny)?;
    expect(file, BATCH_DIM, s[2], d.batch)?;
    Ok(a.reshape(&s)?)
}

/// Places `[nx, ny, (nc, (M,)) B]`-shaped network arrays into file layout.
fn to_file(a: &MdArray<f32>, slots: &[usize]) -> Result<MdArray<f32>> {
    let mut dims = [1; DIMS];
    for (&slot, &n) in slots.iter().zip(a.dims()) {
        dims[slot] = n;
    }
    Ok(a.clone().reshape(&dims)?)
}

pub fn image_to_file(a: &MdArray<f32>) -> Result<MdArray<f32>> {
    to_file(a, &[0, 1, BATCH_DIM])
}

pub fn kspace_to_file(a: &MdArray<f32>) -> Result<MdArray<f32>> {
    to_file(a, &[0, 1, COIL_DIM, BATCH_DIM])
}

pub fn coils_to_file(a: &MdArray<f32>) -> Result<MdArray<f32>> {
    to_file(a, &[0, 1, COIL_DIM, MAPS_DIM, BATCH_DIM])
}

pub fn pattern_to_file(a: &MdArray<f32>) -> Result<MdArray<f32>> {
    to_file(a, &[0, 1, BATCH_DIM])
}
