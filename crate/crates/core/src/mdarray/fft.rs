//! Unitary multidimensional DFT along selected dimensions.
//!
//! Each transformed axis of length `n` is scaled by `1/√n`, so forward and
//! inverse transforms are adjoint to each other and norm-preserving. The
//! frequency origin is at index 0 (no centering).

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::exec;
use crate::real::{Cplx, Real};

use super::MdArray;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

impl Direction {
    pub fn reverse(self) -> Self {
        match self {
            Direction::Forward => Direction::Inverse,
            Direction::Inverse => Direction::Forward,
        }
    }
}

struct AxisPlan<R: Real> {
    axis: usize,
    forward: Arc<dyn Fft<R>>,
    inverse: Arc<dyn Fft<R>>,
}

/// Precomputed transforms for fixed dimensions and a dimension bitmask.
pub struct DftPlan<R: Real> {
    dims: Vec<usize>,
    flags: u32,
    axes: Vec<AxisPlan<R>>,
}

impl<R: Real> std::fmt::Debug for DftPlan<R> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DftPlan")
            .field("dims", &self.dims)
            .field("flags", &self.flags)
            .finish()
    }
}

impl<R: Real> DftPlan<R> {
    pub fn new(dims: &[usize], flags: u32) -> Result<Self> {
        if dims.len() < 32 && flags >> dims.len() != 0 {
            return Err(Error::InvalidFlags {
                flags,
                rank: dims.len(),
            });
        }
        let mut planner = FftPlanner::<R>::new();
        let axes = (0..dims.len())
            .filter(|&k| flags & (1 << k) != 0 && dims[k] > 1)
            .map(|axis| AxisPlan {
                axis,
                forward: planner.plan_fft_forward(dims[axis]),
                inverse: planner.plan_fft_inverse(dims[axis]),
            })
            .collect();
        Ok(Self {
            dims: dims.to_vec(),
            flags,
            axes,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn flags(&self) -> u32 {
        self.flags
    }

    pub fn apply_inplace(&self, a: &mut MdArray<R>, dir: Direction) -> Result<()> {
        a.require_dims(&self.dims, "dft")?;
        for ap in &self.axes {
            let fft = match dir {
                Direction::Forward => &ap.forward,
                Direction::Inverse => &ap.inverse,
            };
            transform_axis(a.as_mut_slice(), &self.dims, ap.axis, fft.as_ref());
        }
        Ok(())
    }

    pub fn apply(&self, a: &MdArray<R>, dir: Direction) -> Result<MdArray<R>> {
        let mut out = a.clone();
        self.apply_inplace(&mut out, dir)?;
        Ok(out)
    }
}

fn transform_axis<R: Real>(data: &mut [Cplx<R>], dims: &[usize], axis: usize, fft: &dyn Fft<R>) {
    let n = dims[axis];
    let inner: usize = dims[..axis].iter().product();
    let block = inner * n;
    let scale = R::one() / R::from_usize(n).expect("length fits").sqrt();
    let work = data.len() * (usize::BITS - n.leading_zeros()) as usize;
    exec::for_each_chunk_mut(data, block, work, |_, chunk| {
        let mut scratch = vec![crate::real::zero(); fft.get_inplace_scratch_len()];
        if inner == 1 {
            fft.process_with_scratch(chunk, &mut scratch);
            for z in chunk.iter_mut() {
                *z = *z * scale;
            }
        } else {
            let mut line = vec![crate::real::zero(); n];
            for i in 0..inner {
                for (j, z) in line.iter_mut().enumerate() {
                    *z = chunk[i + j * inner];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (j, z) in line.iter().enumerate() {
                    chunk[i + j * inner] = *z * scale;
                }
            }
        }
    });
}

/// Unitary DFT of `a` along the dimensions selected by the bitmask `flags`.
pub fn dft<R: Real>(a: &MdArray<R>, flags: u32, dir: Direction) -> Result<MdArray<R>> {
    DftPlan::new(a.dims(), flags)?.apply(a, dir)
}
