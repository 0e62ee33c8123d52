//! N-dimensional complex convolution (cross-correlation, no kernel flip).
//!
//! Layouts, with `d` convolution axes leading:
//! input `x: [s₁…s_d, C_in, B]`, kernel `K: [k₁…k_d, C_in, C_out]`,
//! output `y: [o₁…o_d, C_out, B]` with
//! `y[o, f, b] = Σ_{k, c} x̃[o + k, c, b] · K[k, c, f]`,
//! where `x̃` is `x` zero-padded according to [`Padding`].

use crate::error::{Error, Result};
use crate::mdarray::{default_strides, md_fmac2, md_zfmacc2, Dst, MdArray, Src};
use crate::nlop::{Ctx, EvalState, Nlop, Operator};
use crate::real::Real;

use super::model::{Init, InputSpec, Model, OutputSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Output size `s − k + 1`.
    Valid,
    /// Output size `s`; `(k − 1)/2` zeros before, the rest after.
    Same,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvVariant {
    Forward,
    /// The adjoint of the forward convolution with the same kernel.
    Transposed,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub spatial: Vec<usize>,
    pub kernel: Vec<usize>,
    pub cin: usize,
    pub cout: usize,
    pub batch: usize,
    pub padding: Padding,
}

impl ConvGeom {
    pub fn new(
        spatial: &[usize],
        kernel: &[usize],
        cin: usize,
        cout: usize,
        batch: usize,
        padding: Padding,
    ) -> Result<Self> {
        if spatial.len() != kernel.len() || spatial.is_empty() {
            return Err(Error::InvalidShape(format!(
                "{} spatial dimensions but {} kernel dimensions",
                spatial.len(),
                kernel.len()
            )));
        }
        if cin == 0 || cout == 0 || batch == 0 || kernel.contains(&0) {
            return Err(Error::InvalidParameter("convolution sizes must be positive".into()));
        }
        let g = Self {
            spatial: spatial.to_vec(),
            kernel: kernel.to_vec(),
            cin,
            cout,
            batch,
            padding,
        };
        for (i, (&s, &k)) in g.padded().iter().zip(kernel).enumerate() {
            if k > s {
                return Err(Error::InvalidShape(format!(
                    "kernel size {k} exceeds padded input size {s} along axis {i}"
                )));
            }
        }
        Ok(g)
    }

    fn rank(&self) -> usize {
        self.spatial.len()
    }

    pub fn out_spatial(&self) -> Vec<usize> {
        match self.padding {
            Padding::Valid => self.spatial.iter().zip(&self.kernel).map(|(s, k)| s + 1 - k).collect(),
            Padding::Same => self.spatial.clone(),
        }
    }

    fn padded(&self) -> Vec<usize> {
        match self.padding {
            Padding::Valid => self.spatial.clone(),
            Padding::Same => self.spatial.iter().zip(&self.kernel).map(|(s, k)| s + k - 1).collect(),
        }
    }

    fn pad_lo(&self) -> Vec<usize> {
        match self.padding {
            Padding::Valid => vec![0; self.rank()],
            Padding::Same => self.kernel.iter().map(|k| (k - 1) / 2).collect(),
        }
    }

    fn with_tail(head: Vec<usize>, a: usize, b: usize) -> Vec<usize> {
        let mut v = head;
        v.push(a);
        v.push(b);
        v
    }

    pub fn x_dims(&self) -> Vec<usize> {
        Self::with_tail(self.spatial.clone(), self.cin, self.batch)
    }

    pub fn y_dims(&self) -> Vec<usize> {
        Self::with_tail(self.out_spatial(), self.cout, self.batch)
    }

    pub fn k_dims(&self) -> Vec<usize> {
        Self::with_tail(self.kernel.clone(), self.cin, self.cout)
    }

    /// `x̃`, the padded input.
    pub fn pad<R: Real>(&self, x: &MdArray<R>) -> Result<MdArray<R>> {
        pad_generic(self, x)
    }

    /// Loop dimensions `[o…, k…, C_in, C_out, B]` and the strides of the
    /// padded input, the kernel and the output in that domain.
    fn loops(&self) -> Result<(Vec<usize>, [Vec<isize>; 3])> {
        let d = self.rank();
        let ps = default_strides(&Self::with_tail(self.padded(), self.cin, self.batch))?;
        let ks = default_strides(&self.k_dims())?;
        let ys = default_strides(&self.y_dims())?;
        let mut dims = self.out_spatial();
        dims.extend_from_slice(&self.kernel);
        dims.extend_from_slice(&[self.cin, self.cout, self.batch]);
        let mut sx = Vec::with_capacity(dims.len());
        let mut sk = Vec::with_capacity(dims.len());
        let mut sy = Vec::with_capacity(dims.len());
        for i in 0..d {
            sx.push(ps[i]);
            sk.push(0);
            sy.push(ys[i]);
        }
        for i in 0..d {
            sx.push(ps[i]);
            sk.push(ks[i]);
            sy.push(0);
        }
        sx.extend_from_slice(&[ps[d], 0, ps[d + 1]]);
        sk.extend_from_slice(&[ks[d], ks[d + 1], 0]);
        sy.extend_from_slice(&[0, ys[d], ys[d + 1]]);
        Ok((dims, [sx, sk, sy]))
    }

    /// `y = conv(x̃, K)` from an already padded input.
    pub fn forward_padded<R: Real>(&self, xp: &MdArray<R>, k: &MdArray<R>) -> Result<MdArray<R>> {
        k.require_dims(&self.k_dims(), "convolution kernel")?;
        let (dims, [sx, sk, sy]) = self.loops()?;
        let mut y = MdArray::zeros(&self.y_dims())?;
        md_fmac2(
            &dims,
            Dst::new(y.as_mut_slice(), 0, &sy),
            Src::new(xp.as_slice(), 0, &sx),
            Src::new(k.as_slice(), 0, &sk),
        )?;
        Ok(y)
    }

    pub fn forward<R: Real>(&self, x: &MdArray<R>, k: &MdArray<R>) -> Result<MdArray<R>> {
        x.require_dims(&self.x_dims(), "convolution input")?;
        self.forward_padded(&pad_generic(self, x)?, k)
    }

    /// `x = Σ y · conj(K)` scattered back: the adjoint of `x ↦ conv(x, K)`.
    pub fn adjoint_input<R: Real>(&self, y: &MdArray<R>, k: &MdArray<R>) -> Result<MdArray<R>> {
        y.require_dims(&self.y_dims(), "convolution output")?;
        k.require_dims(&self.k_dims(), "convolution kernel")?;
        let d = self.rank();
        // Full correlation with the flipped kernel on y padded by k−1 both sides.
        let mut yp_dims: Vec<usize> = self.out_spatial().iter().zip(&self.kernel).map(|(o, k)| o + 2 * (k - 1)).collect();
        yp_dims.extend_from_slice(&[self.cout, self.batch]);
        let mut off: Vec<usize> = self.kernel.iter().map(|k| k - 1).collect();
        off.extend_from_slice(&[0, 0]);
        let yp = y.pad(&yp_dims, &off)?;
        let qs = yp.strides();
        let pdims = Self::with_tail(self.padded(), self.cin, self.batch);
        let mut xp = MdArray::zeros(&pdims)?;
        let ps = xp.strides();
        let ks = default_strides(&self.k_dims())?;
        let mut dims = self.padded();
        dims.extend_from_slice(&self.kernel);
        dims.extend_from_slice(&[self.cin, self.cout, self.batch]);
        let (mut sa, mut sb, mut sc) = (Vec::new(), Vec::new(), Vec::new());
        let mut kofs = 0isize;
        for i in 0..d {
            sa.push(ps[i]);
            sb.push(qs[i]);
            sc.push(0);
        }
        for i in 0..d {
            sa.push(0);
            sb.push(qs[i]);
            sc.push(-ks[i]);
            kofs += (self.kernel[i] as isize - 1) * ks[i];
        }
        sa.extend_from_slice(&[ps[d], 0, ps[d + 1]]);
        sb.extend_from_slice(&[0, qs[d], qs[d + 1]]);
        sc.extend_from_slice(&[ks[d], ks[d + 1], 0]);
        md_zfmacc2(
            &dims,
            Dst::new(xp.as_mut_slice(), 0, &sa),
            Src::new(yp.as_slice(), 0, &sb),
            Src::new(k.as_slice(), kofs as usize, &sc),
        )?;
        self.crop(&xp)
    }

    /// `∂K = Σ conj(x̃) · y`, the adjoint of `K ↦ conv(x, K)` applied to `y`.
    pub fn kernel_grad_padded<R: Real>(&self, xp: &MdArray<R>, y: &MdArray<R>) -> Result<MdArray<R>> {
        y.require_dims(&self.y_dims(), "convolution output")?;
        let (dims, [sx, sk, sy]) = self.loops()?;
        let xc = xp.conj();
        let mut k = MdArray::zeros(&self.k_dims())?;
        md_fmac2(
            &dims,
            Dst::new(k.as_mut_slice(), 0, &sk),
            Src::new(xc.as_slice(), 0, &sx),
            Src::new(y.as_slice(), 0, &sy),
        )?;
        Ok(k)
    }

    pub fn kernel_grad<R: Real>(&self, x: &MdArray<R>, y: &MdArray<R>) -> Result<MdArray<R>> {
        x.require_dims(&self.x_dims(), "convolution input")?;
        self.kernel_grad_padded(&pad_generic(self, x)?, y)
    }

    fn crop<R: Real>(&self, xp: &MdArray<R>) -> Result<MdArray<R>> {
        match self.padding {
            Padding::Valid => Ok(xp.clone()),
            Padding::Same => {
                let mut off = self.pad_lo();
                off.extend_from_slice(&[0, 0]);
                xp.crop(&self.x_dims(), &off)
            }
        }
    }
}

fn pad_generic<R: Real>(g: &ConvGeom, x: &MdArray<R>) -> Result<MdArray<R>> {
    match g.padding {
        Padding::Valid => Ok(x.clone()),
        Padding::Same => {
            let mut off = g.pad_lo();
            off.extend_from_slice(&[0, 0]);
            x.pad(&ConvGeom::with_tail(g.padded(), g.cin, g.batch), &off)
        }
    }
}

struct Conv<R: Real> {
    geom: ConvGeom,
    dims: [Vec<Vec<usize>>; 2],
    state: EvalState<(MdArray<R>, MdArray<R>)>,
}

impl<R: Real> Operator<R> for Conv<R> {
    fn name(&self) -> &str {
        "conv"
    }
    fn input_dims(&self) -> &[Vec<usize>] {
        &self.dims[0]
    }
    fn output_dims(&self) -> &[Vec<usize>] {
        &self.dims[1]
    }
    fn forward(&self, x: &[&MdArray<R>], ctx: Ctx) -> Result<Vec<MdArray<R>>> {
        let xp = pad_generic(&self.geom, x[0])?;
        let y = self.geom.forward_padded(&xp, x[1])?;
        self.state.update(ctx, || (xp, x[1].clone()));
        Ok(vec![y])
    }
    fn derivative(&self, _o: usize, i: usize, dx: &MdArray<R>) -> Result<MdArray<R>> {
        let s = self.state.get()?;
        if i == 0 {
            self.geom.forward(dx, &s.1)
        } else {
            self.geom.forward_padded(&s.0, dx)
        }
    }
    fn adjoint_derivative(&self, _o: usize, i: usize, dy: &MdArray<R>) -> Result<MdArray<R>> {
        let s = self.state.get()?;
        if i == 0 {
            self.geom.adjoint_input(dy, &s.1)
        } else {
            self.geom.kernel_grad_padded(&s.0, dy)
        }
    }
    fn holomorphic(&self) -> bool {
        true
    }
    fn clear_state(&self) {
        self.state.clear()
    }
}

/// `x = Kᴴ z`: conjugate-linear in `K`, so not holomorphic.
struct ConvT<R: Real> {
    geom: ConvGeom,
    dims: [Vec<Vec<usize>>; 2],
    state: EvalState<(MdArray<R>, MdArray<R>)>,
}

impl<R: Real> Operator<R> for ConvT<R> {
    fn name(&self) -> &str {
        "conv_transposed"
    }
    fn input_dims(&self) -> &[Vec<usize>] {
        &self.dims[0]
    }
    fn output_dims(&self) -> &[Vec<usize>] {
        &self.dims[1]
    }
    fn forward(&self, x: &[&MdArray<R>], ctx: Ctx) -> Result<Vec<MdArray<R>>> {
        let y = self.geom.adjoint_input(x[0], x[1])?;
        self.state.update(ctx, || (x[0].clone(), x[1].clone()));
        Ok(vec![y])
    }
    fn derivative(&self, _o: usize, i: usize, dx: &MdArray<R>) -> Result<MdArray<R>> {
        let s = self.state.get()?;
        if i == 0 {
            self.geom.adjoint_input(dx, &s.1)
        } else {
            self.geom.adjoint_input(&s.0, dx)
        }
    }
    fn adjoint_derivative(&self, _o: usize, i: usize, dy: &MdArray<R>) -> Result<MdArray<R>> {
        let s = self.state.get()?;
        if i == 0 {
            self.geom.forward(dy, &s.1)
        } else {
            // Re⟨Kᴴz(dK), w⟩ = Re⟨dK, Σ conj(w̃)·z⟩
            self.geom.kernel_grad(dy, &s.0)
        }
    }
    fn clear_state(&self) {
        self.state.clear()
    }
}

/// Convolution as a two-input nlop `(x, K) ↦ y` (or `(z, K) ↦ Kᴴz`).
pub fn conv_nlop<R: Real>(geom: &ConvGeom, variant: ConvVariant) -> Nlop<R> {
    let (xd, yd, kd) = (geom.x_dims(), geom.y_dims(), geom.k_dims());
    match variant {
        ConvVariant::Forward => Nlop::new(Conv {
            geom: geom.clone(),
            dims: [vec![xd, kd], vec![yd]],
            state: EvalState::new(),
        }),
        ConvVariant::Transposed => Nlop::new(ConvT {
            geom: geom.clone(),
            dims: [vec![yd, kd], vec![xd]],
            state: EvalState::new(),
        }),
    }
}

/// Glorot initializer for a convolution kernel.
pub fn glorot_for(geom: &ConvGeom) -> Init {
    let taps: usize = geom.kernel.iter().product();
    Init::Glorot {
        fan_in: geom.cin * taps,
        fan_out: geom.cout * taps,
    }
}

/// Convolution layer with data input `x`, weight `{name}.w` and output `y`.
pub fn conv<R: Real>(name: &str, geom: &ConvGeom, variant: ConvVariant) -> Result<Model<R>> {
    let nlop = conv_nlop(geom, variant);
    let xin = match variant {
        ConvVariant::Forward => geom.x_dims(),
        ConvVariant::Transposed => geom.y_dims(),
    };
    Model::new(
        nlop,
        vec![
            InputSpec::data("x", &xin),
            InputSpec::weight(&format!("{name}.w"), &geom.k_dims(), glorot_for(geom)),
        ],
        vec![OutputSpec::output("y")],
    )
}
