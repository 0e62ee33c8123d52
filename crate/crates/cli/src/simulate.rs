//! Synthetic multi-coil data: ellipse phantoms with smooth phase, smooth coil
//! maps normalized to `Σ_c |C_c|² = 1`, regular undersampling with
//! calibration lines, and complex Gaussian noise.

use std::f64::consts::PI;

use nlop::recon::{SenseDims, SenseModel};
use nlop::{Cplx, MdArray};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub slices: usize,
    pub size: usize,
    pub coils: usize,
    /// Every `accel`-th phase-encoding line is sampled.
    pub accel: usize,
    /// Fully sampled lines around the k-space center (index 0).
    pub acl: usize,
    /// Standard deviation of the complex noise, `E|n|² = σ²`.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            slices: 10,
            size: 32,
            coils: 4,
            accel: 4,
            acl: 8,
            noise: 0.001,
            seed: 0,
        }
    }
}

/// Simulated data in network layout.
#[derive(Clone, Debug)]
pub struct SimData {
    pub kspace: MdArray<f32>,
    pub coils: MdArray<f32>,
    pub pattern: MdArray<f32>,
    pub reference: MdArray<f32>,
}

/// Sampled phase-encoding lines: multiples of `accel`, plus the `acl` lines
/// `−⌊acl/2⌋ … ⌈acl/2⌉−1` (mod `n`) around the non-centered k-space origin.
pub fn sampled_lines(n: usize, accel: usize, acl: usize) -> Result<Vec<bool>> {
    if accel == 0 || acl > n || n == 0 {
        return Err(CliError::Usage(format!(
            "invalid sampling geometry: {n} lines, acceleration {accel}, {acl} calibration lines"
        )));
    }
    let mut s: Vec<bool> = (0..n).map(|k| k % accel == 0).collect();
    let lo = acl / 2;
    for k in 0..acl {
        s[(k + n - lo) % n] = true;
    }
    Ok(s)
}

/// Pattern `[n, n]` sampling full readouts (dimension 0) on the lines of
/// [`sampled_lines`] (dimension 1).
pub fn regular_pattern(n: usize, accel: usize, acl: usize) -> Result<Vec<f32>> {
    let lines = sampled_lines(n, accel, acl)?;
    Ok((0..n * n).map(|k| if lines[k / n] { 1.0 } else { 0.0 }).collect())
}

fn coord(k: usize, n: usize) -> f64 {
    2.0 * (k as f64 + 0.5) / n as f64 - 1.0
}

/// A sum of random ellipses on `[−1, 1]²` times a smooth phase, `n × n`.
pub fn phantom(rng: &mut impl Rng, n: usize) -> Vec<Cplx<f64>> {
    struct Ellipse {
        cx: f64,
        cy: f64,
        a: f64,
        b: f64,
        cos: f64,
        sin: f64,
        v: f64,
    }
    let mut es = vec![Ellipse {
        cx: rng.random_range(-0.05..0.05),
        cy: rng.random_range(-0.05..0.05),
        a: rng.random_range(0.7..0.9),
        b: rng.random_range(0.6..0.85),
        cos: 1.0,
        sin: 0.0,
        v: rng.random_range(0.4..0.7),
    }];
    for _ in 0..rng.random_range(3..8) {
        let th: f64 = rng.random_range(0.0..PI);
        es.push(Ellipse {
            cx: rng.random_range(-0.45..0.45),
            cy: rng.random_range(-0.45..0.45),
            a: rng.random_range(0.06..0.35),
            b: rng.random_range(0.06..0.35),
            cos: th.cos(),
            sin: th.sin(),
            v: rng.random_range(-0.3..0.5),
        });
    }
    let (px, py, p0) = (
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-PI..PI),
    );
    let mut img = vec![Cplx::new(0.0, 0.0); n * n];
    for y in 0..n {
        for x in 0..n {
            let (u, v) = (coord(x, n), coord(y, n));
            let mut m = 0.0;
            for e in &es {
                let (du, dv) = (u - e.cx, v - e.cy);
                let (r, s) = (e.cos * du + e.sin * dv, -e.sin * du + e.cos * dv);
                if (r / e.a).powi(2) + (s / e.b).powi(2) <= 1.0 {
                    m += e.v;
                }
            }
            let m: f64 = m.max(0.0);
            img[x + n * y] = Cplx::from_polar(m, p0 + px * u + py * v);
        }
    }
    img
}

/// Smooth coil maps `[n, n, nc]` with `Σ_c |C_c|² = 1` at every pixel.
pub fn coil_maps(rng: &mut impl Rng, n: usize, nc: usize) -> Vec<Cplx<f64>> {
    let rot: f64 = rng.random_range(0.0..2.0 * PI);
    let params: Vec<(f64, f64, f64, f64)> = (0..nc)
        .map(|c| {
            let th = rot + 2.0 * PI * c as f64 / nc as f64;
            (1.3 * th.cos(), 1.3 * th.sin(), rng.random_range(0.8..1.3), rng.random_range(-PI..PI))
        })
        .collect();
    let mut maps = vec![Cplx::new(0.0, 0.0); n * n * nc];
    for y in 0..n {
        for x in 0..n {
            let (u, v) = (coord(x, n), coord(y, n));
            let mut s = 0.0;
            for (c, &(cx, cy, w, ph)) in params.iter().enumerate() {
                let d2 = (u - cx).powi(2) + (v - cy).powi(2);
                let z = Cplx::from_polar((-d2 / (2.0 * w * w)).exp(), ph + 0.5 * (cx * u + cy * v));
                s += z.norm_sqr();
                maps[x + n * y + n * n * c] = z;
            }
            let s = s.sqrt();
            for c in 0..nc {
                let z = maps[x + n * y + n * n * c] / s;
                maps[x + n * y + n * n * c] = z;
            }
        }
    }
    maps
}

fn to_f32(v: &[Cplx<f64>]) -> Vec<Cplx<f32>> {
    v.iter().map(|z| Cplx::new(z.re as f32, z.im as f32)).collect()
}

/// Generates `cfg.slices` slices: `y = P(F(C·x) + n)`.
pub fn simulate(cfg: &SimConfig) -> Result<SimData> {
    if cfg.slices == 0 || cfg.coils == 0 || !(cfg.noise >= 0.0) {
        return Err(CliError::Usage("simulate needs at least one slice and coil and σ ≥ 0".into()));
    }
    let n = cfg.size;
    let mask = regular_pattern(n, cfg.accel, cfg.acl)?;
    let d = SenseDims {
        nx: n,
        ny: n,
        coils: cfg.coils,
        maps: 1,
        batch: cfg.slices,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut img = Vec::with_capacity(n * n * cfg.slices);
    let mut maps = Vec::with_capacity(n * n * cfg.coils * cfg.slices);
    for _ in 0..cfg.slices {
        img.extend(to_f32(&phantom(&mut rng, n)));
        maps.extend(to_f32(&coil_maps(&mut rng, n, cfg.coils)));
    }
    let pat: Vec<f32> = (0..cfg.slices).flat_map(|_| mask.iter().copied()).collect();
    let reference = MdArray::from_vec(&d.map_image(), img)?;
    let coils = MdArray::from_vec(&d.coil_maps(), maps)?;
    let pattern = MdArray::from_real(&d.pattern(), &pat)?;

    let full = SenseModel::new(coils.clone(), MdArray::filled(&d.pattern(), Cplx::new(1.0, 0.0))?)?;
    let mut k = full.forward(&reference.clone().reshape(&d.image())?)?;
    let sd = cfg.noise / 2f64.sqrt();
    let np = n * n;
    for (i, z) in k.as_mut_slice().iter_mut().enumerate() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        let b = i / (np * cfg.coils);
        let sampled = pat[i % np + np * b] == 1.0;
        *z = if sampled {
            *z + Cplx::new((sd * re) as f32, (sd * im) as f32)
        } else {
            Cplx::new(0.0, 0.0)
        };
    }
    Ok(SimData {
        kspace: k,
        coils,
        pattern,
        reference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nlop::recon::{adjoint_recon, build_sense};

    #[test]
    fn mask_line_count() {
        // count the entries of the mask against |regular ∪ ACL| by brute force
        for (n, r, acl) in [(368, 4, 28), (32, 4, 8), (30, 3, 7), (16, 1, 0), (16, 5, 16)] {
            let m = regular_pattern(n, r, acl).unwrap();
            let mut lines = std::collections::BTreeSet::new();
            for k in (0..n).step_by(r) {
                lines.insert(k as i64);
            }
            for k in -(acl as i64 / 2)..(acl as i64 - acl as i64 / 2) {
                lines.insert(k.rem_euclid(n as i64));
            }
            let count = m.iter().filter(|&&v| v == 1.0).count();
            assert_eq!(count, lines.len() * n, "{n} {r} {acl}");
        }
        assert_eq!(sampled_lines(368, 4, 28).unwrap().iter().filter(|&&b| b).count(), 92 + 21);
        assert!(sampled_lines(8, 0, 2).is_err());
        assert!(sampled_lines(8, 2, 9).is_err());
    }

    #[test]
    fn coil_normalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20;
        let m = coil_maps(&mut rng, n, 5);
        for p in 0..n * n {
            let s: f64 = (0..5).map(|c| m[p + n * n * c].norm_sqr()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        let data = simulate(&SimConfig {
            slices: 2,
            size: 12,
            coils: 3,
            ..SimConfig::default()
        })
        .unwrap();
        for b in 0..2 {
            for p in 0..144 {
                let s: f64 = (0..3).map(|c| data.coils.as_slice()[p + 144 * (c + 3 * b)].norm_sqr() as f64).sum();
                assert!((s - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn fully_sampled_noiseless_adjoint_is_exact() {
        let cfg = SimConfig {
            slices: 3,
            size: 16,
            coils: 4,
            accel: 1,
            acl: 0,
            noise: 0.0,
            seed: 9,
        };
        let data = simulate(&cfg).unwrap();
        let a = build_sense(&data.coils, &data.pattern).unwrap();
        let x = adjoint_recon(&a, &data.kspace).unwrap();
        let err = x.reshape(&[16, 16, 3]).unwrap().sub(&data.reference).unwrap().max_abs();
        assert!(err <= 1e-5 * data.reference.max_abs(), "{err}");
    }

    #[test]
    fn deterministic_and_masked() {
        let cfg = SimConfig {
            slices: 2,
            size: 16,
            seed: 4,
            ..SimConfig::default()
        };
        let a = simulate(&cfg).unwrap();
        let b = simulate(&cfg).unwrap();
        assert_eq!(a.kspace, b.kspace);
        assert_eq!(a.coils, b.coils);
        assert_eq!(a.reference, b.reference);
        let c = simulate(&SimConfig { seed: 5, ..cfg }).unwrap();
        assert_ne!(a.kspace, c.kspace);
        for (k, z) in a.kspace.as_slice().iter().enumerate() {
            let p = a.pattern.as_slice()[k % 256 + 256 * (k / (256 * 4))];
            assert!(p.re == 1.0 || *z == Cplx::new(0.0, 0.0));
        }
        assert!(a.reference.max_abs() > 0.0);
    }
}
