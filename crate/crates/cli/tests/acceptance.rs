//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with
//! a nonzero status if any criterion fails. Pass criterion numbers as
//! arguments to run a subset.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nlop::nlop::{
    add, check_derivatives, checkpoint, conj, exp, exp_real, from_linop, mul, random_array, real_part, scale_real,
    sub, sum_all, Ctx, EvalState, Operator, RerunCounter,
};
use nlop::mdarray::{dft, Direction};
use nlop::nn::{
    activation_nlop, batchnorm_nlop, conv_nlop, dense_nlop, dropout_nlop, loss_nlop, maxpool_nlop, Activation,
    ArgKind, BatchNormState, ConvGeom, ConvVariant, Loss, Mode, Model, Padding, Params,
};
use nlop::optim::{adam_step, ipalm_step, sgd_step, AdamConfig, AdamState, IpalmConfig, Prox, TrainConfig, Algorithm};
use nlop::recon::{
    build_modl, build_sense, build_varnet, make_inverse_nlop, modl_step, rbf_nlop, sense_adjoint_nlop,
    sense_forward_nlop, sense_normal_nlop, varnet_step, CgConfig, ModlConfig, RbfGrid, SenseDims, SenseModel,
    VarNetConfig,
};
use nlop::{exec, Cplx, Linop, MdArray, Nlop};
use nlop_cli::layout::ReconInputs;
use nlop_cli::metrics::{coil_mask, per_item};
use nlop_cli::reconet::{self, NetConfig, Network};
use nlop_cli::simulate::{simulate, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type C = Cplx<f64>;
type Outcome = Result<String, String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn ensure(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn fail<E: std::fmt::Debug>(e: E) -> String {
    format!("error: {e:?}")
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("adjoint suite (f32)", adjoint_suite),
        ("gradient suite (f64)", gradient_suite),
        ("composition oracle", composition_oracle),
        ("inverse operator derivative", inverse_derivative),
        ("VarNet parameter count", parameter_count),
        ("checkpoint equivalence", checkpoint_equivalence),
        ("training determinism", training_determinism),
        ("end-to-end quality", end_to_end_quality),
        ("optimizer oracles", optimizer_oracles),
        ("DFT oracle", dft_oracle),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(k + 1)) {
            continue;
        }
        let t = Instant::now();
        let r = std::panic::catch_unwind(run).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let (tag, msg) = match r {
            Ok(m) => ("PASS", m),
            Err(m) => {
                failed += 1;
                ("FAIL", m)
            }
        };
        println!("criterion {:>2} {tag} {name} [{:.1} s]: {msg}", k + 1, t.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

// ------------------------------------------------------------------ helpers

fn binary_pattern<R: nlop::Real>(r: &mut ChaCha8Rng, dims: &[usize], p: f64) -> MdArray<R> {
    let n: usize = dims.iter().product();
    let v: Vec<R> = (0..n)
        .map(|_| if r.random::<f64>() < p { R::one() } else { R::zero() })
        .collect();
    MdArray::from_real(dims, &v).unwrap()
}

/// Coil maps normalized to `Σ_{c,m} |C|² = 1` at every pixel.
fn unit_coils(r: &mut ChaCha8Rng, d: &SenseDims) -> MdArray<f64> {
    let mut a = random_array::<f64>(r, &d.coil_maps(), 1.0);
    let np = d.nx * d.ny;
    let inner = d.coils * d.maps;
    for b in 0..d.batch {
        for p in 0..np {
            let idx = |k: usize| p + np * (k + inner * b);
            let s: f64 = (0..inner).map(|k| a.as_slice()[idx(k)].norm_sqr()).sum::<f64>().sqrt();
            for k in 0..inner {
                let v = a.as_slice()[idx(k)] / s;
                a.as_mut_slice()[idx(k)] = v;
            }
        }
    }
    a
}

fn dims(nx: usize, ny: usize, coils: usize, maps: usize, batch: usize) -> SenseDims {
    SenseDims {
        nx,
        ny,
        coils,
        maps,
        batch,
    }
}

// ------------------------------------------------------------------ 1

/// Worst `|⟨Ax, y⟩ − ⟨x, Aᴴy⟩| / (‖Ax‖‖y‖)`. Conjugate-linear maps only
/// satisfy the identity for the real part of the inner product.
fn adjoint_ratio(a: &Linop<f32>, r: &mut ChaCha8Rng, probes: usize, real_only: bool) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let x = random_array::<f32>(r, a.in_dims(), 1.0);
        let y = random_array::<f32>(r, a.out_dims(), 1.0);
        let ax = a.forward(&x).unwrap();
        let ahy = a.adjoint(&y).unwrap();
        let lhs = ax.dot(&y).unwrap();
        let rhs = x.dot(&ahy).unwrap();
        let scale = ax.norm() as f64 * y.norm() as f64;
        let err = if real_only { (lhs.re - rhs.re).abs() } else { (lhs - rhs).norm() };
        if scale > 0.0 {
            worst = worst.max(err as f64 / scale);
        }
    }
    worst
}

fn random_linop(r: &mut ChaCha8Rng, cur: &[usize]) -> Linop<f32> {
    let n: usize = cur.iter().product();
    match r.random_range(0..7) {
        0 => {
            let flags = r.random_range(1..(1u32 << cur.len()));
            Linop::dft(cur, flags).unwrap()
        }
        1 => Linop::diag(random_array::<f32>(r, cur, 1.0)),
        2 | 3 => {
            let out = vec![r.random_range(1..=8), r.random_range(1..=2)];
            let k: usize = out.iter().product();
            let m = random_array::<f32>(r, &[n * k], 1.0).into_vec();
            let lin = Linop::matrix(cur, &out, m).unwrap();
            if r.random::<bool>() {
                lin
            } else {
                // the adjoint of a matrix in the other direction
                let m2 = random_array::<f32>(r, &[n * k], 1.0).into_vec();
                Linop::matrix(&out, cur, m2).unwrap().adjoint_op()
            }
        }
        4 => Linop::scaled(cur, Cplx::new(r.random::<f32>() - 0.5, r.random::<f32>())),
        5 => {
            let mut out = cur.to_vec();
            out.reverse();
            Linop::reshape(cur, &out).unwrap()
        }
        _ => {
            let a = Linop::diag(random_array::<f32>(r, cur, 1.0));
            let b = Linop::dft(cur, 1).unwrap();
            a.plus(&b).unwrap()
        }
    }
}

fn adjoint_suite() -> Outcome {
    let t = Instant::now();
    let mut r = rng(1);
    let probes = 100;
    let mut cases: Vec<(String, Linop<f32>)> = Vec::new();
    for (d, flags) in [(vec![6, 8, 3], 0b011), (vec![12, 5], 0b01), (vec![16], 1), (vec![4, 6, 8], 0b111)] {
        cases.push((format!("dft {d:?}/{flags:b}"), Linop::dft(&d, flags).unwrap()));
    }
    cases.push(("sampling".into(), Linop::diag(binary_pattern::<f32>(&mut r, &[8, 8, 3], 0.4))));
    for m in [1, 2] {
        let d = dims(8, 6, 3, m, 2);
        let cs = unit_coils(&mut r, &d).cast::<f32>();
        let pt = binary_pattern::<f32>(&mut r, &d.pattern(), 0.4);
        let s = SenseModel::new(cs.clone(), pt.clone()).unwrap();
        cases.push((format!("coil multiplication M={m}"), s.coil_linop()));
        cases.push((format!("SENSE M={m}"), build_sense(&cs, &pt).unwrap()));
    }
    let geom = ConvGeom::new(&[7, 6], &[3, 3], 2, 3, 2, Padding::Same).unwrap();
    let geom_v = ConvGeom::new(&[7, 6], &[3, 2], 2, 3, 2, Padding::Valid).unwrap();
    for (g, name) in [(&geom, "same"), (&geom_v, "valid")] {
        for (variant, vname) in [(ConvVariant::Forward, "conv"), (ConvVariant::Transposed, "transposed conv")] {
            let f = conv_nlop::<f32>(g, variant);
            let x = random_array::<f32>(&mut r, f.input_dims(0), 1.0);
            let k = random_array::<f32>(&mut r, f.input_dims(1), 1.0);
            f.apply(&[&x, &k]).unwrap();
            cases.push((format!("{vname} ({name}), input"), f.derivative(0, 0).unwrap()));
            let kname = if variant == ConvVariant::Transposed {
                format!("{vname} ({name}), kernel, real inner product")
            } else {
                format!("{vname} ({name}), kernel")
            };
            cases.push((kname, f.derivative(0, 1).unwrap()));
        }
    }
    for i in 0..50 {
        let mut cur = vec![r.random_range(1..=4), r.random_range(1..=2)];
        let len = r.random_range(1..=5);
        let mut op = random_linop(&mut r, &cur);
        for _ in 1..len {
            cur = op.out_dims().to_vec();
            let next = random_linop(&mut r, &cur);
            op = op.chain(&next).unwrap();
        }
        cases.push((format!("random chain {i}"), op));
    }
    let mut worst = (0.0, String::new());
    for (name, op) in &cases {
        let e = adjoint_ratio(op, &mut r, probes, name.ends_with("real inner product"));
        if e > worst.0 {
            worst = (e, name.clone());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(
        worst.0 <= 1e-4 && secs < 60.0,
        format!(
            "{} operators × {probes} probes, worst ratio {:.2e} ({}), {secs:.1} s",
            cases.len(),
            worst.0,
            worst.1
        ),
    )
}

// ------------------------------------------------------------------ 2

struct GradCheck {
    name: String,
    fd: f64,
    adj: f64,
    tol: f64,
}

fn check_nlop(name: &str, f: &Nlop<f64>, x: &[MdArray<f64>], outs: &[usize], wrt: &[usize], tol: f64) -> GradCheck {
    let mut fd = 0.0f64;
    let mut adj = 0.0f64;
    for seed in 0..3 {
        let c = check_derivatives(f, x, outs, wrt, 1e-6, seed).unwrap();
        fd = fd.max(c.finite_difference);
        adj = adj.max(c.adjoint);
    }
    GradCheck {
        name: name.into(),
        fd,
        adj,
        tol,
    }
}

fn random_inputs(f: &Nlop<f64>, r: &mut ChaCha8Rng) -> Vec<MdArray<f64>> {
    (0..f.num_inputs()).map(|i| random_array::<f64>(r, f.input_dims(i), 1.0)).collect()
}

fn check_atom(name: &str, f: Nlop<f64>, r: &mut ChaCha8Rng) -> GradCheck {
    let x = random_inputs(&f, r);
    let wrt: Vec<usize> = (0..f.num_inputs()).collect();
    check_nlop(name, &f, &x, &[0], &wrt, 1e-6)
}

/// Checks output `out` of a model against every input not listed in `fixed`.
fn check_model(name: &str, m: &Model<f64>, fixed: &Params<f64>, out: &str, tol: f64, r: &mut ChaCha8Rng) -> GradCheck {
    let mut x = Vec::new();
    let mut wrt = Vec::new();
    for (i, s) in m.inputs().iter().enumerate() {
        match fixed.get(&s.name) {
            Some(a) => x.push(a.clone()),
            None => {
                let a = random_array::<f64>(r, &s.dims, 0.5);
                x.push(if s.real { a.real_part() } else { a });
                if s.kind != ArgKind::MovingStat {
                    wrt.push(i);
                }
            }
        }
    }
    let o = m.output_index(out).unwrap();
    check_nlop(name, m.nlop(), &x, &[o], &wrt, tol)
}

/// `(x, λ) ↦ (B + Re(λ)·C) x` with fixed Hermitian positive-definite `B`, `C`.
struct SpdFamily {
    b: Vec<Vec<C>>,
    c: Vec<Vec<C>>,
    dims: [Vec<Vec<usize>>; 2],
    state: EvalState<(f64, Vec<C>)>,
}

fn matvec(a: &[Vec<C>], x: &[C]) -> Vec<C> {
    a.iter().map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

fn matvec_h(a: &[Vec<C>], y: &[C]) -> Vec<C> {
    let n = a[0].len();
    (0..n).map(|j| a.iter().zip(y).map(|(row, v)| row[j].conj() * v).sum()).collect()
}

impl SpdFamily {
    fn new(r: &mut ChaCha8Rng, n: usize) -> Self {
        let mut spd = |shift: f64| -> Vec<Vec<C>> {
            let g: Vec<Vec<C>> = (0..n)
                .map(|_| (0..n).map(|_| C::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5)).collect())
                .collect();
            (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| {
                            let s: C = (0..n).map(|k| g[k][i].conj() * g[k][j]).sum();
                            if i == j {
                                s + shift
                            } else {
                                s
                            }
                        })
                        .collect()
                })
                .collect()
        };
        let b = spd(0.5);
        let c = spd(0.1);
        Self {
            b,
            c,
            dims: [vec![vec![n], vec![1]], vec![vec![n]]],
            state: EvalState::new(),
        }
    }

    fn mat(&self, l: f64) -> Vec<Vec<C>> {
        self.b
            .iter()
            .zip(&self.c)
            .map(|(rb, rc)| rb.iter().zip(rc).map(|(p, q)| p + q * l).collect())
            .collect()
    }
}

impl Operator<f64> for SpdFamily {
    fn name(&self) -> &str {
        "spd_family"
    }
    fn input_dims(&self) -> &[Vec<usize>] {
        &self.dims[0]
    }
    fn output_dims(&self) -> &[Vec<usize>] {
        &self.dims[1]
    }
    fn forward(&self, x: &[&MdArray<f64>], ctx: Ctx) -> nlop::Result<Vec<MdArray<f64>>> {
        let l = x[1].as_slice()[0].re;
        let v = x[0].as_slice().to_vec();
        let y = matvec(&self.mat(l), &v);
        self.state.update(ctx, || (l, v));
        Ok(vec![MdArray::from_vec(&self.dims[1][0], y)?])
    }
    fn derivative(&self, _o: usize, i: usize, dx: &MdArray<f64>) -> nlop::Result<MdArray<f64>> {
        let s = self.state.get()?;
        let y = if i == 0 {
            matvec(&self.mat(s.0), dx.as_slice())
        } else {
            matvec(&self.c, &s.1).into_iter().map(|v| v * dx.as_slice()[0].re).collect()
        };
        MdArray::from_vec(&self.dims[1][0], y)
    }
    fn adjoint_derivative(&self, _o: usize, i: usize, dy: &MdArray<f64>) -> nlop::Result<MdArray<f64>> {
        let s = self.state.get()?;
        if i == 0 {
            return MdArray::from_vec(&self.dims[1][0], matvec_h(&self.mat(s.0), dy.as_slice()));
        }
        let cx = matvec(&self.c, &s.1);
        let v: f64 = cx.iter().zip(dy.as_slice()).map(|(p, q)| (p.conj() * q).re).sum();
        MdArray::from_real(&[1], &[v])
    }
}

fn tight_cg() -> CgConfig {
    CgConfig {
        max_iter: 500,
        tol: 1e-13,
        strict: false,
        batched: true,
    }
}

fn gradient_suite() -> Outcome {
    let t = Instant::now();
    let mut r = rng(2);
    let d = [3, 4];
    let mut checks = vec![
        check_atom("add", add(&d), &mut r),
        check_atom("sub", sub(&d), &mut r),
        check_atom("mul", mul(&d), &mut r),
        check_atom("conj", conj(&d), &mut r),
        check_atom("exp", exp(&d), &mut r),
        check_atom("exp_real", exp_real(&d), &mut r),
        check_atom("real_part", real_part(&d), &mut r),
        check_atom("scale_real", scale_real(&[1], &d).unwrap(), &mut r),
        check_atom("sum_all", sum_all(&d), &mut r),
    ];
    let m = random_array::<f64>(&mut r, &[12 * 5], 1.0).into_vec();
    checks.push(check_atom("from_linop", from_linop(&Linop::matrix(&d, &[5], m).unwrap()), &mut r));
    checks.push(check_atom("checkpoint", checkpoint(&mul(&d).chain(&exp(&d)).unwrap()), &mut r));

    // SENSE atoms (derivative in the image or k-space input)
    let sd = dims(6, 6, 2, 2, 1);
    let cs = unit_coils(&mut r, &sd);
    let pt = binary_pattern::<f64>(&mut r, &sd.pattern(), 0.5);
    for (name, f, first) in [
        ("sense_forward", sense_forward_nlop::<f64>(&sd), sd.image()),
        ("sense_adjoint", sense_adjoint_nlop::<f64>(&sd), sd.kspace()),
        ("sense_normal", sense_normal_nlop::<f64>(&sd), sd.image()),
    ] {
        let x = vec![random_array::<f64>(&mut r, &first, 1.0), cs.clone(), pt.clone()];
        checks.push(check_nlop(name, &f, &x, &[0], &[0], 1e-6));
    }

    // RBF activation: analytic slope against differences, then the atom
    let grid = RbfGrid::uniform(9, -1.0, 1.0).unwrap();
    let w: Vec<f64> = (0..9).map(|_| r.random::<f64>() - 0.5).collect();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let z = 3.0 * r.random::<f64>() - 1.5;
        let h = 1e-6;
        let (_, slope) = grid.eval(z, &w);
        let (p, m) = (grid.eval(z + h, &w).0, grid.eval(z - h, &w).0);
        let fd = (p - m) / (2.0 * h);
        worst = worst.max((fd - slope).abs() / slope.abs().max(fd.abs()).max(1e-3));
    }
    checks.push(GradCheck {
        name: "rbf_activation".into(),
        fd: worst,
        adj: 0.0,
        tol: 1e-6,
    });
    checks.push(check_atom("rbf atom", rbf_nlop(grid, &[4, 3, 2, 2], 2).unwrap(), &mut r));

    // a dense family couples the whole vector, so no batching along its last axis
    let cg = CgConfig {
        batched: false,
        ..tight_cg()
    };
    let inv = make_inverse_nlop(&Nlop::new(SpdFamily::new(&mut r, 6)), cg).unwrap();
    let y = random_array::<f64>(&mut r, &[6], 1.0);
    let lam = MdArray::from_real(&[1], &[0.8]).unwrap();
    checks.push(check_nlop("inverse", &inv, &[y, lam], &[0], &[0, 1], 1e-6));

    // nn layers
    checks.push(check_atom("dense", dense_nlop(4, 3, 2).unwrap(), &mut r));
    let geom = ConvGeom::new(&[6, 5], &[3, 3], 2, 3, 2, Padding::Same).unwrap();
    checks.push(check_atom("conv", conv_nlop(&geom, ConvVariant::Forward), &mut r));
    checks.push(check_atom("transposed conv", conv_nlop(&geom, ConvVariant::Transposed), &mut r));
    let ad = [4, 3, 2];
    for (name, a) in [
        ("CReLU", Activation::CRelu),
        ("cardioid", Activation::Cardioid),
        ("sigmoid", Activation::Sigmoid),
        ("softmax", Activation::Softmax { axis: 1 }),
    ] {
        checks.push(check_atom(name, activation_nlop(a, &ad).unwrap(), &mut r));
    }
    checks.push(check_atom("max-pool", maxpool_nlop(&[4, 6, 2], &[2, 3]).unwrap(), &mut r));
    checks.push(check_atom("dropout", dropout_nlop(&ad, 0.3, 7, 0, Mode::Train).unwrap(), &mut r));
    for mode in [Mode::Train, Mode::Infer] {
        let f = batchnorm_nlop::<f64>(&[5, 3, 4], 1, mode, BatchNormState::default()).unwrap();
        let mut x = random_inputs(&f, &mut r);
        // variances are positive
        x[4] = MdArray::from_real(&[3], &[0.5, 1.0, 2.0]).unwrap();
        checks.push(check_nlop(&format!("batch norm ({mode:?})"), &f, &x, &[0], &[0, 1, 2], 1e-6));
    }
    for (name, l) in [("MSE", Loss::Mse), ("MAD", Loss::Mad)] {
        checks.push(check_atom(name, loss_nlop(l, &ad).unwrap(), &mut r));
    }
    let cce = loss_nlop::<f64>(Loss::Cce { axis: 1 }, &ad).unwrap();
    let p = random_array::<f64>(&mut r, &ad, 0.3).map(|z| z + C::new(1.0, 0.0));
    let q = random_array::<f64>(&mut r, &ad, 1.0).real_part();
    checks.push(check_nlop("cross-entropy", &cce, &[p, q], &[0], &[0], 1e-6));

    // unrolled building blocks
    let nd = dims(8, 8, 2, 1, 2);
    let ncs = unit_coils(&mut r, &nd);
    let npt = binary_pattern::<f64>(&mut r, &nd.pattern(), 0.5);
    let mut fixed = Params::new();
    fixed.insert("coils".to_string(), ncs.clone());
    fixed.insert("pattern".to_string(), npt.clone());
    let vcfg = VarNetConfig {
        iterations: 2,
        filters: 2,
        kernel: 3,
        rbf: 5,
        ..VarNetConfig::default()
    };
    let step = varnet_step::<f64>(&vcfg, &nd, 0).unwrap();
    checks.push(check_model("varnet_step", &step, &fixed, "x", 1e-6, &mut r));
    let mcfg = ModlConfig {
        iterations: 2,
        layers: 2,
        filters: 4,
        cg: tight_cg(),
        ..ModlConfig::default()
    };
    let step = modl_step::<f64>(&mcfg, &nd).unwrap();
    let mut mfixed = fixed.clone();
    for (k, v) in step.init_params(1).unwrap() {
        if step.inputs().iter().any(|s| s.name == k && s.kind == ArgKind::MovingStat) {
            mfixed.insert(k, v);
        }
    }
    checks.push(check_model("modl step", &step, &mfixed, "x", 1e-6, &mut r));

    // full toy networks, T = 2
    let fd = dims(16, 16, 2, 1, 1);
    let mut ffixed = Params::new();
    ffixed.insert("coils".to_string(), unit_coils(&mut r, &fd));
    ffixed.insert("pattern".to_string(), binary_pattern::<f64>(&mut r, &fd.pattern(), 0.5));
    let vn = build_varnet::<f64>(&vcfg, &fd).unwrap();
    checks.push(check_model("VarNet T=2", &vn, &ffixed, "image", 1e-4, &mut r));
    let mn = build_modl::<f64>(&mcfg, &fd).unwrap();
    let mut mf = ffixed.clone();
    for (k, v) in mn.init_params(1).unwrap() {
        if mn.inputs().iter().any(|s| s.name == k && s.kind == ArgKind::MovingStat) {
            mf.insert(k, v);
        }
    }
    checks.push(check_model("MoDL T=2", &mn, &mf, "image", 1e-4, &mut r));

    let secs = t.elapsed().as_secs_f64();
    let bad: Vec<String> = checks
        .iter()
        .filter(|c| !(c.fd <= c.tol))
        .map(|c| format!("{} fd {:.2e} > {:.0e}", c.name, c.fd, c.tol))
        .collect();
    let worst_atomic = checks.iter().filter(|c| c.tol == 1e-6).map(|c| c.fd).fold(0.0, f64::max);
    let worst_full = checks.iter().filter(|c| c.tol == 1e-4).map(|c| c.fd).fold(0.0, f64::max);
    let worst_adj = checks.iter().fold((0.0, ""), |m, c| if c.adj > m.0 { (c.adj, c.name.as_str()) } else { m });
    let summary = format!(
        "{} checks, worst rel err {worst_atomic:.2e} (atomic) / {worst_full:.2e} (networks), adjoint {:.1e} ({}), {secs:.1} s",
        checks.len(),
        worst_adj.0,
        worst_adj.1
    );
    if bad.is_empty() && secs < 300.0 {
        Ok(summary)
    } else {
        Err(format!("{summary}; {}", bad.join(", ")))
    }
}

// ------------------------------------------------------------------ 3

fn random_graph(r: &mut ChaCha8Rng, n: usize) -> Nlop<f64> {
    let d = [n];
    let mut f = mul::<f64>(&d);
    for _ in 0..r.random_range(0..=6) {
        let op = r.random_range(0..11u32);
        f = match op {
            0 => f.chain(&exp(&d)).unwrap(),
            1 => f.chain(&conj(&d)).unwrap(),
            2 => f.chain(&real_part(&d)).unwrap(),
            3 => f.chain(&exp_real(&d)).unwrap(),
            4 => f.chain(&mul(&d).duplicate(0, 1).unwrap()).unwrap(),
            5 => {
                let m = random_array::<f64>(r, &[n * n], 1.0).into_vec();
                f.chain(&from_linop(&Linop::matrix(&d, &d, m).unwrap())).unwrap()
            }
            6..=8 => {
                let b = match op {
                    6 => mul(&d),
                    7 => add(&d),
                    _ => sub(&d),
                };
                let k = r.random_range(0..2);
                // inputs [x1, x2, a, b]; link output 0 into a, then share x_k with b
                f.combine(&b).unwrap().link(0, 2).unwrap().duplicate(k, 2).unwrap()
            }
            9 => checkpoint(&f),
            _ => f.chain(&from_linop(&Linop::scaled(&d, C::new(0.5, 0.1)))).unwrap(),
        };
    }
    f
}

fn composition_oracle() -> Outcome {
    let mut r = rng(3);
    let mut worst = 0.0f64;
    let mut atoms = 0;
    for _ in 0..100 {
        let n = r.random_range(1..=8);
        let f = random_graph(&mut r, n);
        atoms += f.num_atoms();
        let x: Vec<MdArray<f64>> = (0..2).map(|_| random_array::<f64>(&mut r, &[n], 1.0)).collect();
        f.apply(&[&x[0], &x[1]]).unwrap();
        let h = f.derivative_handle().unwrap();
        let unit = |k: usize, imag: bool| {
            let mut e = MdArray::<f64>::zeros(&[n]).unwrap();
            e.as_mut_slice()[k] = if imag { C::new(0.0, 1.0) } else { C::new(1.0, 0.0) };
            e
        };
        let parts = |z: C, imag: bool| if imag { z.im } else { z.re };
        for j in 0..2 {
            // columns J[:, (k, q)] from DF, rows J[(l, p), :] from DFᴴ
            let mut by_cols = vec![vec![0.0; 2 * n]; 2 * n];
            let mut by_rows = vec![vec![0.0; 2 * n]; 2 * n];
            for k in 0..n {
                for q in 0..2 {
                    let col = h.derivative(0, j, &unit(k, q == 1)).unwrap();
                    for l in 0..n {
                        for p in 0..2 {
                            by_cols[2 * l + p][2 * k + q] = parts(col.as_slice()[l], p == 1);
                        }
                    }
                }
            }
            for l in 0..n {
                for p in 0..2 {
                    let row = h.adjoint_derivative(0, j, &unit(l, p == 1)).unwrap();
                    for k in 0..n {
                        for q in 0..2 {
                            by_rows[2 * l + p][2 * k + q] = parts(row.as_slice()[k], q == 1);
                        }
                    }
                }
            }
            let scale = by_cols.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
            for (a, b) in by_cols.iter().flatten().zip(by_rows.iter().flatten()) {
                worst = worst.max((a - b).abs() / scale);
            }
        }
    }
    ensure(
        worst <= 1e-10,
        format!("100 graphs ({atoms} atoms), worst |J_col − J_row| / max(1, |J|) = {worst:.2e}"),
    )
}

// ------------------------------------------------------------------ 4

fn inverse_derivative() -> Outcome {
    let mut r = rng(4);
    let cg = CgConfig {
        max_iter: 500,
        tol: 1e-13,
        strict: true,
        batched: false,
    };
    let mut worst = 0.0f64;
    for trial in 0..10 {
        let s = Nlop::new(SpdFamily::new(&mut r, 8));
        let inv = make_inverse_nlop(&s, cg).map_err(fail)?;
        let y = random_array::<f64>(&mut r, &[8], 1.0);
        let lam = MdArray::from_real(&[1], &[0.2 + r.random::<f64>()]).unwrap();
        let c = check_derivatives(&inv, &[y, lam], &[0], &[1], 1e-6, trial).map_err(fail)?;
        worst = worst.max(c.finite_difference);
    }
    // S_λ = λ·1: D_λ S⁻¹ y = −y/λ²
    let n = 8;
    let s = scale_real::<f64>(&[1], &[n]).unwrap().permute_inputs(&[1, 0]).unwrap();
    let inv = make_inverse_nlop(&s, cg).map_err(fail)?;
    let y = random_array::<f64>(&mut r, &[n], 1.0);
    let l = 1.7;
    let lam = MdArray::from_real(&[1], &[l]).unwrap();
    inv.apply(&[&y, &lam]).map_err(fail)?;
    let d = inv.apply_derivative(0, 1, &MdArray::from_real(&[1], &[1.0]).unwrap()).map_err(fail)?;
    let want = y.scale_real(-1.0 / (l * l));
    let scalar = d.sub(&want).unwrap().max_abs();
    ensure(
        worst <= 1e-4 && scalar <= 1e-10,
        format!("10 random 8×8 SPD families: worst λ rel err {worst:.2e}; scalar case max error {scalar:.2e}"),
    )
}

// ------------------------------------------------------------------ 5

fn parameter_count() -> Outcome {
    let cfg = VarNetConfig::default();
    let m = build_varnet::<f32>(&cfg, &dims(16, 16, 2, 1, 1)).map_err(fail)?;
    let n = m.num_parameters();
    ensure(n == 65_530, format!("{n} real trainable parameters (T={}, N_k={}, k={}, N_w={})", cfg.iterations, cfg.filters, cfg.kernel, cfg.rbf))
}

// ------------------------------------------------------------------ 6

fn weight_gradients(m: &Model<f64>, x: &[MdArray<f64>]) -> (MdArray<f64>, Vec<Option<MdArray<f64>>>) {
    let refs: Vec<&MdArray<f64>> = x.iter().collect();
    let o = m.output_index("image").unwrap();
    let y = m.nlop().apply(&refs).unwrap().swap_remove(o);
    let want: Vec<bool> = m.inputs().iter().map(|s| s.kind == ArgKind::Weight).collect();
    let g = m.nlop().adjoint_all(o, &y, &want).unwrap();
    (y, g)
}

fn checkpoint_equivalence() -> Outcome {
    exec::set_deterministic(true);
    let mut r = rng(6);
    let d = dims(12, 12, 2, 1, 2);
    let counter = RerunCounter::default();
    let v = VarNetConfig {
        iterations: 3,
        filters: 3,
        kernel: 3,
        rbf: 5,
        ..VarNetConfig::default()
    };
    let m = ModlConfig {
        iterations: 3,
        layers: 2,
        filters: 4,
        ..ModlConfig::default()
    };
    let pairs = [
        (
            "VarNet",
            build_varnet::<f64>(&v, &d).unwrap(),
            build_varnet::<f64>(&VarNetConfig { checkpoint: Some(counter.clone()), ..v.clone() }, &d).unwrap(),
        ),
        (
            "MoDL",
            build_modl::<f64>(&m, &d).unwrap(),
            build_modl::<f64>(&ModlConfig { checkpoint: Some(counter.clone()), ..m.clone() }, &d).unwrap(),
        ),
    ];
    let mut notes = Vec::new();
    let mut ok = true;
    for (name, plain, ck) in pairs {
        counter.reset();
        let p = plain.init_params(3).unwrap();
        let cs = unit_coils(&mut r, &d);
        let pt = binary_pattern::<f64>(&mut r, &d.pattern(), 0.5);
        let k = SenseModel::new(cs.clone(), pt.clone())
            .unwrap()
            .forward(&random_array::<f64>(&mut r, &d.image(), 1.0))
            .unwrap();
        let mut data = Params::new();
        data.insert("kspace".to_string(), k);
        data.insert("coils".to_string(), cs);
        data.insert("pattern".to_string(), pt);
        let x: Vec<MdArray<f64>> = plain.gather(&[&data, &p]).unwrap().into_iter().cloned().collect();
        let (y1, g1) = weight_gradients(&plain, &x);
        let (y2, g2) = weight_gradients(&ck, &x);
        let same = y1 == y2 && g1 == g2;
        let n = g1.iter().filter(|g| g.is_some()).count();
        ok &= same && counter.get() > 0;
        notes.push(format!("{name}: bitwise {same}, {n} weight gradients, {} re-executions", counter.get()));
    }
    ensure(ok, notes.join("; "))
}

// ------------------------------------------------------------------ 7

fn run_cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_nlop-cli"))
        .args(args)
        .output()
        .map_err(fail)?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn training_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(fail)?;
    let t = tmp.path();
    let s = |p: &str| t.join(p).display().to_string();
    run_cli(&["simulate", "--slices", "12", "--size", "16", "--coils", "3", "--seed", "5", &s("data")])?;
    let mut notes = Vec::new();
    let mut ok = true;
    for (net, extra) in [
        ("varnet", vec!["--filters", "4", "--kernel", "5", "--rbf", "7"]),
        ("modl", vec!["--layers", "2", "--filters", "4"]),
    ] {
        let mut logs = Vec::new();
        for run in 0..2 {
            let w = s(&format!("{net}{run}"));
            let mut args = vec![
                "reconet",
                "--network",
                net,
                "--train",
                "--normalize",
                "--deterministic",
                "-T",
                "2",
                "--epochs",
                "2",
                "--batch-size",
                "4",
                "--lr",
                "0.01",
                "--seed",
                "11",
                "--pattern",
            ];
            let pat = s("data/pattern");
            args.push(&pat);
            args.extend(extra.iter().copied());
            let (k, c, r) = (s("data/kspace"), s("data/coils"), s("data/reference"));
            args.extend([k.as_str(), c.as_str(), w.as_str(), r.as_str()]);
            logs.push(run_cli(&args)?);
        }
        let a = dir_bytes(&t.join(format!("{net}0")));
        let b = dir_bytes(&t.join(format!("{net}1")));
        let lines = logs[0].lines().filter(|l| l.starts_with("epoch ")).count();
        let same = a == b && logs[0] == logs[1];
        ok &= same && lines == 2;
        notes.push(format!("{net}: {} files bitwise identical {same}, {lines} loss lines", a.len()));
    }
    ensure(ok, notes.join("; "))
}

// ------------------------------------------------------------------ 8

fn sim(slices: usize, seed: u64) -> nlop_cli::Result<(ReconInputs, MdArray<f32>)> {
    let d = simulate(&SimConfig {
        slices,
        size: 32,
        coils: 4,
        accel: 4,
        acl: 8,
        noise: 0.001,
        seed,
    })?;
    let dims = SenseDims {
        nx: 32,
        ny: 32,
        coils: 4,
        maps: 1,
        batch: slices,
    };
    Ok((
        ReconInputs {
            dims,
            kspace: d.kspace,
            coils: d.coils,
            pattern: d.pattern,
        },
        d.reference,
    ))
}

fn mean_psnr(x: &MdArray<f32>, reference: &MdArray<f32>, mask: &[bool]) -> f64 {
    let m = per_item(x, reference, Some(mask)).unwrap();
    m.iter().map(|m| m.psnr).sum::<f64>() / m.len() as f64
}

fn end_to_end_quality() -> Outcome {
    let t = Instant::now();
    let (train, train_ref) = sim(200, 1).map_err(fail)?;
    let (test, test_ref) = sim(20, 2).map_err(fail)?;
    let mask = coil_mask(&test.coils);
    let adjoint = mean_psnr(&reconet::adjoint_images(&test).map_err(fail)?, &test_ref, &mask);

    let run = |cfg: NetConfig, lr: f64, epochs: usize| -> Result<f64, String> {
        let tc = TrainConfig {
            algorithm: Algorithm::Adam,
            lr,
            batch_size: 10,
            epochs,
            seed: 1,
            deterministic: true,
            ..TrainConfig::default()
        };
        let b = reconet::train(&cfg, &train, &train_ref, &tc, |_, _| {}).map_err(fail)?;
        let x = reconet::apply(&b, &test, 10).map_err(fail)?;
        Ok(mean_psnr(&x, &test_ref, &mask))
    };
    let varnet = run(
        NetConfig {
            iterations: 3,
            normalize: true,
            ..NetConfig::defaults(Network::Varnet)
        },
        2e-3,
        6,
    )?;
    let modl_cfg = NetConfig {
        iterations: 3,
        layers: 3,
        filters: 8,
        normalize: true,
        ..NetConfig::defaults(Network::Modl)
    };
    let modl = run(modl_cfg.clone(), 2e-2, 20)?;
    let cg_sense = run(
        NetConfig {
            denoiser: false,
            ..modl_cfg
        },
        2e-2,
        20,
    )?;
    let secs = t.elapsed().as_secs_f64();
    ensure(
        varnet - adjoint >= 3.0 && modl - adjoint >= 3.0 && modl > cg_sense && secs < 900.0,
        format!(
            "mean test PSNR: adjoint {adjoint:.2} dB, VarNet {varnet:.2} dB (+{:.2}), MoDL {modl:.2} dB (+{:.2}), CG-SENSE {cg_sense:.2} dB; {secs:.0} s",
            varnet - adjoint,
            modl - adjoint
        ),
    )
}

// ------------------------------------------------------------------ 9

/// `θ ↦ ‖Aθ − b‖²` as a graph with inputs `(θ, b)`.
fn quadratic(a: &Linop<f64>, m: usize) -> Nlop<f64> {
    let d = [m];
    let r = from_linop(a).combine(&sub(&d)).unwrap().link(0, 1).unwrap();
    // |r|² = r·conj(r)
    let abs2 = mul::<f64>(&d).combine(&conj(&d)).unwrap().link(1, 1).unwrap().duplicate(0, 1).unwrap();
    r.chain(&abs2).unwrap().chain(&real_part(&d)).unwrap().chain(&sum_all(&d)).unwrap()
}

struct Toy {
    a: Vec<Vec<C>>,
    b: Vec<C>,
    f: Nlop<f64>,
    b_arr: MdArray<f64>,
}

impl Toy {
    fn new(r: &mut ChaCha8Rng, m: usize, n: usize) -> Self {
        let a: Vec<Vec<C>> = (0..m)
            .map(|_| (0..n).map(|_| C::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5)).collect())
            .collect();
        let b: Vec<C> = (0..m).map(|_| C::new(r.random::<f64>(), r.random::<f64>())).collect();
        // row-major entries; probe the layout convention of `Linop::matrix`
        let flat: Vec<C> = a.iter().flatten().copied().collect();
        let mut lin = Linop::matrix(&[n], &[m], flat).unwrap();
        let e0 = MdArray::from_vec(&[n], (0..n).map(|k| C::new(k as f64 + 1.0, 0.0)).collect()).unwrap();
        let want = matvec(&a, e0.as_slice());
        let got = lin.forward(&e0).unwrap();
        if got.as_slice().iter().zip(&want).any(|(p, q)| (p - q).norm() > 1e-12) {
            let flat: Vec<C> = (0..n).flat_map(|j| (0..m).map(move |i| (i, j))).map(|(i, j)| a[i][j]).collect();
            lin = Linop::matrix(&[n], &[m], flat).unwrap();
        }
        let f = quadratic(&lin, m);
        let b_arr = MdArray::from_vec(&[m], b.clone()).unwrap();
        Self { a, b, f, b_arr }
    }

    /// Gradient through the autodiff graph.
    fn grad(&self, theta: &MdArray<f64>) -> MdArray<f64> {
        self.f.apply(&[theta, &self.b_arr]).unwrap();
        self.f.apply_adjoint_derivative(0, 0, &MdArray::from_real(&[1], &[1.0]).unwrap()).unwrap()
    }

    /// `2Aᴴ(Aθ − b)`, written out.
    fn grad_direct(&self, theta: &[C]) -> Vec<C> {
        let res: Vec<C> = matvec(&self.a, theta).iter().zip(&self.b).map(|(p, q)| p - q).collect();
        matvec_h(&self.a, &res).into_iter().map(|v| v * 2.0).collect()
    }
}

fn max_diff(a: &[C], b: &[C]) -> f64 {
    let scale = a.iter().fold(1.0f64, |m, z| m.max(z.norm()));
    a.iter().zip(b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max) / scale
}

fn optimizer_oracles() -> Outcome {
    let mut r = rng(9);
    let (m, n) = (6, 4);
    let toy = Toy::new(&mut r, m, n);
    let start: Vec<C> = (0..n).map(|_| C::new(r.random::<f64>(), r.random::<f64>())).collect();
    let arr = |v: &[C]| MdArray::from_vec(&[n], v.to_vec()).unwrap();
    let steps = 100;
    let mut notes = Vec::new();
    let mut ok = true;

    // SGD: exactly θ − ηg at every step, and the scripted trajectory
    let lr = 0.05;
    let (mut lib, mut scr) = (arr(&start), start.clone());
    let mut exact = true;
    for _ in 0..steps {
        let g = toy.grad(&lib);
        let next = sgd_step(&lib, &g, lr).unwrap();
        let by_hand: Vec<C> = lib.as_slice().iter().zip(g.as_slice()).map(|(t, g)| t - g * lr).collect();
        exact &= next.as_slice() == by_hand.as_slice();
        lib = next;
        let gs = toy.grad_direct(&scr);
        scr = scr.iter().zip(&gs).map(|(t, g)| t - g * lr).collect();
    }
    let e = max_diff(lib.as_slice(), &scr);
    ok &= exact && e <= 1e-12;
    notes.push(format!("SGD exact {exact}, trajectory {e:.1e}"));

    // Adam
    let cfg = AdamConfig::default();
    let lr = 0.02;
    let mut lib = arr(&start);
    let mut st = AdamState::new(&[n]).unwrap();
    let (mut th, mut mm, mut vv) = (start.clone(), vec![C::new(0.0, 0.0); n], vec![0.0; n]);
    let mut worst = 0.0f64;
    for t in 1..=steps {
        let g = toy.grad(&lib);
        let (next, s2) = adam_step(&lib, &g, &st, &cfg, lr).unwrap();
        lib = next;
        st = s2;
        let gs = toy.grad_direct(&th);
        for k in 0..n {
            mm[k] = mm[k] * cfg.beta1 + gs[k] * (1.0 - cfg.beta1);
            vv[k] = vv[k] * cfg.beta2 + gs[k].norm_sqr() * (1.0 - cfg.beta2);
            let mh = mm[k] / (1.0 - cfg.beta1.powi(t));
            let vh = vv[k] / (1.0 - cfg.beta2.powi(t));
            th[k] -= mh * (lr / (vh.sqrt() + cfg.eps));
        }
        worst = worst.max(max_diff(lib.as_slice(), &th));
    }
    ok &= worst <= 1e-12;
    notes.push(format!("Adam {worst:.1e}"));

    // iPALM, with and without a soft-threshold prox
    for prox in [None, Some(0.3)] {
        let cfg = IpalmConfig { alpha: 0.5, beta: 0.3 };
        let lr = 0.05;
        let (mut lib, mut lib_prev) = (arr(&start), arr(&start));
        let (mut th, mut th_prev) = (start.clone(), start.clone());
        let mut worst = 0.0f64;
        for _ in 0..steps {
            let z = nlop::optim::extrapolate(&lib, &lib_prev, cfg.beta).unwrap();
            let g = toy.grad(&z);
            let next = ipalm_step(&lib, &lib_prev, &g, &cfg, lr, prox.map(Prox::SoftThreshold)).unwrap();
            lib_prev = std::mem::replace(&mut lib, next);

            let y: Vec<C> = th.iter().zip(&th_prev).map(|(t, p)| t + (t - p) * cfg.alpha).collect();
            let zs: Vec<C> = th.iter().zip(&th_prev).map(|(t, p)| t + (t - p) * cfg.beta).collect();
            let gs = toy.grad_direct(&zs);
            let mut next: Vec<C> = y.iter().zip(&gs).map(|(y, g)| y - g * lr).collect();
            if let Some(tau) = prox {
                for v in &mut next {
                    let a = v.norm();
                    *v *= if a > 0.0 { (1.0 - tau * lr / a).max(0.0) } else { 0.0 };
                }
            }
            th_prev = std::mem::replace(&mut th, next);
            worst = worst.max(max_diff(lib.as_slice(), &th));
        }
        ok &= worst <= 1e-12;
        notes.push(format!(
            "iPALM{} {worst:.1e}",
            if prox.is_some() { " + soft threshold" } else { "" }
        ));
    }
    ensure(ok, format!("{steps} steps on a complex least-squares toy: {}", notes.join(", ")))
}

// ------------------------------------------------------------------ 10

fn naive_dft(x: &[C], inverse: bool) -> Vec<C> {
    let n = x.len();
    let sign = if inverse { 1.0 } else { -1.0 };
    let s = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(j, v)| v * C::from_polar(s, sign * 2.0 * PI * ((j * k) % n) as f64 / n as f64))
                .sum()
        })
        .collect()
}

fn dft_oracle() -> Outcome {
    let mut r = rng(10);
    let mut worst = 0.0f64;
    for n in [4, 6, 8, 12, 16] {
        for _ in 0..10 {
            let x = random_array::<f64>(&mut r, &[n], 1.0);
            for (dir, inv) in [(Direction::Forward, false), (Direction::Inverse, true)] {
                let y = dft(&x, 1, dir).map_err(fail)?;
                let want = naive_dft(x.as_slice(), inv);
                for (a, b) in y.as_slice().iter().zip(&want) {
                    worst = worst.max((a - b).norm());
                }
            }
        }
    }
    // transforms along the second axis of a 2-D array use the same kernel
    let x = random_array::<f64>(&mut r, &[3, 12], 1.0);
    let y = dft(&x, 0b10, Direction::Forward).map_err(fail)?;
    for row in 0..3 {
        let col: Vec<C> = (0..12).map(|k| x.as_slice()[row + 3 * k]).collect();
        let want = naive_dft(&col, false);
        for (k, w) in want.iter().enumerate() {
            worst = worst.max((y.as_slice()[row + 3 * k] - w).norm());
        }
    }
    ensure(worst <= 1e-12, format!("lengths 4, 6, 8, 12, 16 in both directions, max error {worst:.2e}"))
}
