use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::mdarray::MdArray;
use crate::nlop::{check_derivatives, random_array, Ctx};
use crate::optim::Prox;
use crate::real::Cplx;

type C = Cplx<f64>;

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn reals(v: &[f64]) -> MdArray<f64> {
    MdArray::from_real(&[v.len()], v).unwrap()
}

fn assert_close(a: &MdArray<f64>, b: &MdArray<f64>, tol: f64) {
    assert_eq!(a.dims(), b.dims());
    let d = a.sub(b).unwrap().norm();
    assert!(d <= tol * (1.0 + b.norm()), "difference {d}\n{a:?}\n{b:?}");
}

fn fd_ok(f: &crate::Nlop<f64>, x: &[MdArray<f64>], outputs: &[usize], wrt: &[usize]) {
    let r = check_derivatives(f, x, outputs, wrt, 1e-6, 11).unwrap();
    assert!(r.finite_difference <= 1e-6, "finite differences: {r:?}");
    assert!(r.adjoint <= 1e-10, "adjoint: {r:?}");
}

#[test]
fn dense_identity_and_naive_product() {
    let m = dense::<f64>("d", 2, 2, 1).unwrap();
    let mut p = Params::new();
    p.insert("d.w".into(), MdArray::from_real(&[2, 2], &[1.0, 0.0, 0.0, 1.0]).unwrap());
    p.insert("d.b".into(), MdArray::zeros(&[2]).unwrap());
    let x = MdArray::from_vec(&[2, 1], vec![c(1.0, 2.0), c(-3.0, 0.5)]).unwrap();
    let mut d = Params::new();
    d.insert("x".into(), x.clone());
    assert_eq!(m.apply(&[&d, &p]).unwrap()["y"], x);

    let mut r = rng(1);
    let m = dense::<f64>("d", 2, 3, 2).unwrap();
    let w = random_array::<f64>(&mut r, &[3, 2], 1.0);
    let b = random_array::<f64>(&mut r, &[3], 1.0);
    let x = random_array::<f64>(&mut r, &[2, 2], 1.0);
    let mut expect = MdArray::<f64>::zeros(&[3, 2]).unwrap();
    for bb in 0..2 {
        for o in 0..3 {
            let mut s = b.get(&[o]).unwrap();
            for i in 0..2 {
                s += w.get(&[o, i]).unwrap() * x.get(&[i, bb]).unwrap();
            }
            expect.set(&[o, bb], s).unwrap();
        }
    }
    let y = m.nlop().apply(&[&x, &w, &b]).unwrap().remove(0);
    assert_close(&y, &expect, 1e-14);
}

#[test]
fn dense_weight_gradient_under_mse() {
    let m = dense::<f64>("d", 3, 2, 4).unwrap();
    let t = attach_loss(&m, "y", Loss::Mse, "ref").unwrap();
    let mut r = rng(2);
    let x: Vec<MdArray<f64>> = t.inputs().iter().map(|s| random_array(&mut r, &s.dims, 1.0)).collect();
    let wi = t.input_index("d.w").unwrap();
    let xr: Vec<_> = x.iter().collect();
    let g = t.nlop().gradient(&xr).unwrap().swap_remove(wi);
    // central differences along each real and imaginary coordinate
    let h = 1e-6;
    let mut fd = MdArray::<f64>::zeros(g.dims()).unwrap();
    for k in 0..g.len() {
        for (dir, im) in [(c(1.0, 0.0), false), (c(0.0, 1.0), true)] {
            let mut e = MdArray::<f64>::zeros(g.dims()).unwrap();
            e.as_mut_slice()[k] = dir;
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[wi].axpy(c(h, 0.0), &e).unwrap();
            xm[wi].axpy(c(-h, 0.0), &e).unwrap();
            let lp = t.nlop().apply(&xp.iter().collect::<Vec<_>>()).unwrap()[0].as_slice()[0].re;
            let lm = t.nlop().apply(&xm.iter().collect::<Vec<_>>()).unwrap()[0].as_slice()[0].re;
            let d = (lp - lm) / (2.0 * h);
            let v = &mut fd.as_mut_slice()[k];
            if im {
                v.im = d;
            } else {
                v.re = d;
            }
        }
    }
    assert_close(&g, &fd, 1e-6);
}

#[test]
fn conv_delta_and_sliding_window() {
    let g = ConvGeom::new(&[5, 4], &[3, 3], 1, 1, 2, Padding::Same).unwrap();
    let mut k = MdArray::<f64>::zeros(&g.k_dims()).unwrap();
    k.set(&[1, 1, 0, 0], c(1.0, 0.0)).unwrap();
    let x = random_array::<f64>(&mut rng(3), &g.x_dims(), 1.0);
    assert_eq!(g.forward(&x, &k).unwrap(), x);

    let g = ConvGeom::new(&[4], &[3], 1, 1, 1, Padding::Valid).unwrap();
    let x = MdArray::from_real(&[4, 1, 1], &[1.0, 2.0, 3.0, 4.0]).unwrap();
    let k = MdArray::from_real(&[3, 1, 1], &[1.0, 0.0, -1.0]).unwrap();
    let y = g.forward(&x, &k).unwrap();
    assert_eq!(y.as_slice(), &[c(-2.0, 0.0), c(-2.0, 0.0)]);
}

/// Direct sliding-window evaluation of the 2-D case.
fn naive_conv2(g: &ConvGeom, x: &MdArray<f64>, k: &MdArray<f64>) -> MdArray<f64> {
    let (lo0, lo1) = match g.padding {
        Padding::Valid => (0, 0),
        Padding::Same => ((g.kernel[0] - 1) / 2, (g.kernel[1] - 1) / 2),
    };
    let o = g.out_spatial();
    let mut y = MdArray::zeros(&g.y_dims()).unwrap();
    for b in 0..g.batch {
        for f in 0..g.cout {
            for o1 in 0..o[1] {
                for o0 in 0..o[0] {
                    let mut s = c(0.0, 0.0);
                    for ci in 0..g.cin {
                        for k1 in 0..g.kernel[1] {
                            for k0 in 0..g.kernel[0] {
                                let p0 = (o0 + k0) as isize - lo0 as isize;
                                let p1 = (o1 + k1) as isize - lo1 as isize;
                                if p0 < 0 || p1 < 0 || p0 >= g.spatial[0] as isize || p1 >= g.spatial[1] as isize {
                                    continue;
                                }
                                s += x.get(&[p0 as usize, p1 as usize, ci, b]).unwrap() * k.get(&[k0, k1, ci, f]).unwrap();
                            }
                        }
                    }
                    y.set(&[o0, o1, f, b], s).unwrap();
                }
            }
        }
    }
    y
}

#[test]
fn conv_matches_naive_and_adjoint_pairs() {
    let mut r = rng(4);
    for padding in [Padding::Valid, Padding::Same] {
        for (sp, kd) in [([7, 5], [3, 2]), ([6, 6], [4, 3]), ([5, 3], [1, 3])] {
            let g = ConvGeom::new(&sp, &kd, 2, 3, 2, padding).unwrap();
            let x = random_array::<f64>(&mut r, &g.x_dims(), 1.0);
            let k = random_array::<f64>(&mut r, &g.k_dims(), 1.0);
            let y = g.forward(&x, &k).unwrap();
            assert_close(&y, &naive_conv2(&g, &x, &k), 1e-13);
            let w = random_array::<f64>(&mut r, &g.y_dims(), 1.0);
            let lhs = y.dot(&w).unwrap();
            let rhs = x.dot(&g.adjoint_input(&w, &k).unwrap()).unwrap();
            assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + lhs.norm()), "{padding:?}: {lhs} {rhs}");
            let rhs = k.dot(&g.kernel_grad(&x, &w).unwrap()).unwrap();
            assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + lhs.norm()));
        }
    }
}

#[test]
fn conv_layers_pass_derivative_checks() {
    let mut r = rng(5);
    for padding in [Padding::Valid, Padding::Same] {
        let g = ConvGeom::new(&[5, 4], &[3, 2], 2, 2, 2, padding).unwrap();
        for v in [ConvVariant::Forward, ConvVariant::Transposed] {
            let f = conv_nlop::<f64>(&g, v);
            let x: Vec<_> = f.all_input_dims().iter().map(|d| random_array(&mut r, d, 1.0)).collect();
            fd_ok(&f, &x, &[0], &[0, 1]);
        }
    }
    // 3-D convolution takes the same path
    let g = ConvGeom::new(&[4, 3, 3], &[2, 2, 2], 1, 2, 1, Padding::Same).unwrap();
    let f = conv_nlop::<f64>(&g, ConvVariant::Forward);
    let x: Vec<_> = f.all_input_dims().iter().map(|d| random_array(&mut r, d, 1.0)).collect();
    fd_ok(&f, &x, &[0], &[0, 1]);
}

#[test]
fn transposed_conv_is_adjoint_of_conv() {
    let mut r = rng(6);
    let g = ConvGeom::new(&[6, 5], &[3, 3], 2, 3, 1, Padding::Same).unwrap();
    let k = random_array::<f64>(&mut r, &g.k_dims(), 1.0);
    let x = random_array::<f64>(&mut r, &g.x_dims(), 1.0);
    let z = random_array::<f64>(&mut r, &g.y_dims(), 1.0);
    let fw = conv_nlop::<f64>(&g, ConvVariant::Forward).apply(&[&x, &k]).unwrap().remove(0);
    let tr = conv_nlop::<f64>(&g, ConvVariant::Transposed).apply(&[&z, &k]).unwrap().remove(0);
    let d = fw.dot(&z).unwrap() - x.dot(&tr).unwrap();
    assert!(d.norm() < 1e-12);
}

#[test]
fn activation_examples() {
    let f = activation_nlop::<f64>(Activation::CRelu, &[1]).unwrap();
    let y = f.apply(&[&MdArray::scalar(c(1.0, -2.0))]).unwrap();
    assert_eq!(y[0].as_slice()[0], c(1.0, 0.0));

    let f = activation_nlop::<f64>(Activation::Cardioid, &[3]).unwrap();
    let y = f.apply(&[&reals(&[2.5, -1.5, 0.0])]).unwrap();
    assert_eq!(y[0], reals(&[2.5, 0.0, 0.0]));

    let f = activation_nlop::<f64>(Activation::Softmax { axis: 0 }, &[2]).unwrap();
    let y = f.apply(&[&reals(&[0.0, 0.0])]).unwrap();
    assert_eq!(y[0], reals(&[0.5, 0.5]));

    let f = activation_nlop::<f64>(Activation::Sigmoid, &[1]).unwrap();
    let y = f.apply(&[&MdArray::scalar(c(0.0, 7.0))]).unwrap();
    assert_eq!(y[0].as_slice()[0], c(0.5, 0.0));
}

#[test]
fn softmax_sums_to_one() {
    let mut r = rng(7);
    let dims = [3, 5, 4];
    let f = activation_nlop::<f64>(Activation::Softmax { axis: 1 }, &dims).unwrap();
    let x = random_array::<f64>(&mut r, &dims, 10.0);
    let y = f.apply(&[&x]).unwrap().remove(0);
    for a in 0..3 {
        for b in 0..4 {
            let s: f64 = (0..5).map(|k| y.get(&[a, k, b]).unwrap().re).sum();
            assert!((s - 1.0).abs() <= 1e-12);
        }
    }
}

#[test]
fn activations_pass_derivative_checks() {
    let mut r = rng(8);
    let dims = [4, 3, 2];
    for kind in [
        Activation::CRelu,
        Activation::Cardioid,
        Activation::Sigmoid,
        Activation::Softmax { axis: 1 },
    ] {
        let f = activation_nlop::<f64>(kind, &dims).unwrap();
        let x = random_array(&mut r, &dims, 1.0);
        fd_ok(&f, &[x], &[0], &[0]);
    }
}

fn bn_inputs(r: &mut ChaCha8Rng, dims: &[usize], axis: usize) -> Vec<MdArray<f64>> {
    let fd = [dims[axis]];
    let var = MdArray::from_real(&fd, &vec![1.7; fd[0]]).unwrap();
    vec![
        random_array(r, dims, 1.0),
        random_array(r, &fd, 1.0),
        random_array(r, &fd, 1.0),
        random_array(r, &fd, 1.0),
        var,
    ]
}

#[test]
fn batchnorm_normalizes_batches() {
    let dims = [4, 3, 5];
    let cfg = BatchNormState::default();
    let f = batchnorm_nlop::<f64>(&dims, 1, Mode::Train, cfg).unwrap();
    let mut x = bn_inputs(&mut rng(9), &dims, 1);
    x[0] = x[0].scale_real(3.0);
    x[1] = MdArray::filled(&[3], c(1.0, 0.0)).unwrap();
    x[2] = MdArray::zeros(&[3]).unwrap();
    let xr: Vec<_> = x.iter().collect();
    let y = f.apply(&xr).unwrap();
    for ch in 0..3 {
        let vals: Vec<C> = (0..4).flat_map(|a| (0..5).map(move |b| (a, b))).map(|(a, b)| y[0].get(&[a, ch, b]).unwrap()).collect();
        let m: C = vals.iter().sum::<C>() / 20.0;
        let v: f64 = vals.iter().map(|z| (z - m).norm_sqr()).sum::<f64>() / 20.0;
        assert!(m.norm() <= 1e-12);
        // ε shrinks the variance by about ε/var
        assert!((v - 1.0).abs() <= 1e-5, "{v}");
    }
    // moving statistics move toward the batch statistics
    assert_eq!(y[1].dims(), &[3]);

    let mut xc = x.clone();
    xc[0] = MdArray::filled(&dims, c(2.0, -1.0)).unwrap();
    let xr: Vec<_> = xc.iter().collect();
    let y = f.apply(&xr).unwrap();
    assert!(y[0].max_abs() == 0.0);
}

#[test]
fn batchnorm_inference_formula() {
    let dims = [3, 2, 2];
    let cfg = BatchNormState::default();
    let f = batchnorm_nlop::<f64>(&dims, 1, Mode::Infer, cfg).unwrap();
    let x = bn_inputs(&mut rng(10), &dims, 1);
    let xr: Vec<_> = x.iter().collect();
    let y = f.apply(&xr).unwrap().remove(0);
    for a in 0..3 {
        for ch in 0..2 {
            for b in 0..2 {
                let xv = x[0].get(&[a, ch, b]).unwrap();
                let (g, be, m, v) = (x[1].as_slice()[ch], x[2].as_slice()[ch], x[3].as_slice()[ch], x[4].as_slice()[ch].re);
                let want = g * (xv - m) / (v + cfg.epsilon).sqrt() + be;
                assert!((y.get(&[a, ch, b]).unwrap() - want).norm() < 1e-14);
            }
        }
    }
}

#[test]
fn batchnorm_passes_derivative_checks() {
    let dims = [3, 2, 4];
    let mut r = rng(12);
    for mode in [Mode::Train, Mode::Infer] {
        let f = batchnorm_nlop::<f64>(&dims, 1, mode, BatchNormState::default()).unwrap();
        let x = bn_inputs(&mut r, &dims, 1);
        fd_ok(&f, &x, &[0], &[0, 1, 2]);
    }
}

#[test]
fn maxpool_examples_and_derivatives() {
    let f = maxpool_nlop::<f64>(&[4], &[2]).unwrap();
    let y = f.apply(&[&reals(&[1.0, 5.0, 2.0, 3.0])]).unwrap();
    assert_eq!(y[0], reals(&[5.0, 3.0]));
    // ties go to the lowest index; magnitudes decide
    let y = f.apply(&[&MdArray::from_vec(&[4], vec![c(0.0, 2.0), c(2.0, 0.0), c(-3.0, 0.0), c(1.0, 1.0)]).unwrap()]).unwrap();
    assert_eq!(y[0].as_slice(), &[c(0.0, 2.0), c(-3.0, 0.0)]);
    // truncated windows at the border
    let f = maxpool_nlop::<f64>(&[5, 3], &[2, 2]).unwrap();
    assert_eq!(f.output_dims()[0], vec![3, 2]);
    let x = random_array(&mut rng(13), &[5, 3], 1.0);
    fd_ok(&f, &[x], &[0], &[0]);
}

#[test]
fn dropout_behaviour() {
    let mut r = rng(14);
    let x = random_array::<f64>(&mut r, &[8], 1.0);
    let f = dropout_nlop::<f64>(&[8], 0.0, 1, 0, Mode::Train).unwrap();
    assert_eq!(f.apply(&[&x]).unwrap()[0], x);
    let f = dropout_nlop::<f64>(&[8], 0.5, 1, 0, Mode::Infer).unwrap();
    assert_eq!(f.apply(&[&x]).unwrap()[0], x);
    assert!(dropout_nlop::<f64>(&[8], 1.0, 1, 0, Mode::Train).is_err());

    // expected value over many seeded draws
    let rate = 0.2;
    let f = dropout_nlop::<f64>(&[8], rate, 5, 3, Mode::Train).unwrap();
    let draws = 10_000;
    let mut acc = MdArray::<f64>::zeros(&[8]).unwrap();
    for _ in 0..draws {
        acc.add_assign(&f.apply_with(&[&x], Ctx::default().no_state()).unwrap()[0]).unwrap();
    }
    let mean = acc.scale_real(1.0 / draws as f64);
    for (m, v) in mean.as_slice().iter().zip(x.as_slice()) {
        assert!((m - v).norm() <= 0.02 * v.norm(), "{m} vs {v}");
    }

    // replay reuses the last mask
    let y1 = f.apply(&[&x]).unwrap().remove(0);
    let y2 = f.apply_with(&[&x], Ctx { keep_state: true, replay: true }).unwrap().remove(0);
    assert_eq!(y1, y2);
    let y3 = f.apply(&[&x]).unwrap().remove(0);
    assert_ne!(y1, y3);
    fd_ok(&f, &[x], &[0], &[0]);
}

#[test]
fn dropout_is_keyed_by_seed_layer_and_step() {
    let a = dropout_mask::<f64>(&[64], 0.5, 1, 2, 3).unwrap();
    assert_eq!(a, dropout_mask::<f64>(&[64], 0.5, 1, 2, 3).unwrap());
    assert_ne!(a, dropout_mask::<f64>(&[64], 0.5, 1, 2, 4).unwrap());
    assert_ne!(a, dropout_mask::<f64>(&[64], 0.5, 1, 3, 3).unwrap());
}

#[test]
fn loss_examples() {
    let mut r = rng(15);
    let x = random_array::<f64>(&mut r, &[3, 2], 1.0);
    let mse = loss_nlop::<f64>(Loss::Mse, &[3, 2]).unwrap();
    assert_eq!(mse.apply(&[&x, &x]).unwrap()[0].as_slice()[0], c(0.0, 0.0));

    let mad = loss_nlop::<f64>(Loss::Mad, &[1]).unwrap();
    assert_eq!(mad.apply(&[&reals(&[3.0]), &reals(&[1.0])]).unwrap()[0].as_slice()[0], c(2.0, 0.0));

    let cce = loss_nlop::<f64>(Loss::Cce { axis: 0 }, &[3, 2]).unwrap();
    let hot = MdArray::from_real(&[3, 2], &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
    assert_eq!(cce.apply(&[&hot, &hot]).unwrap()[0].as_slice()[0], c(0.0, 0.0));
}

#[test]
fn losses_pass_derivative_checks() {
    let mut r = rng(16);
    let dims = [3, 4];
    for kind in [Loss::Mse, Loss::Mad] {
        let f = loss_nlop::<f64>(kind, &dims).unwrap();
        let x = vec![random_array(&mut r, &dims, 1.0), random_array(&mut r, &dims, 1.0)];
        fd_ok(&f, &x, &[0], &[0, 1]);
    }
    let f = loss_nlop::<f64>(Loss::Cce { axis: 0 }, &dims).unwrap();
    let p = activation_nlop::<f64>(Activation::Softmax { axis: 0 }, &dims).unwrap();
    let x = vec![
        p.apply(&[&random_array(&mut r, &dims, 1.0)]).unwrap().remove(0),
        p.apply(&[&random_array(&mut r, &dims, 1.0)]).unwrap().remove(0),
    ];
    fd_ok(&f, &x, &[0], &[0, 1]);
}

#[test]
fn weights_round_trip_by_name() {
    let m = dense::<f32>("fc", 4, 3, 2).unwrap();
    let mut p = m.init_params(3).unwrap();
    assert_eq!(p.len(), 2);
    let w = random_array::<f32>(&mut rng(17), &[3, 4], 1.0);
    p.insert("fc.w".into(), w.clone());
    assert_eq!(p["fc.w"], w);
    assert_eq!(m.input("fc.w").unwrap().kind, ArgKind::Weight);
    assert_eq!(m.input("x").unwrap().kind, ArgKind::Data);
    assert!(matches!(m.input("nope"), Err(crate::Error::UnknownName(_))));
    // same seed, same draw
    assert_eq!(m.init_params(3).unwrap(), m.init_params(3).unwrap());
    assert_ne!(m.init_params(3).unwrap()["fc.w"], m.init_params(4).unwrap()["fc.w"]);
    assert_eq!(m.num_parameters(), 2 * (12 + 3));
}

#[test]
fn model_composition() {
    let a = dense::<f64>("a", 3, 4, 2).unwrap();
    let act = activation::<f64>(Activation::Cardioid, &[4, 2]).unwrap();
    let b = dense::<f64>("b", 4, 2, 2).unwrap();
    let net = a.chain(&act, "y", "x").unwrap().chain(&b, "y", "x").unwrap();
    let names: Vec<_> = net.inputs().iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, ["x", "a.w", "a.b", "b.w", "b.b"]);
    assert!(a.combine(&a.prefix_params("z").unwrap()).is_err());

    // shared weights: the same dense layer applied twice
    let d = dense::<f64>("s", 2, 2, 1).unwrap();
    // each application needs its own operator instance
    assert!(d.chain(&d, "y", "x").is_err());
    let d2 = dense::<f64>("s", 2, 2, 1).unwrap();
    let twice = d.chain(&d2, "y", "x").unwrap();
    assert_eq!(twice.inputs().len(), 3);
    let mut r = rng(18);
    let x: Vec<_> = twice.inputs().iter().map(|s| random_array(&mut r, &s.dims, 1.0)).collect();
    let y = twice.nlop().apply(&x.iter().collect::<Vec<_>>()).unwrap().remove(0);
    let once = |v: &MdArray<f64>| d.nlop().apply(&[v, &x[1], &x[2]]).unwrap().remove(0);
    assert_close(&y, &once(&once(&x[0])), 1e-14);
    fd_ok(twice.nlop(), &x, &[0], &[0, 1, 2]);

    // binding fixes an input
    let bound = d.bind("s.b", MdArray::zeros(&[2]).unwrap()).unwrap();
    assert_eq!(bound.inputs().len(), 2);
    let p = bound.set_prox("s.w", Some(Prox::RealValued)).unwrap();
    assert_eq!(p.input("s.w").unwrap().prox, Some(Prox::RealValued));
}

#[test]
fn moving_statistics_are_chained() {
    let dims = [2, 3, 4];
    let bn = batchnorm::<f64>("bn", &dims, 1, Mode::Train, BatchNormState::default()).unwrap();
    let bn2 = batchnorm::<f64>("bn", &dims, 1, Mode::Train, BatchNormState::default()).unwrap();
    let twice = bn.chain(&bn2, "y", "x").unwrap();
    let outs: Vec<_> = twice.outputs().iter().map(|o| o.name.clone()).collect();
    assert_eq!(outs, ["y", "bn.mean.new", "bn.var.new"]);
    let mut r = rng(19);
    let p = twice.init_params(1).unwrap();
    let mut d = Params::new();
    d.insert("x".to_string(), random_array(&mut r, &dims, 1.0));
    let y = twice.apply(&[&d, &p]).unwrap();
    // two momentum updates from the initial statistics
    let once = bn.apply(&[&d, &p]).unwrap();
    let mut p2 = p.clone();
    p2.insert("bn.mean".into(), once["bn.mean.new"].clone());
    p2.insert("bn.var".into(), once["bn.var.new"].clone());
    let mut d2 = Params::new();
    d2.insert("x".to_string(), once["y"].clone());
    let again = bn.apply(&[&d2, &p2]).unwrap();
    assert_close(&y["bn.var.new"], &again["bn.var.new"], 1e-14);
    assert_close(&y["y"], &again["y"], 1e-14);
}
