//! Analytic gradients against independent oracles: a nested-loop
//! convolution and central finite differences.

use pal::autodiff::{backward, finite_diff, relative_error, Array, Tape, Tensor};
use pal::Result;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_array(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Array {
    let n = shape.iter().product();
    Array::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Values with |x| >= 0.1 so that kinks stay far from ±eps perturbations.
fn rand_away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Array {
    let n = shape.iter().product();
    let v = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.1..2.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Array::new(shape.to_vec(), v).unwrap()
}

fn naive_conv(x: &Array, w: &Array, stride: usize, pad: usize) -> Array {
    let [n, c, h, wd] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let [o, _, k, _] = [w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]];
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wd + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; n * o * oh * ow];
    for ni in 0..n {
        for oi in 0..o {
            for y in 0..oh {
                for xo in 0..ow {
                    let mut acc = 0.0;
                    for ci in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (y * stride + ky) as isize - pad as isize;
                                let ix = (xo * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += x.data()[((ni * c + ci) * h + iy as usize) * wd + ix as usize]
                                    * w.data()[((oi * c + ci) * k + ky) * k + kx];
                            }
                        }
                    }
                    out[((ni * o + oi) * oh + y) * ow + xo] = acc;
                }
            }
        }
    }
    Array::new(vec![n, o, oh, ow], out).unwrap()
}

#[test]
fn conv_matches_nested_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (stride, pad) in [(1, 0), (1, 1), (2, 0), (2, 1), (3, 2)] {
        let x = rand_array(&mut rng, &[1, 2, 5, 5], -1.0, 1.0);
        let w = rand_array(&mut rng, &[3, 2, 3, 3], -1.0, 1.0);
        let fast = Tensor::constant(x.clone())
            .conv2d(&Tensor::constant(w.clone()), None, stride, pad)
            .unwrap();
        let slow = naive_conv(&x, &w, stride, pad);
        assert_eq!(fast.shape(), slow.shape());
        assert!(fast.value().max_abs_diff(&slow) < 1e-12, "stride {stride} pad {pad}");
    }
}

/// Max relative error between analytic and finite-difference gradients,
/// skipping coordinates where both are below `floor`.
fn max_rel(analytic: &Array, numeric: &Array, floor: f64) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .filter(|(a, n)| a.abs().max(n.abs()) > floor)
        .map(|(a, n)| relative_error(*a, *n))
        .fold(0.0, f64::max)
}

/// Checks d/dx_i of `sum(weights ⊙ f(x_0..x_k))` for every input.
fn check_op<F>(f: F, inputs: &[Array], tol: f64)
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let probe = f(&inputs.iter().cloned().map(Tensor::constant).collect::<Vec<_>>()).unwrap();
    let weights = Tensor::constant(rand_array(&mut rng, probe.shape(), 0.5, 1.5));
    let scalar = |xs: &[Tensor]| -> Result<Tensor> { f(xs)?.mul(&weights)?.sum_all() };

    let tape = Tape::new();
    let leaves: Vec<Tensor> = inputs.iter().map(|a| tape.leaf(a.clone())).collect();
    let out = scalar(&leaves).unwrap();
    let refs: Vec<&Tensor> = leaves.iter().collect();
    let grads = backward(&out, &refs, false).unwrap();
    for (i, g) in grads.iter().enumerate() {
        let numeric = finite_diff(
            |xi| {
                let mut xs: Vec<Tensor> = inputs.iter().cloned().map(Tensor::constant).collect();
                xs[i] = Tensor::constant(xi.clone());
                scalar(&xs)?.item()
            },
            &inputs[i],
            1e-5,
        )
        .unwrap();
        // Central differences carry ~1e-10 absolute roundoff at these
        // magnitudes; tiny coordinates are held to an absolute bound instead.
        let err = max_rel(g.value(), &numeric, 1e-2);
        assert!(err < tol, "input {i}: max rel err {err}");
        let abs = g.value().max_abs_diff(&numeric);
        assert!(abs < 1e-7, "input {i}: max abs err {abs}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn binary_ops_match_finite_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_array(&mut rng, &[2, 3], -2.0, 2.0);
        let b = rand_array(&mut rng, &[3], 0.5, 2.0);
        check_op(|x| x[0].add(&x[1]), &[a.clone(), b.clone()], 1e-6);
        check_op(|x| x[0].sub(&x[1]), &[a.clone(), b.clone()], 1e-6);
        check_op(|x| x[0].mul(&x[1]), &[a.clone(), b.clone()], 1e-6);
        check_op(|x| x[0].div(&x[1]), &[a.clone(), b.clone()], 1e-6);
        check_op(|x| x[0].matmul(&x[1]), &[a.clone(), rand_array(&mut rng, &[3, 4], -1.0, 1.0)], 1e-6);
    }

    #[test]
    fn unary_ops_match_finite_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_away_from_zero(&mut rng, &[2, 3]);
        let pos = rand_array(&mut rng, &[2, 3], 0.2, 3.0);
        check_op(|t| t[0].relu(), std::slice::from_ref(&x), 1e-6);
        check_op(|t| t[0].abs(), std::slice::from_ref(&x), 1e-6);
        check_op(|t| t[0].exp(), std::slice::from_ref(&x), 1e-6);
        check_op(|t| t[0].ln(), std::slice::from_ref(&pos), 1e-6);
        check_op(|t| t[0].sqrt(), std::slice::from_ref(&pos), 1e-6);
        check_op(|t| t[0].safe_recip(), std::slice::from_ref(&pos), 1e-6);
        check_op(|t| t[0].sum_axes(&[1]), std::slice::from_ref(&x), 1e-6);
        check_op(|t| t[0].mean_axes(&[0]), std::slice::from_ref(&x), 1e-6);
        check_op(|t| t[0].transpose(), std::slice::from_ref(&x), 1e-6);
        check_op(|t| t[0].sum_axes(&[1])?.broadcast_to(&[2, 3]), &[x], 1e-6);
    }

    #[test]
    fn conv_and_pool_match_finite_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_array(&mut rng, &[2, 2, 5, 5], -1.0, 1.0);
        let w = rand_array(&mut rng, &[3, 2, 3, 3], -1.0, 1.0);
        let b = rand_array(&mut rng, &[3], -1.0, 1.0);
        check_op(|t| t[0].conv2d(&t[1], Some(&t[2]), 1, 1), &[x.clone(), w.clone(), b], 1e-6);
        check_op(|t| t[0].conv2d(&t[1], None, 2, 0), &[x, w], 1e-6);
        // Distinct well-separated values keep pooling argmaxes stable.
        let mut vals: Vec<f64> = (0..2 * 2 * 4 * 4).map(|i| i as f64 * 0.05).collect();
        for i in (1..vals.len()).rev() {
            vals.swap(i, rng.gen_range(0..=i));
        }
        let p = Array::new(vec![2, 2, 4, 4], vals).unwrap();
        check_op(|t| t[0].maxpool2d(2, 2), std::slice::from_ref(&p), 1e-6);
        check_op(|t| t[0].maxpool2d(3, 1), &[p], 1e-6);
    }
}

/// A gradient-dependent loss: L(w) = Σ c ⊙ (∂/∂x Σ net(x; w))², differentiated
/// with respect to the weights through the recorded backward pass.
fn second_order_loss(x: &Tensor, w1: &Tensor, w2: &Tensor, dense: &Tensor, c: &Tensor, create: bool) -> Result<Tensor> {
    let h = x.conv2d(w1, None, 1, 1)?.relu()?;
    let h2 = h.conv2d(w2, None, 1, 0)?.exp()?.maxpool2d(2, 2)?;
    let n = h2.shape()[0];
    let flat = h2.reshape(vec![n, h2.numel() / n])?;
    let out = flat.matmul(dense)?.sum_all()?;
    let g = backward(&out, &[&h], create)?.remove(0);
    g.mul(&g)?.mul(c)?.sum_all()
}

#[test]
fn second_order_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Tensor::constant(rand_array(&mut rng, &[2, 1, 6, 6], -1.0, 1.0));
    let w1 = rand_array(&mut rng, &[2, 1, 3, 3], -0.5, 0.5);
    let w2 = rand_array(&mut rng, &[3, 2, 3, 3], -0.3, 0.3);
    let dense = rand_array(&mut rng, &[12, 2], -1.0, 1.0);
    let c = Tensor::constant(rand_array(&mut rng, &[2, 2, 6, 6], 0.5, 1.5));

    let tape = Tape::new();
    let (lw1, lw2, ld) = (tape.leaf(w1.clone()), tape.leaf(w2.clone()), tape.leaf(dense.clone()));
    let loss = second_order_loss(&x, &lw1, &lw2, &ld, &c, true).unwrap();
    let grads = backward(&loss, &[&lw1, &lw2, &ld], false).unwrap();

    let params = [w1, w2, dense];
    for i in 0..3 {
        let numeric = finite_diff(
            |p| {
                let mut ps: Vec<Tensor> = params.iter().cloned().map(Tensor::constant).collect();
                ps[i] = Tensor::constant(p.clone());
                // The inner backward needs tracked inputs; a throwaway tape
                // keeps the evaluation identical to the analytic path.
                let t = Tape::new();
                let ps: Vec<Tensor> = ps.iter().map(|p| t.leaf(p.value().clone())).collect();
                second_order_loss(&x, &ps[0], &ps[1], &ps[2], &c, false)?.item()
            },
            &params[i],
            1e-5,
        )
        .unwrap();
        let err = max_rel(grads[i].value(), &numeric, 1e-8);
        assert!(err < 1e-4, "param {i}: {err}");
    }
}

#[test]
fn square_then_square_again() {
    let tape = Tape::new();
    let x = tape.leaf(Array::from_vec(vec![1.0, 3.0]));
    let g = backward(&x.mul(&x).unwrap().sum_all().unwrap(), &[&x], true).unwrap().remove(0);
    let h = backward(&g.mul(&g).unwrap().sum_all().unwrap(), &[&x], false).unwrap().remove(0);
    assert_eq!(h.data(), &[8.0, 24.0]);
    let fd = finite_diff(|v| Ok(v.data().iter().map(|a| 4.0 * a * a).sum()), x.value(), 1e-5).unwrap();
    assert!(h.value().max_abs_diff(&fd) < 1e-6);
}

#[test]
fn replay_and_determinism() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tape = Tape::new();
        let x = tape.leaf(rand_array(&mut rng, &[1, 2, 6, 6], -1.0, 1.0));
        let w = tape.leaf(rand_array(&mut rng, &[2, 2, 3, 3], -1.0, 1.0));
        let y = x.conv2d(&w, None, 1, 1).unwrap().relu().unwrap().maxpool2d(2, 2).unwrap();
        let s = y.mul(&y).unwrap().sum_all().unwrap();
        let g = backward(&s, &[&w], true).unwrap().remove(0);
        let s2 = g.mul(&g).unwrap().sum_all().unwrap();
        let g2 = backward(&s2, &[&w, &x], false).unwrap();
        tape.replay().unwrap();
        (g.value().clone(), g2[0].value().clone(), g2[1].value().clone(), tape.len())
    };
    let a = run();
    let b = run();
    assert!(a.0.bit_eq(&b.0) && a.1.bit_eq(&b.1) && a.2.bit_eq(&b.2));
    assert_eq!(a.3, b.3);
}

#[test]
fn tape_only_grows() {
    let tape = Tape::new();
    let x = tape.leaf(Array::from_vec(vec![0.5, -1.5, 2.0]));
    let mut last = tape.len();
    let y = x.exp().unwrap();
    assert!(tape.len() >= last);
    last = tape.len();
    let s = y.mul(&x).unwrap().sum_all().unwrap();
    assert!(tape.len() >= last);
    last = tape.len();
    let g = backward(&s, &[&x], true).unwrap().remove(0);
    assert!(tape.len() >= last);
    last = tape.len();
    backward(&g.sum_all().unwrap(), &[&x], false).unwrap();
    assert!(tape.len() >= last);
    assert!(Tape::new().is_empty());
}
