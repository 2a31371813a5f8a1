mod common;

use aalw::nn::*;
use aalw::train::{model_from_flat, model_to_flat, segment_loss, segment_loss_and_grad, threshold_mask};
use common::*;

const EPS: f64 = 1e-3;
const TOL: f64 = 1e-5;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn r_bias(r: &mut rand_chacha::ChaCha8Rng) -> f64 {
    uniform_vec(r, 1, -0.5, 0.5)[0]
}

#[test]
fn conv_gradients() {
    let mut r = rng(1);
    for k in [1, 3] {
        for _ in 0..20 {
            let x = uniform_vec(&mut r, 7, -1.0, 1.0);
            let gy = uniform_vec(&mut r, 7, -1.0, 1.0);
            let p = ConvParams::new(uniform_vec(&mut r, k, -1.0, 1.0), r_bias(&mut r)).unwrap();
            let (gx, gp) = conv1d_backward(&x, &p, &gy);

            let f_x = |v: &[f64]| dot(&conv1d_same(v, &p).unwrap(), &gy);
            assert!(gradient_check(f_x, &x, &gx, EPS).unwrap() < TOL);

            let f_p = |v: &[f64]| {
                let q = ConvParams::new(v[..k].to_vec(), v[k]).unwrap();
                dot(&conv1d_same(&x, &q).unwrap(), &gy)
            };
            let mut theta = p.kernel.clone();
            theta.push(p.bias);
            let mut analytic = gp.kernel.clone();
            analytic.push(gp.bias);
            assert!(gradient_check(f_p, &theta, &analytic, EPS).unwrap() < TOL);
        }
    }
}

#[test]
fn linear_gradients() {
    let mut r = rng(2);
    for (i, o) in [(7, 16), (16, 16), (23, 7), (1, 1)] {
        let x = uniform_vec(&mut r, i, -1.0, 1.0);
        let gy = uniform_vec(&mut r, o, -1.0, 1.0);
        let p = LinearParams::new(i, o, uniform_vec(&mut r, i * o, -1.0, 1.0), uniform_vec(&mut r, o, -1.0, 1.0))
            .unwrap();
        let (gx, gp) = linear_backward(&x, &p, &gy);

        let f_x = |v: &[f64]| dot(&linear_layer(v, &p).unwrap(), &gy);
        assert!(gradient_check(f_x, &x, &gx, EPS).unwrap() < TOL);

        let f_w = |v: &[f64]| {
            let q = LinearParams::new(i, o, v.to_vec(), p.bias.clone()).unwrap();
            dot(&linear_layer(&x, &q).unwrap(), &gy)
        };
        assert!(gradient_check(f_w, &p.weights, &gp.weights, EPS).unwrap() < TOL);

        let f_b = |v: &[f64]| {
            let q = LinearParams::new(i, o, p.weights.clone(), v.to_vec()).unwrap();
            dot(&linear_layer(&x, &q).unwrap(), &gy)
        };
        assert!(gradient_check(f_b, &p.bias, &gp.bias, EPS).unwrap() < TOL);
    }
}

#[test]
fn tanh_gradients() {
    let mut r = rng(3);
    let x = uniform_vec(&mut r, 50, -3.0, 3.0);
    let gy = uniform_vec(&mut r, 50, -1.0, 1.0);
    let gx = tanh_backward(&tanh_eval(&x), &gy);
    let f = |v: &[f64]| dot(&tanh_eval(v), &gy);
    assert!(gradient_check(f, &x, &gx, EPS).unwrap() < TOL);

    let at_zero = tanh_backward(&tanh_eval(&[0.0]), &[1.0]);
    assert_eq!(at_zero, vec![1.0]);
}

#[test]
fn aht_input_and_slope_gradients() {
    let mut r = rng(4);
    let mut done = 0;
    while done < 20 {
        let x = uniform_vec(&mut r, 7, -1.0, 1.0);
        let p = AhtParams::new(uniform_vec(&mut r, 7, 0.0, 0.5), uniform_vec(&mut r, 7, 0.5, 2.0)).unwrap();
        if check_aht_margin(&x, &p, EPS).is_err() {
            continue;
        }
        let gy = uniform_vec(&mut r, 7, -1.0, 1.0);
        let (gx, gp) = aht_backward(&x, &p, &gy, ThresholdGrad::Surrogate);

        let f_x = |v: &[f64]| dot(&aht_eval(v, &p).unwrap(), &gy);
        assert!(gradient_check(f_x, &x, &gx, EPS).unwrap() < TOL);

        let f_b = |v: &[f64]| {
            let q = AhtParams::new(p.thresholds.clone(), v.to_vec()).unwrap();
            dot(&aht_eval(&x, &q).unwrap(), &gy)
        };
        assert!(gradient_check(f_b, &p.slopes, &gp.slopes, EPS).unwrap() < TOL);
        done += 1;
    }
}

#[test]
fn aht_slope_gradient_closed_form() {
    let p = AhtParams::new(vec![0.5], vec![1.0]).unwrap();
    let (_, gp) = aht_backward(&[2.0], &p, &[1.0], ThresholdGrad::Surrogate);
    assert_eq!(gp.slopes, vec![2.0]);
    let f = |v: &[f64]| aht_eval(&[2.0], &AhtParams::new(vec![0.5], v.to_vec()).unwrap()).unwrap()[0];
    assert!(gradient_check(f, &[1.0], &[2.0], EPS).unwrap() < TOL);
}

#[test]
fn threshold_surrogate_matches_its_formula() {
    let mut r = rng(5);
    for _ in 0..200 {
        let x = uniform_vec(&mut r, 7, -1.0, 1.0);
        let p = AhtParams::new(uniform_vec(&mut r, 7, 0.0, 0.8), uniform_vec(&mut r, 7, -2.0, 2.0)).unwrap();
        let gy = uniform_vec(&mut r, 7, -1.0, 1.0);
        let (_, surrogate) = aht_backward(&x, &p, &gy, ThresholdGrad::Surrogate);
        let (_, frozen) = aht_backward(&x, &p, &gy, ThresholdGrad::Frozen);
        for k in 0..7 {
            let alive = if x[k].abs() > p.thresholds[k] { 1.0 } else { 0.0 };
            let expected = -gy[k] * p.slopes[k] * x[k].signum() * alive;
            assert_eq!(surrogate.thresholds[k], expected + 0.0);
            assert_eq!(frozen.thresholds[k], 0.0);
        }
    }
}

#[test]
fn softmax_and_kld_gradients() {
    let mut r = rng(6);
    for _ in 0..20 {
        let z: Vec<f64> = uniform_vec(&mut r, 7, -2.0, 2.0)
            .into_iter()
            .map(|v| if v.abs() < 10.0 * EPS { v + 0.1 } else { v })
            .collect();
        let ga = uniform_vec(&mut r, 7, -1.0, 1.0);
        let act = activity_softmax(&z);
        let gz = activity_softmax_backward(&z, &act, &ga);
        let f = |v: &[f64]| dot(&activity_softmax(v), &ga);
        assert!(gradient_check(f, &z, &gz, EPS).unwrap() < TOL);

        let act = uniform_vec(&mut r, 7, 0.05, 0.95);
        let gk = kld_grad(&act, 0.05);
        let f = |v: &[f64]| kld_penalty(v, 0.05).unwrap();
        assert!(gradient_check(f, &act, &gk, 1e-5).unwrap() < TOL);
    }
}

#[test]
fn total_loss_gradients() {
    let mut r = rng(7);
    for _ in 0..20 {
        let x = uniform_vec(&mut r, 7, -1.0, 1.0);
        let y = uniform_vec(&mut r, 7, -1.0, 1.0);
        let z: Vec<f64> = uniform_vec(&mut r, 7, 0.1, 1.0);
        let e = total_loss_with_grad(&x, &y, &z, LAMBDA, OMEGA).unwrap();
        assert_eq!(e.loss, total_loss(&x, &y, &z, LAMBDA, OMEGA).unwrap());
        let f_y = |v: &[f64]| total_loss(&x, v, &z, LAMBDA, OMEGA).unwrap();
        assert!(gradient_check(f_y, &y, &e.grad_output, EPS).unwrap() < TOL);
        let f_z = |v: &[f64]| total_loss(&x, &y, v, LAMBDA, OMEGA).unwrap();
        assert!(gradient_check(f_z, &z, &e.grad_latent, EPS).unwrap() < TOL);
    }
}

#[test]
fn full_model_matches_finite_differences() {
    for seed in 0..10 {
        let (model, seg) = margin_probe(seed, EPS);
        let err = model_gradient_error(&model, &seg, EPS);
        assert!(err < TOL, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn frozen_thresholds_get_no_gradient() {
    let (model, seg) = margin_probe(11, EPS);
    let g = segment_loss_and_grad(&model, &seg, LAMBDA, OMEGA, ThresholdGrad::Frozen).unwrap();
    let mask = threshold_mask(&model);
    assert!(g.grad.iter().zip(&mask).filter(|(_, &m)| m).all(|(v, _)| *v == 0.0));
}

#[test]
fn small_step_against_gradient_lowers_loss() {
    for seed in 0..5 {
        let (mut model, seg) = margin_probe(20 + seed, EPS);
        let g = segment_loss_and_grad(&model, &seg, LAMBDA, OMEGA, ThresholdGrad::Frozen).unwrap();
        let before = segment_loss(&model, &seg, LAMBDA, OMEGA).unwrap();
        let norm: f64 = g.grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        let theta: Vec<f64> = model_to_flat(&model)
            .iter()
            .zip(&g.grad)
            .map(|(t, d)| t - 1e-6 * d / norm)
            .collect();
        model_from_flat(&mut model, &theta);
        let after = segment_loss(&model, &seg, LAMBDA, OMEGA).unwrap();
        assert!(after < before, "seed {seed}: {after} >= {before}");
    }
}

#[test]
fn margin_check_reports_the_offending_index() {
    let p = AhtParams::new(vec![0.5, 0.5], vec![1.0, 1.0]).unwrap();
    match check_aht_margin(&[1.0, 0.500_001], &p, 1e-6) {
        Err(aalw::Error::MarginViolated { index, .. }) => assert_eq!(index, 1),
        other => panic!("unexpected {other:?}"),
    }
}
