#![allow(dead_code)]

use aalw::model::{encode_trace, CodecModel};
use aalw::nn::{check_aht_margin, gradient_check, ThresholdGrad};
use aalw::train::{model_from_flat, model_to_flat, segment_loss, segment_loss_and_grad, threshold_mask};
use aalw::CodecConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LAMBDA: f64 = 0.05;
pub const OMEGA: f64 = 10.0;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// True when no thresholding input and no latent sits within `10 * eps` of a kink.
pub fn respects_margins(model: &CodecModel<f64>, seg: &[f64], eps: f64) -> bool {
    let t = encode_trace(seg, &model.encoder);
    let stages_ok = t
        .left
        .iter()
        .zip(&model.encoder.left)
        .all(|((_, pre), stage)| check_aht_margin(pre, &stage.aht, eps).is_ok());
    let right_ok = check_aht_margin(&t.right_pre, &model.encoder.right.aht, eps).is_ok();
    let latent_ok = t.latent.iter().all(|z| *z == 0.0 || z.abs() >= 10.0 * eps);
    stages_ok && right_ok && latent_ok
}

/// Randomly initialised model with thresholds spread over the typical
/// pre-activation range, plus a segment whose forward pass respects margins.
pub fn margin_probe(seed: u64, eps: f64) -> (CodecModel<f64>, Vec<f64>) {
    let mut r = rng(seed);
    for _ in 0..10_000 {
        let mut model = CodecModel::<f64>::init(CodecConfig {
            seed: r.random(),
            ..CodecConfig::default()
        })
        .unwrap();
        for a in model.encoder.aht_layers_mut() {
            for (c, b) in a.thresholds.iter_mut().zip(a.slopes.iter_mut()) {
                *c = r.random_range(0.0..0.3);
                *b = r.random_range(0.5..1.5);
            }
        }
        let seg = uniform_vec(&mut r, 7, -1.0, 1.0);
        if respects_margins(&model, &seg, eps) {
            return (model, seg);
        }
    }
    panic!("no margin-respecting probe found");
}

/// Worst relative error between the backpropagated gradient and central
/// differences, over every parameter except thresholds.
pub fn model_gradient_error(model: &CodecModel<f64>, seg: &[f64], eps: f64) -> f64 {
    let analytic = segment_loss_and_grad(model, seg, LAMBDA, OMEGA, ThresholdGrad::Surrogate)
        .unwrap()
        .grad;
    let theta = model_to_flat(model);
    let mask = threshold_mask(model);
    let free: Vec<usize> = (0..theta.len()).filter(|&i| !mask[i]).collect();
    let sub_theta: Vec<f64> = free.iter().map(|&i| theta[i]).collect();
    let sub_grad: Vec<f64> = free.iter().map(|&i| analytic[i]).collect();
    let mut probe = model.clone();
    let mut full = theta.clone();
    gradient_check(
        |p| {
            for (&i, &v) in free.iter().zip(p) {
                full[i] = v;
            }
            model_from_flat(&mut probe, &full);
            segment_loss(&probe, seg, LAMBDA, OMEGA).unwrap()
        },
        &sub_theta,
        &sub_grad,
        eps,
    )
    .unwrap()
}
