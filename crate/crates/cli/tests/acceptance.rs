//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use aalw::entropy::{pack_stream, unpack_stream, StreamHeader};
use aalw::lwt::{lwt_adjoint, lwt_forward, lwt_inverse, WaveletCoeffs};
use aalw::model::{count_parameters, dequantize_latent, encode_trace, quantize_latent, CodecModel};
use aalw::nn::{aht_backward, aht_eval, check_aht_margin, gradient_check, kld_penalty, AhtParams, ThresholdGrad};
use aalw::pipeline::evaluate_record;
use aalw::signal::{segment_record, split_record, synthesize_bearing};
use aalw::train::{model_from_flat, model_to_flat, segment_loss, segment_loss_and_grad, threshold_mask, train_model};
use aalw::{CodecConfig, SynthConfig, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(r: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| r.random_range(lo..hi)).collect()
}

fn lwt_reconstruction() -> Outcome {
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let n = r.random_range(2..=64);
        let x = uniform(&mut r, n, -1.0, 1.0);
        let back = lwt_inverse(&lwt_forward(&x).unwrap());
        worst = x.iter().zip(&back).fold(worst, |w, (a, b)| w.max((a - b).abs()));
    }
    check(worst <= 1e-12, format!("max |ILWT(LWT(x)) - x| = {worst:.3e} over 10^4 vectors (<= 1e-12)"))
}

fn affine_annihilation() -> Outcome {
    let mut r = rng(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (a, b) = (r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
        let x: Vec<f64> = (0..7).map(|i| a * i as f64 + b).collect();
        let c = lwt_forward(&x).unwrap();
        worst = c.detail().iter().fold(worst, |w, d| w.max(d.abs()));
    }
    check(worst <= 1e-14, format!("max |detail| = {worst:.3e} for 100 random (a, b) at M = 7 (<= 1e-14)"))
}

fn adjoint_identity() -> Outcome {
    let mut r = rng(3);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = r.random_range(2..=64);
        let x = uniform(&mut r, n, -1.0, 1.0);
        let g = uniform(&mut r, n, -1.0, 1.0);
        let lx = lwt_forward(&x).unwrap().to_flat();
        let lt = lwt_adjoint(&WaveletCoeffs::from_flat(&g).unwrap());
        let lhs: f64 = lx.iter().zip(&g).map(|(p, q)| p * q).sum();
        let rhs: f64 = x.iter().zip(&lt).map(|(p, q)| p * q).sum();
        worst = worst.max((lhs - rhs).abs());
    }
    check(worst <= 1e-12, format!("max |<Lx,g> - <x,L^T g>| = {worst:.3e} over 10^3 pairs (<= 1e-12)"))
}

const EPS: f64 = 1e-3;

fn margin_ok(model: &CodecModel<f64>, seg: &[f64]) -> bool {
    let t = encode_trace(seg, &model.encoder);
    t.left
        .iter()
        .zip(&model.encoder.left)
        .all(|((_, pre), s)| check_aht_margin(pre, &s.aht, EPS).is_ok())
        && check_aht_margin(&t.right_pre, &model.encoder.right.aht, EPS).is_ok()
        && t.latent.iter().all(|z| *z == 0.0 || z.abs() >= 10.0 * EPS)
}

fn gradient_checks() -> Outcome {
    let mut r = rng(4);
    let (mut worst, mut probes) = (0.0f64, 0);
    while probes < 20 {
        let mut model = CodecModel::<f64>::init(CodecConfig { seed: r.random(), ..CodecConfig::default() }).unwrap();
        for a in model.encoder.aht_layers_mut() {
            for (c, b) in a.thresholds.iter_mut().zip(a.slopes.iter_mut()) {
                *c = r.random_range(0.0..0.3);
                *b = r.random_range(0.5..1.5);
            }
        }
        let seg = uniform(&mut r, 7, -1.0, 1.0);
        if !margin_ok(&model, &seg) {
            continue;
        }
        let analytic = segment_loss_and_grad(&model, &seg, 0.05, 10.0, ThresholdGrad::Surrogate).unwrap().grad;
        let theta = model_to_flat(&model);
        let mask = threshold_mask(&model);
        let free: Vec<usize> = (0..theta.len()).filter(|&i| !mask[i]).collect();
        let sub: Vec<f64> = free.iter().map(|&i| theta[i]).collect();
        let sub_grad: Vec<f64> = free.iter().map(|&i| analytic[i]).collect();
        let (mut probe, mut full) = (model.clone(), theta.clone());
        let err = gradient_check(
            |p| {
                for (&i, &v) in free.iter().zip(p) {
                    full[i] = v;
                }
                model_from_flat(&mut probe, &full);
                segment_loss(&probe, &seg, 0.05, 10.0).unwrap()
            },
            &sub,
            &sub_grad,
            EPS,
        )
        .unwrap();
        worst = worst.max(err);
        probes += 1;
    }

    let mut surrogate_exact = true;
    for _ in 0..1000 {
        let x = uniform(&mut r, 7, -1.0, 1.0);
        let p = AhtParams::new(uniform(&mut r, 7, 0.0, 0.8), uniform(&mut r, 7, -2.0, 2.0)).unwrap();
        let gy = uniform(&mut r, 7, -1.0, 1.0);
        let (_, g) = aht_backward(&x, &p, &gy, ThresholdGrad::Surrogate);
        for k in 0..7 {
            let alive = if x[k].abs() > p.thresholds[k] { 1.0 } else { 0.0 };
            surrogate_exact &= g.thresholds[k] == -gy[k] * p.slopes[k] * x[k].signum() * alive + 0.0;
        }
    }
    check(
        worst < 1e-5 && surrogate_exact,
        format!(
            "max relative error {worst:.3e} over all non-threshold parameters at 20 probe points (< 1e-5); \
             threshold surrogate exact: {surrogate_exact}"
        ),
    )
}

fn encoder_parameter_count() -> Outcome {
    let model = CodecModel::<f64>::init(CodecConfig::default()).unwrap();
    let n = count_parameters(&model.encoder);
    check(n == 74, format!("encoder parameters at M = 7: {n} (== 74)"))
}

fn aht_piecewise_law() -> Outcome {
    let (mut points, mut bad) = (0usize, 0usize);
    for &c in &[0.0, 0.01, 0.1, 0.5, 1.0, 3.7] {
        for &beta in &[-1.5, 0.3, 1.0, 2.0] {
            let p = AhtParams::new(vec![c], vec![beta]).unwrap();
            let mut grid: Vec<f64> = (-200..=200).map(|k| c + k as f64 * 1e-3).collect();
            grid.extend((-200..=200).map(|k| -c + k as f64 * 1e-3));
            for base in [c, -c] {
                let mut up = base;
                let mut down = base;
                for _ in 0..8 {
                    grid.extend([up, down]);
                    up = up.next_up();
                    down = down.next_down();
                }
            }
            for x in grid {
                let y = aht_eval(&[x], &p).unwrap()[0];
                let expected = if x.abs() <= c { 0.0 } else { beta * x };
                points += 1;
                bad += usize::from(y != expected || !x.is_finite());
            }
        }
    }
    check(bad == 0, format!("{points} grid points straddling +-C, {bad} mismatches"))
}

fn entropy_losslessness() -> Outcome {
    let mut r = rng(7);
    let (mut failures, mut all_zero, mut single) = (0usize, 0usize, 0usize);
    for i in 0..10_000 {
        let m = 7;
        let segs = r.random_range(1..40);
        let sparsity = i as f64 / 9_999.0;
        let symbol = r.random_range(-5..=5);
        let kind = i % 10;
        let latents: Vec<Vec<i32>> = (0..segs)
            .map(|_| {
                (0..m)
                    .map(|_| match kind {
                        0 => 0,
                        1 => symbol,
                        _ if r.random_bool(sparsity) => 0,
                        2 => r.random_range(i32::MIN..=i32::MAX),
                        _ => r.random_range(-50..50),
                    })
                    .collect()
            })
            .collect();
        all_zero += usize::from(latents.iter().flatten().all(|&v| v == 0));
        single += usize::from(kind == 1 && symbol != 0);
        let count = segs * m - r.random_range(0..m);
        let header = StreamHeader::for_record(count, m, 3, 4.0).unwrap();
        let ok = pack_stream(&header, &latents)
            .and_then(|s| unpack_stream(&s.bytes))
            .map(|(h, back)| h == header && back == latents)
            .unwrap_or(false);
        failures += usize::from(!ok);
    }
    check(
        failures == 0 && all_zero > 0 && single > 0,
        format!("10^4 streams ({all_zero} all-zero, {single} single-symbol), {failures} round-trip failures"),
    )
}

fn quantizer_bound() -> Outcome {
    let (mu, alpha) = (3u8, 4.0f64);
    let bound = alpha / (2.0 * 10f64.powi(mu as i32));
    let mut r = rng(8);
    let z = uniform(&mut r, 100_000, -50.0, 50.0);
    let back: Vec<f64> = dequantize_latent(&quantize_latent(&z, mu, alpha).unwrap(), mu, alpha);
    let worst = z.iter().zip(&back).fold(0.0f64, |w, (a, b)| w.max((a - b).abs()));

    let half: Vec<f64> = (-500..500).map(|k| (k as f64 + 0.5) * alpha / 1000.0).collect();
    let back: Vec<f64> = dequantize_latent(&quantize_latent(&half, mu, alpha).unwrap(), mu, alpha);
    let attained = half.iter().zip(&back).fold(0.0f64, |w, (a, b)| w.max(((a - b).abs() - bound).abs()));
    check(
        worst <= bound && attained <= 1e-15,
        format!(
            "max error {worst:.6e} over 10^5 z (<= {bound}); half-step inputs hit the bound within {attained:.1e} (<= 1e-15)"
        ),
    )
}

fn desk_run() -> Outcome {
    let record = synthesize_bearing::<f64>(&SynthConfig::default()).map_err(|e| e.to_string())?;
    let (train, test) = split_record(&record, 0.2).map_err(|e| e.to_string())?;
    let segments: Vec<Vec<f64>> = segment_record(&train, 7).unwrap().into_iter().map(|s| s.values).collect();
    let codec = CodecConfig::default();
    let out = train_model(&segments, &codec, &TrainConfig::default()).map_err(|e| e.to_string())?;
    let trained = evaluate_record(&out.model, &test.samples).map_err(|e| e.to_string())?.report;
    let init = CodecModel::<f64>::init(out.model.config.clone()).unwrap();
    let baseline = evaluate_record(&init, &test.samples).map_err(|e| e.to_string())?.report;
    println!(
        "      trained {} epochs; untrained CR {:.2} PRD {:.2}; trained CR {:.2} PRD {:.2} QS {:.3}",
        out.log.epochs.len(),
        baseline.cr,
        baseline.prd,
        trained.cr,
        trained.prd,
        trained.qs
    );
    println!("      reference on recorded bearing data (not gated): CR 9.91 PRD 17.29 QS 0.57");
    check(
        trained.prd < baseline.prd && trained.cr >= 5.0,
        format!(
            "PRD {:.2} < untrained {:.2}, CR {:.2} >= 5 at 32 bits/sample",
            trained.prd, baseline.prd, trained.cr
        ),
    )
}

fn kld_properties() -> Outcome {
    let lambda = 0.05;
    let mut r = rng(10);
    let mut min_kld = f64::INFINITY;
    for i in 0..10_000 {
        let act = if i % 2 == 0 {
            uniform(&mut r, 7, 1e-6, 1.0 - 1e-6)
        } else {
            uniform(&mut r, 7, 0.5 * lambda, 1.5 * lambda)
        };
        min_kld = min_kld.min(kld_penalty(&act, lambda).unwrap());
    }
    let at_target = kld_penalty(&[lambda; 7], lambda).unwrap().abs();
    let uniform_act = kld_penalty(&[1.0 / 7.0; 7], lambda).unwrap();
    let a: f64 = 1.0 / 7.0;
    let scalar = 7.0 * (lambda * (lambda / a).ln() + (1.0 - lambda) * ((1.0 - lambda) / (1.0 - a)).ln());
    let frozen = 0.316_563_869_6;
    let dev = (uniform_act - scalar).abs().max((uniform_act - frozen).abs());
    println!("      uniform activity, M = 7: {uniform_act:.10} (quoted elsewhere as 0.316715, which this formula does not reproduce)");
    check(
        min_kld >= 0.0 && at_target <= 1e-12 && dev <= 1e-6,
        format!("min over 10^4 activities {min_kld:.3e} (>= 0); |KLD| at lambda {at_target:.1e} (<= 1e-12); scalar evaluation within {dev:.1e} (<= 1e-6)"),
    )
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_aalw"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("aalw {} failed: {}", args[0], String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn determinism() -> Outcome {
    let mut artefacts = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let d = dir.path();
        run_cli(d, &["synth", "--out", "rec.f32", "--duration", "4", "--seed", "3"])?;
        run_cli(
            d,
            &["train", "--input", "rec.f32", "--out-model", "m.json", "--train-fraction", "0.2", "--seed", "3"],
        )?;
        run_cli(d, &["compress", "--input", "rec.f32", "--model", "m.json", "--out", "rec.aalw"])?;
        let read = |f: &str| std::fs::read(d.join(f)).map_err(|e| e.to_string());
        artefacts.push((read("m.json")?, read("rec.aalw")?, read("m.log.csv")?));
    }
    let (a, b) = (&artefacts[0], &artefacts[1]);
    check(
        a == b,
        format!(
            "model files identical: {}, bitstreams identical: {} ({} and {} bytes)",
            a.0 == b.0,
            a.1 == b.1,
            a.0.len(),
            a.1.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("LWT perfect reconstruction", lwt_reconstruction),
        ("affine annihilation", affine_annihilation),
        ("adjoint identity", adjoint_identity),
        ("gradient checks", gradient_checks),
        ("encoder parameter count", encoder_parameter_count),
        ("AHT piecewise law", aht_piecewise_law),
        ("entropy losslessness", entropy_losslessness),
        ("quantizer bound", quantizer_bound),
        ("desk-scale end-to-end run", desk_run),
        ("KLD properties", kld_properties),
        ("train + compress determinism", determinism),
    ];
    let started = Instant::now();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {:>2}. {name}: {detail} [{:.2}s]", i + 1, t.elapsed().as_secs_f64());
    }
    println!(
        "acceptance: {} of {} criteria passed in {:.1}s",
        criteria.len() - failed,
        criteria.len(),
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
