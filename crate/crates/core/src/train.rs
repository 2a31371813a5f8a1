//! Offline end-to-end training with the sparsity-penalised loss.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    decode_trace, decoder_backward, encode_trace, encoder_backward, CodecConfig, CodecModel,
};
use crate::nn::{total_loss_with_grad, Parameters, ThresholdGrad};
use crate::scalar::Real;

/// Which side of `phi` ends training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopPolicy {
    /// Stop once the nonzero fraction has been `<= phi` for a full epoch.
    #[default]
    BelowSustained,
    /// Stop as soon as the nonzero fraction exceeds `phi`.
    AboveLiteral,
}

impl FromStr for StopPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "below-sustained" => Ok(Self::BelowSustained),
            "above-literal" => Ok(Self::AboveLiteral),
            other => Err(Error::InvalidArgument(format!("unknown stop policy '{other}'"))),
        }
    }
}

impl fmt::Display for StopPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::BelowSustained => "below-sustained",
            Self::AboveLiteral => "above-literal",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs_max: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub omega: f64,
    pub phi: f64,
    pub seed: u64,
    pub stop_policy: StopPolicy,
    /// Leading training segments whose latents drive the stopping rule.
    pub monitor_batch: usize,
    pub threshold_grad: ThresholdGrad,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs_max: 200,
            batch_size: 30,
            learning_rate: 0.001,
            lambda: 0.05,
            omega: 10.0,
            phi: 0.6,
            seed: 0,
            stop_policy: StopPolicy::BelowSustained,
            monitor_batch: 256,
            threshold_grad: ThresholdGrad::Surrogate,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.epochs_max == 0 || self.batch_size == 0 || self.monitor_batch == 0 {
            return bad("epochs, batch size and monitor batch must be positive".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be >= 0, got {}", self.learning_rate));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return bad(format!("lambda must lie in (0, 1), got {}", self.lambda));
        }
        if !(self.phi > 0.0 && self.phi <= 1.0) {
            return bad(format!("phi must lie in (0, 1], got {}", self.phi));
        }
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return bad(format!("omega must be >= 0, got {}", self.omega));
        }
        Ok(())
    }

    /// Copies the training-related values into a codec configuration.
    pub fn apply_to(&self, codec: &mut CodecConfig) {
        codec.batch_size = self.batch_size;
        codec.learning_rate = self.learning_rate;
        codec.lambda = self.lambda;
        codec.omega = self.omega;
        codec.phi = self.phi;
        codec.seed = self.seed;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub mse: f64,
    pub kld: f64,
    pub nonzero_fraction: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn nonzero_fractions(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.nonzero_fraction).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        // Timings are left out so identical runs give identical files.
        writeln!(w, "epoch,loss,mse,kld,nonzero_fraction")?;
        for e in &self.epochs {
            writeln!(w, "{},{},{},{},{}", e.epoch, e.loss, e.mse, e.kld, e.nonzero_fraction)?;
        }
        Ok(())
    }
}

/// Fraction of latent entries that are not exactly zero.
pub fn sparsity_fraction<T: Real>(latents: &[Vec<T>]) -> Result<f64> {
    let total: usize = latents.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(Error::InvalidArgument("empty latent batch".into()));
    }
    let nonzero = latents.iter().flatten().filter(|v| **v != T::zero()).count();
    Ok(nonzero as f64 / total as f64)
}

/// Decides whether training should end given the monitored nonzero fractions
/// so far (one per completed epoch).
pub fn stop_check(fractions: &[f64], phi: f64, policy: StopPolicy) -> bool {
    match (fractions.last(), policy) {
        (None, _) => false,
        (Some(&f), StopPolicy::BelowSustained) => f <= phi,
        (Some(&f), StopPolicy::AboveLiteral) => f > phi,
    }
}

/// Loss terms of one segment plus the gradient over all model parameters,
/// flattened as `[encoder || decoder]`.
#[derive(Debug, Clone)]
pub struct SegmentGrad<T> {
    pub loss: T,
    pub mse: T,
    pub kld: T,
    pub latent: Vec<T>,
    pub grad: Vec<T>,
}

pub fn segment_loss_and_grad<T: Real>(
    model: &CodecModel<T>,
    seg: &[T],
    lambda: T,
    omega: T,
    mode: ThresholdGrad,
) -> Result<SegmentGrad<T>> {
    let enc = encode_trace(seg, &model.encoder);
    let dec = decode_trace(&enc.latent, &model.decoder);
    let eval = total_loss_with_grad(seg, &dec.output, &enc.latent, lambda, omega)?;
    let (g_latent_dec, g_decoder) = decoder_backward(&dec, &model.decoder, &eval.grad_output);
    let g_latent: Vec<T> = g_latent_dec
        .iter()
        .zip(&eval.grad_latent)
        .map(|(&a, &b)| a + b)
        .collect();
    let g_encoder = encoder_backward(&enc, &model.encoder, &g_latent, mode);
    let mut grad = g_encoder.to_flat();
    g_decoder.write_flat(&mut grad);
    Ok(SegmentGrad {
        loss: eval.loss,
        mse: eval.mse,
        kld: eval.kld,
        latent: enc.latent,
        grad,
    })
}

/// Per-segment loss without gradients.
pub fn segment_loss<T: Real>(model: &CodecModel<T>, seg: &[T], lambda: T, omega: T) -> Result<T> {
    let enc = encode_trace(seg, &model.encoder);
    let dec = decode_trace(&enc.latent, &model.decoder);
    crate::nn::total_loss(seg, &dec.output, &enc.latent, lambda, omega)
}

pub fn model_to_flat<T: Real>(model: &CodecModel<T>) -> Vec<T> {
    let mut v = model.encoder.to_flat();
    model.decoder.write_flat(&mut v);
    v
}

pub fn model_from_flat<T: Real>(model: &mut CodecModel<T>, flat: &[T]) {
    let mut it = flat.iter();
    model.encoder.read_flat(&mut it);
    model.decoder.read_flat(&mut it);
}

/// Marks the positions of thresholding thresholds in [`model_to_flat`] order.
pub fn threshold_mask<T: Real>(model: &CodecModel<T>) -> Vec<bool> {
    let mut probe = model.clone();
    let zeros = vec![T::zero(); model_to_flat(model).len()];
    model_from_flat(&mut probe, &zeros);
    for a in probe.encoder.aht_layers_mut() {
        a.thresholds.iter_mut().for_each(|c| *c = T::one());
    }
    model_to_flat(&probe).into_iter().map(|v| v == T::one()).collect()
}

struct Adam<T> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Real> Adam<T> {
    fn new(n: usize, lr: f64) -> Self {
        Self {
            lr: T::lit(lr),
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [T], grad: &[T]) {
        self.t += 1;
        let one = T::one();
        let bc1 = one - self.beta1.powi(self.t);
        let bc2 = one - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (one - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (one - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] = params[i] - self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: CodecModel<T>,
    pub log: TrainLog,
    pub stopped_early: bool,
}

/// Initialises a model from `codec` (seeded by `cfg.seed`) and trains it.
pub fn train_model<T: Real>(
    segments: &[Vec<T>],
    codec: &CodecConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    let mut codec = codec.clone();
    cfg.apply_to(&mut codec);
    let model = CodecModel::init(codec)?;
    train_existing(model, segments, cfg)
}

/// Continues training an existing model.
pub fn train_existing<T: Real>(
    mut model: CodecModel<T>,
    segments: &[Vec<T>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    model.validate()?;
    if segments.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let m = model.config.segment_len;
    if let Some(bad) = segments.iter().find(|s| s.len() != m) {
        return Err(Error::DimensionMismatch { expected: m, got: bad.len() });
    }
    cfg.apply_to(&mut model.config);

    let lambda = T::lit(cfg.lambda);
    let omega = T::lit(cfg.omega);
    let mut params = model_to_flat(&model);
    let mut adam = Adam::new(params.len(), cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5eed_5eed_5eed);
    let mut order: Vec<usize> = (0..segments.len()).collect();
    let monitor = &segments[..cfg.monitor_batch.min(segments.len())];
    let mut log = TrainLog::default();
    let mut stopped_early = false;

    for epoch in 0..cfg.epochs_max {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let (mut sum_loss, mut sum_mse, mut sum_kld) = (0.0, 0.0, 0.0);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut grad = vec![T::zero(); params.len()];
            for &i in batch {
                let g = segment_loss_and_grad(&model, &segments[i], lambda, omega, cfg.threshold_grad)?;
                if !g.loss.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, batch: b });
                }
                sum_loss += g.loss.as_f64();
                sum_mse += g.mse.as_f64();
                sum_kld += g.kld.as_f64();
                for (acc, v) in grad.iter_mut().zip(&g.grad) {
                    *acc = *acc + *v;
                }
            }
            let scale = T::one() / T::from_usize_lossy(batch.len());
            for v in grad.iter_mut() {
                *v = *v * scale;
            }
            adam.step(&mut params, &grad);
            model_from_flat(&mut model, &params);
            model.encoder.clamp_thresholds();
            params = model_to_flat(&model);
        }

        let latents: Vec<Vec<T>> = monitor
            .iter()
            .map(|s| encode_trace(s, &model.encoder).latent)
            .collect();
        let n = segments.len() as f64;
        log.epochs.push(EpochRecord {
            epoch,
            loss: sum_loss / n,
            mse: sum_mse / n,
            kld: sum_kld / n,
            nonzero_fraction: sparsity_fraction(&latents)?,
            seconds: started.elapsed().as_secs_f64(),
        });
        if stop_check(&log.nonzero_fractions(), cfg.phi, cfg.stop_policy) {
            stopped_early = epoch + 1 < cfg.epochs_max;
            break;
        }
    }

    Ok(TrainOutcome {
        model,
        log,
        stopped_early,
    })
}
