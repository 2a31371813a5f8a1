//! Encoder and decoder networks, latent quantization, complexity counts and
//! the model file.
//!
//! Encoder (runs on the sensor):
//!
//! ```text
//! seg -> conv3 -> tanh -> LWT -> X
//! z = AHT(conv1(X)) + AHT(conv3(AHT(conv3(AHT(conv3(X))))))
//! ```
//!
//! Decoder (runs on the host):
//!
//! ```text
//! xb = ILWT(z); h = tanh(L2 tanh(L1 xb)); y = L3 [h ; xb]
//! ```

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lwt;
use crate::nn::{
    aht_backward, aht_forward, conv1d_backward, conv_forward, linear_backward, linear_forward,
    tanh_backward, AhtParams, ConvParams, LinearParams, Parameters, ThresholdGrad,
};
use crate::scalar::{all_finite, Real};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// One convolution followed by its own thresholding layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchStage<T> {
    pub conv: ConvParams<T>,
    pub aht: AhtParams<T>,
}

impl<T: Real> Parameters<T> for BranchStage<T> {
    fn num_params(&self) -> usize {
        self.conv.num_params() + self.aht.num_params()
    }

    fn write_flat(&self, out: &mut Vec<T>) {
        self.conv.write_flat(out);
        self.aht.write_flat(out);
    }

    fn read_flat(&mut self, src: &mut std::slice::Iter<'_, T>) {
        self.conv.read_flat(src);
        self.aht.read_flat(src);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams<T> {
    pub front: ConvParams<T>,
    pub left: [BranchStage<T>; 3],
    pub right: BranchStage<T>,
}

impl<T: Real> EncoderParams<T> {
    pub fn init<R: rand::Rng + ?Sized>(m: usize, rng: &mut R) -> Self {
        let front = ConvParams::init(3, rng);
        let left = std::array::from_fn(|_| BranchStage {
            conv: ConvParams::init(3, rng),
            aht: AhtParams::init(m),
        });
        let right = BranchStage {
            conv: ConvParams::init(1, rng),
            aht: AhtParams::init(m),
        };
        Self { front, left, right }
    }

    /// Identity kernels, zero biases, `C = 0`, `beta = 1`.
    pub fn identity(m: usize) -> Self {
        let stage = |k| BranchStage {
            conv: ConvParams::identity(k),
            aht: AhtParams::uniform(m, T::zero(), T::one()),
        };
        Self {
            front: ConvParams::identity(3),
            left: [stage(3), stage(3), stage(3)],
            right: stage(1),
        }
    }

    /// Segment length the thresholding layers are sized for.
    pub fn segment_len(&self) -> usize {
        self.right.aht.len()
    }

    pub fn aht_layers_mut(&mut self) -> impl Iterator<Item = &mut AhtParams<T>> {
        self.left
            .iter_mut()
            .map(|s| &mut s.aht)
            .chain(std::iter::once(&mut self.right.aht))
    }

    pub fn clamp_thresholds(&mut self) {
        for a in self.aht_layers_mut() {
            a.clamp_thresholds();
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.segment_len();
        if m < 2 {
            return Err(Error::InvalidArgument(format!("segment length must be >= 2, got {m}")));
        }
        self.front.validate()?;
        if self.front.kernel.len() != 3 || self.right.conv.kernel.len() != 1 {
            return Err(Error::InvalidArgument("encoder kernel sizes must be 3 (front, left) and 1 (right)".into()));
        }
        for s in self.left.iter().chain(std::iter::once(&self.right)) {
            s.conv.validate()?;
            s.aht.validate()?;
            if s.aht.len() != m {
                return Err(Error::DimensionMismatch { expected: m, got: s.aht.len() });
            }
        }
        if self.left.iter().any(|s| s.conv.kernel.len() != 3) {
            return Err(Error::InvalidArgument("left branch kernels must have size 3".into()));
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> EncoderParams<U> {
        let mut out = EncoderParams::<U>::identity(self.segment_len());
        let flat: Vec<U> = self.to_flat().into_iter().map(|v| U::lit(v.as_f64())).collect();
        out.read_flat(&mut flat.iter());
        out
    }
}

impl<T: Real> Parameters<T> for EncoderParams<T> {
    fn num_params(&self) -> usize {
        self.front.num_params()
            + self.left.iter().map(|s| s.num_params()).sum::<usize>()
            + self.right.num_params()
    }

    fn write_flat(&self, out: &mut Vec<T>) {
        self.front.write_flat(out);
        for s in &self.left {
            s.write_flat(out);
        }
        self.right.write_flat(out);
    }

    fn read_flat(&mut self, src: &mut std::slice::Iter<'_, T>) {
        self.front.read_flat(src);
        for s in self.left.iter_mut() {
            s.read_flat(src);
        }
        self.right.read_flat(src);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderParams<T> {
    pub l1: LinearParams<T>,
    pub l2: LinearParams<T>,
    /// Consumes `[tanh hidden ; ILWT output]`.
    pub l3: LinearParams<T>,
}

impl<T: Real> DecoderParams<T> {
    pub fn init<R: rand::Rng + ?Sized>(m: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            l1: LinearParams::init(m, hidden, rng),
            l2: LinearParams::init(hidden, hidden, rng),
            l3: LinearParams::init(hidden + m, m, rng),
        }
    }

    pub fn zeros(m: usize, hidden: usize) -> Self {
        Self {
            l1: LinearParams::zeros(m, hidden),
            l2: LinearParams::zeros(hidden, hidden),
            l3: LinearParams::zeros(hidden + m, m),
        }
    }

    pub fn segment_len(&self) -> usize {
        self.l1.in_dim
    }

    pub fn hidden(&self) -> usize {
        self.l1.out_dim
    }

    pub fn validate(&self) -> Result<()> {
        let (m, h) = (self.segment_len(), self.hidden());
        for l in [&self.l1, &self.l2, &self.l3] {
            l.validate()?;
        }
        let dims_ok = self.l2.in_dim == h
            && self.l2.out_dim == h
            && self.l3.in_dim == h + m
            && self.l3.out_dim == m;
        if !dims_ok || m < 2 {
            return Err(Error::InvalidArgument(format!(
                "inconsistent decoder dimensions (M={m}, H={h}, L2 {}x{}, L3 {}x{})",
                self.l2.out_dim, self.l2.in_dim, self.l3.out_dim, self.l3.in_dim
            )));
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> DecoderParams<U> {
        let mut out = DecoderParams::<U>::zeros(self.segment_len(), self.hidden());
        let flat: Vec<U> = self.to_flat().into_iter().map(|v| U::lit(v.as_f64())).collect();
        out.read_flat(&mut flat.iter());
        out
    }
}

impl<T: Real> Parameters<T> for DecoderParams<T> {
    fn num_params(&self) -> usize {
        self.l1.num_params() + self.l2.num_params() + self.l3.num_params()
    }

    fn write_flat(&self, out: &mut Vec<T>) {
        self.l1.write_flat(out);
        self.l2.write_flat(out);
        self.l3.write_flat(out);
    }

    fn read_flat(&mut self, src: &mut std::slice::Iter<'_, T>) {
        self.l1.read_flat(src);
        self.l2.read_flat(src);
        self.l3.read_flat(src);
    }
}

/// Intermediate values of one encoder pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct EncoderTrace<T> {
    pub input: Vec<T>,
    /// tanh output (time domain)
    pub activated: Vec<T>,
    /// LWT of `activated`, `[approx || detail]`
    pub wavelet: Vec<T>,
    /// Per left stage: (conv input, conv output)
    pub left: [(Vec<T>, Vec<T>); 3],
    pub right_pre: Vec<T>,
    pub latent: Vec<T>,
}

pub fn encode_trace<T: Real>(seg: &[T], p: &EncoderParams<T>) -> EncoderTrace<T> {
    let pre = conv_forward(seg, &p.front);
    let activated: Vec<T> = pre.iter().map(|v| v.tanh()).collect();
    let wavelet = lwt::forward_flat(&activated);

    let mut h = wavelet.clone();
    let left = std::array::from_fn(|k| {
        let stage = &p.left[k];
        let c = conv_forward(&h, &stage.conv);
        let input = std::mem::replace(&mut h, aht_forward(&c, &stage.aht));
        (input, c)
    });
    let right_pre = conv_forward(&wavelet, &p.right.conv);
    let right = aht_forward(&right_pre, &p.right.aht);
    let latent = h.iter().zip(&right).map(|(&a, &b)| a + b).collect();

    EncoderTrace {
        input: seg.to_vec(),
        activated,
        wavelet,
        left,
        right_pre,
        latent,
    }
}

/// Maps one `M`-sample segment to its `M` latent coefficients.
pub fn encode_segment<T: Real>(seg: &[T], p: &EncoderParams<T>) -> Result<Vec<T>> {
    if seg.len() != p.segment_len() {
        return Err(Error::DimensionMismatch {
            expected: p.segment_len(),
            got: seg.len(),
        });
    }
    if !all_finite(seg) {
        return Err(Error::NonFinite("segment".into()));
    }
    Ok(encode_trace(seg, p).latent)
}

/// Parameter gradient of the encoder given `dL/dz`.
pub fn encoder_backward<T: Real>(
    trace: &EncoderTrace<T>,
    p: &EncoderParams<T>,
    grad_latent: &[T],
    mode: ThresholdGrad,
) -> EncoderParams<T> {
    let m = grad_latent.len();
    let mut grad = EncoderParams::identity(m);

    // Right branch.
    let (g_right_out, g_aht) = aht_backward(&trace.right_pre, &p.right.aht, grad_latent, mode);
    let (g_wave_r, g_conv) = conv1d_backward(&trace.wavelet, &p.right.conv, &g_right_out);
    grad.right = BranchStage { conv: g_conv, aht: g_aht };

    // Left branch, last stage first.
    let mut g = grad_latent.to_vec();
    for k in (0..3).rev() {
        let (input, pre) = &trace.left[k];
        let (g_pre, g_aht) = aht_backward(pre, &p.left[k].aht, &g, mode);
        let (g_in, g_conv) = conv1d_backward(input, &p.left[k].conv, &g_pre);
        grad.left[k] = BranchStage { conv: g_conv, aht: g_aht };
        g = g_in;
    }

    let g_wave: Vec<T> = g.iter().zip(&g_wave_r).map(|(&a, &b)| a + b).collect();
    let g_act = lwt::adjoint_flat(&g_wave);
    let g_pre = tanh_backward(&trace.activated, &g_act);
    let (_, g_front) = conv1d_backward(&trace.input, &p.front, &g_pre);
    grad.front = g_front;
    grad
}

#[derive(Debug, Clone)]
pub struct DecoderTrace<T> {
    pub restored: Vec<T>,
    pub h1: Vec<T>,
    pub h2: Vec<T>,
    pub output: Vec<T>,
}

pub fn decode_trace<T: Real>(latent: &[T], p: &DecoderParams<T>) -> DecoderTrace<T> {
    let restored = lwt::inverse_flat(latent);
    let h1: Vec<T> = linear_forward(&restored, &p.l1).into_iter().map(|v| v.tanh()).collect();
    let h2: Vec<T> = linear_forward(&h1, &p.l2).into_iter().map(|v| v.tanh()).collect();
    let mut joined = h2.clone();
    joined.extend_from_slice(&restored);
    let output = linear_forward(&joined, &p.l3);
    DecoderTrace {
        restored,
        h1,
        h2,
        output,
    }
}

/// Reconstructs one segment from (dequantized) latents.
pub fn decode_latent<T: Real>(latent: &[T], p: &DecoderParams<T>) -> Result<Vec<T>> {
    if latent.len() != p.segment_len() {
        return Err(Error::DimensionMismatch {
            expected: p.segment_len(),
            got: latent.len(),
        });
    }
    if !all_finite(latent) {
        return Err(Error::NonFinite("latent".into()));
    }
    Ok(decode_trace(latent, p).output)
}

/// Returns `(dL/dlatent, dL/dparams)` given `dL/dy`.
pub fn decoder_backward<T: Real>(
    trace: &DecoderTrace<T>,
    p: &DecoderParams<T>,
    grad_output: &[T],
) -> (Vec<T>, DecoderParams<T>) {
    let h = p.hidden();
    let mut joined = trace.h2.clone();
    joined.extend_from_slice(&trace.restored);
    let (g_joined, g_l3) = linear_backward(&joined, &p.l3, grad_output);
    let g_h2 = tanh_backward(&trace.h2, &g_joined[..h]);
    let (g_h1, g_l2) = linear_backward(&trace.h1, &p.l2, &g_h2);
    let g_p1 = tanh_backward(&trace.h1, &g_h1);
    let (g_rest, g_l1) = linear_backward(&trace.restored, &p.l1, &g_p1);
    let g_restored: Vec<T> = g_rest.iter().zip(&g_joined[h..]).map(|(&a, &b)| a + b).collect();
    let g_latent = lwt::inverse_adjoint_flat(&g_restored);
    (
        g_latent,
        DecoderParams {
            l1: g_l1,
            l2: g_l2,
            l3: g_l3,
        },
    )
}

/// Hyper-parameters shared by training, compression and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    /// Segment length `M`.
    pub segment_len: usize,
    /// Decoder hidden width `H`.
    pub hidden: usize,
    /// Decimal scale exponent of the quantizer.
    pub mu: u8,
    /// Quantizer divisor.
    pub alpha: f64,
    /// Sparsity target of the KLD penalty.
    pub lambda: f64,
    /// Weight of the KLD penalty.
    pub omega: f64,
    /// Nonzero-fraction stopping threshold.
    pub phi: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Bits per original sample, for compression-ratio accounting.
    pub bits_per_sample: u32,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            segment_len: 7,
            hidden: 16,
            mu: 3,
            alpha: 4.0,
            lambda: 0.05,
            omega: 10.0,
            phi: 0.6,
            learning_rate: 0.001,
            batch_size: 30,
            seed: 0,
            bits_per_sample: 32,
        }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(2..=255).contains(&self.segment_len) {
            return bad(format!("segment length must lie in 2..=255, got {}", self.segment_len));
        }
        if self.hidden == 0 {
            return bad("hidden width must be positive".into());
        }
        if self.mu > 9 {
            return bad(format!("mu must be <= 9, got {}", self.mu));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) || (self.alpha as f32) <= 0.0 {
            return bad(format!("alpha must be positive, got {}", self.alpha));
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
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be >= 0, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if self.bits_per_sample == 0 {
            return bad("bits per sample must be positive".into());
        }
        Ok(())
    }
}

/// A complete codec: configuration plus encoder and decoder weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecModel<T> {
    pub config: CodecConfig,
    pub encoder: EncoderParams<T>,
    pub decoder: DecoderParams<T>,
}

impl<T: Real> CodecModel<T> {
    /// Randomly initialised model, seeded from `config.seed`.
    pub fn init(config: CodecConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let encoder = EncoderParams::init(config.segment_len, &mut rng);
        let decoder = DecoderParams::init(config.segment_len, config.hidden, &mut rng);
        Ok(Self {
            config,
            encoder,
            decoder,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.encoder.validate()?;
        self.decoder.validate()?;
        let m = self.config.segment_len;
        if self.encoder.segment_len() != m || self.decoder.segment_len() != m {
            return Err(Error::Inconsistent("model parts disagree on segment length".into()));
        }
        if self.decoder.hidden() != self.config.hidden {
            return Err(Error::Inconsistent("decoder width disagrees with config".into()));
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> CodecModel<U> {
        CodecModel {
            config: self.config.clone(),
            encoder: self.encoder.cast(),
            decoder: self.decoder.cast(),
        }
    }
}

/// Quantize `z` as `round(10^mu * z / alpha)`, ties away from zero.
pub fn quantize_latent<T: Real>(z: &[T], mu: u8, alpha: f64) -> Result<Vec<i32>> {
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    let scale = 10f64.powi(mu as i32);
    z.iter()
        .map(|&v| {
            let q = (scale * v.as_f64() / alpha).round();
            if !q.is_finite() {
                return Err(Error::NonFinite("latent".into()));
            }
            if q.abs() > i32::MAX as f64 {
                return Err(Error::QuantizeOverflow(q));
            }
            Ok(q as i32)
        })
        .collect()
}

/// Inverse of [`quantize_latent`]: `q * alpha / 10^mu`.
pub fn dequantize_latent<T: Real>(q: &[i32], mu: u8, alpha: f64) -> Vec<T> {
    let scale = 10f64.powi(mu as i32);
    q.iter().map(|&v| T::lit(v as f64 * alpha / scale)).collect()
}

/// Trainable scalar count of any parameter set.
pub fn count_parameters<T: Real, P: Parameters<T>>(p: &P) -> usize {
    p.num_params()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacConvention {
    /// Convolution tap multiplies only.
    ConvsOnly,
    /// Adds the lifting constants and the thresholding slopes.
    AllMultiplies,
}

impl FromStr for MacConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "convs-only" => Ok(Self::ConvsOnly),
            "all-multiplies" => Ok(Self::AllMultiplies),
            other => Err(Error::InvalidArgument(format!("unknown MAC convention '{other}'"))),
        }
    }
}

impl fmt::Display for MacConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ConvsOnly => "convs-only",
            Self::AllMultiplies => "all-multiplies",
        })
    }
}

/// Multiply-accumulate count of the encoder over `n_segments` segments.
pub fn count_macs<T: Real>(p: &EncoderParams<T>, n_segments: usize, convention: MacConvention) -> Result<u64> {
    if n_segments == 0 {
        return Err(Error::InvalidArgument("segment count must be >= 1".into()));
    }
    let m = p.segment_len();
    let convs = std::iter::once(&p.front)
        .chain(p.left.iter().map(|s| &s.conv))
        .chain(std::iter::once(&p.right.conv));
    let mut per_segment: usize = convs.map(|c| m * c.kernel.len()).sum();
    if convention == MacConvention::AllMultiplies {
        // Each lifting step scales two neighbours; one slope multiply per AHT output.
        per_segment += 2 * m + 4 * m;
    }
    Ok(per_segment as u64 * n_segments as u64)
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format_version: u32,
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "H")]
    h: usize,
    config: CodecConfig,
    encoder: EncoderParams<f64>,
    decoder: DecoderParams<f64>,
}

const CRC_PREFIX: &str = "crc32 ";

/// Serializes a model as JSON followed by a `crc32 <hex>` trailer line.
pub fn model_to_string<T: Real>(model: &CodecModel<T>) -> Result<String> {
    model.validate()?;
    let doc = ModelDocument {
        format_version: MODEL_FORMAT_VERSION,
        m: model.config.segment_len,
        h: model.config.hidden,
        config: model.config.clone(),
        encoder: model.encoder.cast(),
        decoder: model.decoder.cast(),
    };
    let mut body = serde_json::to_string_pretty(&doc).map_err(|e| Error::ModelParse(e.to_string()))?;
    body.push('\n');
    let crc = crc32fast::hash(body.as_bytes());
    body.push_str(&format!("{CRC_PREFIX}{crc:08x}\n"));
    Ok(body)
}

pub fn model_from_str<T: Real>(text: &str) -> Result<CodecModel<T>> {
    let trimmed = text.strip_suffix('\n').unwrap_or(text);
    let split = trimmed
        .rfind('\n')
        .ok_or_else(|| Error::Checksum("missing checksum trailer".into()))?;
    let (body, trailer) = (&text[..split + 1], &trimmed[split + 1..]);
    let stored = trailer
        .strip_prefix(CRC_PREFIX)
        .and_then(|h| u32::from_str_radix(h.trim(), 16).ok())
        .ok_or_else(|| Error::Checksum("missing checksum trailer".into()))?;
    let computed = crc32fast::hash(body.as_bytes());
    if stored != computed {
        return Err(Error::Checksum(format!("stored {stored:08x}, computed {computed:08x}")));
    }

    let value: serde_json::Value = serde_json::from_str(body).map_err(|e| Error::ModelParse(e.to_string()))?;
    let version = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::ModelParse("missing format_version".into()))?;
    if version != MODEL_FORMAT_VERSION as u64 {
        return Err(Error::BadVersion(version as u32));
    }
    let doc: ModelDocument = serde_json::from_value(value).map_err(|e| Error::ModelParse(e.to_string()))?;
    if doc.m != doc.config.segment_len || doc.h != doc.config.hidden {
        return Err(Error::Inconsistent("header dimensions disagree with config".into()));
    }
    let model = CodecModel {
        config: doc.config,
        encoder: doc.encoder.cast(),
        decoder: doc.decoder.cast(),
    };
    model.validate()?;
    Ok(model)
}

pub fn save_model<T: Real>(model: &CodecModel<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model_to_string(model)?)?;
    Ok(())
}

pub fn load_model<T: Real>(path: impl AsRef<Path>) -> Result<CodecModel<T>> {
    let text = fs::read_to_string(path)?;
    model_from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lwt::lwt_forward;

    fn cfg() -> CodecConfig {
        CodecConfig::default()
    }

    #[test]
    fn encoder_has_74_parameters() {
        let m = CodecModel::<f64>::init(cfg()).unwrap();
        assert_eq!(count_parameters(&m.encoder), 74);
        assert_eq!(count_parameters(&ConvParams::<f64>::zeros(3)), 4);
        // (7*16 + 16) + (16*16 + 16) + (23*7 + 7)
        assert_eq!(count_parameters(&m.decoder), 568);
    }

    #[test]
    fn mac_counts() {
        let e = EncoderParams::<f64>::identity(7);
        assert_eq!(count_macs(&e, 1, MacConvention::ConvsOnly).unwrap(), 91);
        assert_eq!(count_macs(&e, 1, MacConvention::AllMultiplies).unwrap(), 133);
        assert_eq!(count_macs(&e, 10, MacConvention::ConvsOnly).unwrap(), 910);
        assert!(count_macs(&e, 0, MacConvention::ConvsOnly).is_err());
        assert!("fancy".parse::<MacConvention>().is_err());
    }

    #[test]
    fn zero_segment_encodes_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let e = EncoderParams::<f64>::init(7, &mut rng);
        assert_eq!(encode_segment(&[0.0; 7], &e).unwrap(), vec![0.0; 7]);
    }

    #[test]
    fn identity_encoder_doubles_the_wavelet() {
        let e = EncoderParams::<f64>::identity(7);
        let seg = [0.3, -0.2, 0.9, 1.4, -1.1, 0.05, 0.6];
        let z = encode_segment(&seg, &e).unwrap();
        let t: Vec<f64> = seg.iter().map(|v: &f64| v.tanh()).collect();
        let x = lwt_forward(&t).unwrap().to_flat();
        for (a, b) in z.iter().zip(&x) {
            assert!((a - 2.0 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn huge_thresholds_silence_the_encoder() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut e = EncoderParams::<f64>::init(7, &mut rng);
        for a in e.aht_layers_mut() {
            a.thresholds = vec![1e6; 7];
        }
        let z = encode_segment(&[0.5, -3.0, 2.0, 1.0, 0.1, -0.7, 4.0], &e).unwrap();
        assert_eq!(z, vec![0.0; 7]);
    }

    #[test]
    fn branch_block_is_homogeneous_without_thresholds() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut e = EncoderParams::<f64>::init(7, &mut rng);
        for a in e.aht_layers_mut() {
            a.thresholds = vec![0.0; 7];
        }
        let x = [0.4, -0.1, 0.3, 0.8, -0.6, 0.2, 0.1];
        let trace = |x: &[f64]| {
            let mut h = x.to_vec();
            for s in &e.left {
                h = aht_forward(&conv_forward(&h, &s.conv), &s.aht);
            }
            let r = aht_forward(&conv_forward(x, &e.right.conv), &e.right.aht);
            h.iter().zip(&r).map(|(a, b)| a + b).collect::<Vec<_>>()
        };
        let z1 = trace(&x);
        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let z2 = trace(&x2);
        for (a, b) in z1.iter().zip(&z2) {
            assert!((2.0 * a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn decoder_examples() {
        let mut d = DecoderParams::<f64>::zeros(7, 16);
        d.l3.bias = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        assert_eq!(decode_latent(&[0.3; 7], &d).unwrap(), d.l3.bias);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = DecoderParams::<f64>::init(7, 16, &mut rng);
        assert_eq!(decode_latent(&[0.0; 7], &d).unwrap(), vec![0.0; 7]);

        let mut d = DecoderParams::<f64>::zeros(7, 16);
        for k in 0..7 {
            *d.l3.weight_mut(k, 16 + k) = 1.0;
        }
        let latent = [0.75, -0.125, 0.0, 0.0, -0.5, 0.0, 0.0];
        let y = decode_latent(&latent, &d).unwrap();
        assert_eq!(y, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(decode_latent(&latent[..6], &d).is_err());
    }

    #[test]
    fn quantizer_examples() {
        assert_eq!(quantize_latent(&[0.0f64], 3, 4.0).unwrap(), vec![0]);
        assert_eq!(quantize_latent(&[0.010f64], 3, 4.0).unwrap(), vec![3]);
        assert_eq!(quantize_latent(&[-0.0113f64], 3, 4.0).unwrap(), vec![-3]);
        assert_eq!(dequantize_latent::<f64>(&[3], 3, 4.0), vec![0.012]);
        assert_eq!(dequantize_latent::<f64>(&[0], 3, 4.0), vec![0.0]);
        assert!(matches!(
            quantize_latent(&[1e7f64], 3, 4.0),
            Err(Error::QuantizeOverflow(_))
        ));
        assert!(quantize_latent(&[1.0f64], 3, 0.0).is_err());
    }

    #[test]
    fn model_file_round_trip_and_corruption() {
        let mut c = cfg();
        c.seed = 11;
        let m = CodecModel::<f64>::init(c).unwrap();
        let text = model_to_string(&m).unwrap();
        let back: CodecModel<f64> = model_from_str(&text).unwrap();
        assert_eq!(back, m);

        let truncated = &text[..text.len() / 2];
        assert!(matches!(model_from_str::<f64>(truncated), Err(Error::Checksum(_))));

        let body = text.replace("\"format_version\": 1", "\"format_version\": 7");
        let cut = body.trim_end().rfind('\n').unwrap() + 1;
        let mut forged = body[..cut].to_string();
        forged.push_str(&format!("crc32 {:08x}\n", crc32fast::hash(forged.as_bytes())));
        assert!(matches!(model_from_str::<f64>(&forged), Err(Error::BadVersion(7))));
    }

    #[test]
    fn single_precision_model_round_trips() {
        let m = CodecModel::<f32>::init(cfg()).unwrap();
        let back: CodecModel<f32> = model_from_str(&model_to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
