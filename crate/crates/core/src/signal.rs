//! Sensor recordings: loading, synthesis, segmentation and train/test split.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{all_finite, Real};

/// A one-dimensional recording.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord<T> {
    pub samples: Vec<T>,
    pub sample_rate_hz: f64,
    pub label: String,
}

impl<T: Real> SampleRecord<T> {
    pub fn new(samples: Vec<T>, sample_rate_hz: f64, label: impl Into<String>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::ZeroSamples);
        }
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if !all_finite(&samples) {
            return Err(Error::NonFinite("record samples".into()));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            label: label.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Fixed-length window of `M` samples cut from a record.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment<T> {
    pub values: Vec<T>,
    pub origin_index: usize,
}

/// On-disk sample encodings accepted by [`load_samples`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleFormat {
    RawF32Le,
    RawF64Le,
    CsvSingleColumn,
}

impl FromStr for SampleFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw-f32-le" => Ok(Self::RawF32Le),
            "raw-f64-le" => Ok(Self::RawF64Le),
            "csv-single-column" | "csv" => Ok(Self::CsvSingleColumn),
            other => Err(Error::InvalidArgument(format!("unknown sample format '{other}'"))),
        }
    }
}

impl fmt::Display for SampleFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::RawF32Le => "raw-f32-le",
            Self::RawF64Le => "raw-f64-le",
            Self::CsvSingleColumn => "csv-single-column",
        })
    }
}

/// Decodes samples from bytes already read into memory.
pub fn parse_samples<T: Real>(bytes: &[u8], format: SampleFormat) -> Result<Vec<T>> {
    let values: Vec<f64> = match format {
        SampleFormat::RawF32Le => {
            if !bytes.len().is_multiple_of(4) {
                return Err(Error::Truncated(format!(
                    "{} bytes is not a whole number of f32 samples",
                    bytes.len()
                )));
            }
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect()
        }
        SampleFormat::RawF64Le => {
            if !bytes.len().is_multiple_of(8) {
                return Err(Error::Truncated(format!(
                    "{} bytes is not a whole number of f64 samples",
                    bytes.len()
                )));
            }
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect()
        }
        SampleFormat::CsvSingleColumn => {
            let text = std::str::from_utf8(bytes).map_err(|e| Error::Csv {
                line: 0,
                reason: e.to_string(),
            })?;
            let mut out = Vec::new();
            for (i, line) in text.lines().enumerate() {
                let field = line.trim();
                if field.is_empty() {
                    continue;
                }
                let v: f64 = field.parse().map_err(|_| Error::Csv {
                    line: i + 1,
                    reason: format!("'{field}' is not a number"),
                })?;
                out.push(v);
            }
            out
        }
    };
    if values.is_empty() {
        return Err(Error::ZeroSamples);
    }
    values
        .into_iter()
        .map(|v| {
            if v.is_finite() {
                Ok(T::lit(v))
            } else {
                Err(Error::NonFinite("sample value".into()))
            }
        })
        .collect()
}

/// Reads a whole recording from `path`.
pub fn load_samples<T: Real>(
    path: impl AsRef<Path>,
    format: SampleFormat,
    sample_rate_hz: f64,
) -> Result<SampleRecord<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let samples = parse_samples(&bytes, format)?;
    SampleRecord::new(samples, sample_rate_hz, path.display().to_string())
}

/// Writes samples as little-endian `f32`.
pub fn write_raw_f32<T: Real>(path: impl AsRef<Path>, samples: &[T]) -> Result<()> {
    let mut buf = Vec::with_capacity(samples.len() * 4);
    for &s in samples {
        buf.extend_from_slice(&(s.as_f64() as f32).to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

/// Cuts a record into non-overlapping windows of `m` samples. The last window
/// is zero-padded.
pub fn segment_record<T: Real>(record: &SampleRecord<T>, m: usize) -> Result<Vec<Segment<T>>> {
    segment_samples(&record.samples, m)
}

pub fn segment_samples<T: Real>(samples: &[T], m: usize) -> Result<Vec<Segment<T>>> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!("segment length must be >= 2, got {m}")));
    }
    Ok(samples
        .chunks(m)
        .enumerate()
        .map(|(k, chunk)| {
            let mut values = chunk.to_vec();
            values.resize(m, T::zero());
            Segment {
                values,
                origin_index: k * m,
            }
        })
        .collect())
}

/// Number of zeros appended to the final window.
pub fn pad_length(sample_count: usize, m: usize) -> usize {
    sample_count.div_ceil(m) * m - sample_count
}

/// Concatenates segment values and trims to `sample_count`.
pub fn concat_segments<T: Real>(segments: &[Vec<T>], sample_count: usize) -> Vec<T> {
    let mut out: Vec<T> = segments.iter().flatten().copied().collect();
    out.truncate(sample_count);
    out
}

/// Splits off the leading `floor(train_fraction * len)` samples.
pub fn split_record<T: Real>(
    record: &SampleRecord<T>,
    train_fraction: f64,
) -> Result<(SampleRecord<T>, SampleRecord<T>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let cut = (train_fraction * record.len() as f64).floor() as usize;
    let (head, tail) = record.samples.split_at(cut);
    let part = |s: &[T], tag: &str| SampleRecord {
        samples: s.to_vec(),
        sample_rate_hz: record.sample_rate_hz,
        label: format!("{}#{tag}", record.label),
    };
    Ok((part(head, "train"), part(tail, "test")))
}

/// Parameters of the synthetic bearing-fault vibration generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    /// Impulse repetition rate (fault characteristic frequency).
    pub fault_freq_hz: f64,
    pub resonance_hz: f64,
    /// Envelope decay rate in 1/s.
    pub ring_decay: f64,
    pub noise_std: f64,
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            duration_s: 10.0,
            sample_rate_hz: 8000.0,
            fault_freq_hz: 97.0,
            resonance_hz: 1800.0,
            ring_decay: 600.0,
            noise_std: 0.02,
            amplitude: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("duration_s", self.duration_s),
            ("sample_rate_hz", self.sample_rate_hz),
            ("fault_freq_hz", self.fault_freq_hz),
            ("resonance_hz", self.resonance_hz),
            ("ring_decay", self.ring_decay),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise_std must be >= 0, got {}",
                self.noise_std
            )));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::InvalidArgument("amplitude must be finite".into()));
        }
        if (self.duration_s * self.sample_rate_hz).round() < 1.0 {
            return Err(Error::ZeroSamples);
        }
        Ok(())
    }
}

/// Periodic impulses at `fault_freq_hz`, each ringing as
/// `amplitude * exp(-ring_decay * tau) * cos(2 pi resonance_hz tau)`, plus white
/// Gaussian noise. Deterministic for a fixed seed.
pub fn synthesize_bearing<T: Real>(cfg: &SynthConfig) -> Result<SampleRecord<T>> {
    cfg.validate()?;
    let n = (cfg.duration_s * cfg.sample_rate_hz).round() as usize;
    let mut signal = vec![0.0f64; n];

    if cfg.amplitude != 0.0 {
        let dt = 1.0 / cfg.sample_rate_hz;
        // Beyond this lag the envelope is below f64 resolution of the peak.
        let tail_s = 40.0 / cfg.ring_decay;
        let period = 1.0 / cfg.fault_freq_hz;
        let mut k = 0usize;
        loop {
            let onset = k as f64 * period;
            let first = (onset / dt).ceil() as usize;
            if first >= n {
                break;
            }
            for (i, s) in signal.iter_mut().enumerate().skip(first) {
                let tau = i as f64 * dt - onset;
                if tau > tail_s {
                    break;
                }
                *s += cfg.amplitude
                    * (-cfg.ring_decay * tau).exp()
                    * (std::f64::consts::TAU * cfg.resonance_hz * tau).cos();
            }
            k += 1;
        }
    }

    if cfg.noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let normal = Normal::new(0.0, cfg.noise_std)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for s in signal.iter_mut() {
            *s += normal.sample(&mut rng);
        }
    }

    SampleRecord::new(
        signal.into_iter().map(T::lit).collect(),
        cfg.sample_rate_hz,
        format!("synthetic-bearing-seed{}", cfg.seed),
    )
}
