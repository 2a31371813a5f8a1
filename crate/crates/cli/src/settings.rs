//! Layered training and codec settings: defaults, then a TOML file, then
//! `--set key=value` overrides, then dedicated flags.

use std::path::Path;

use aalw::nn::ThresholdGrad;
use aalw::{CodecConfig, StopPolicy, TrainConfig};
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub lambda: f64,
    pub omega: f64,
    pub phi: f64,
    pub stop_policy: StopPolicy,
    pub seed: u64,
    pub monitor_batch: usize,
    pub threshold_grad: ThresholdGrad,
    pub segment_len: usize,
    pub hidden: usize,
    pub mu: u8,
    pub alpha: f64,
    pub bits_per_sample: u32,
    /// Leading fraction of the input used for training; the whole input when absent.
    pub train_fraction: Option<f64>,
}

impl Default for Settings {
    fn default() -> Self {
        let t = TrainConfig::default();
        let c = CodecConfig::default();
        Self {
            epochs: t.epochs_max,
            batch: t.batch_size,
            lr: t.learning_rate,
            lambda: t.lambda,
            omega: t.omega,
            phi: t.phi,
            stop_policy: t.stop_policy,
            seed: t.seed,
            monitor_batch: t.monitor_batch,
            threshold_grad: t.threshold_grad,
            segment_len: c.segment_len,
            hidden: c.hidden,
            mu: c.mu,
            alpha: c.alpha,
            bits_per_sample: c.bits_per_sample,
            train_fraction: None,
        }
    }
}

impl Settings {
    /// Defaults overlaid with an optional config file and `key=value` overrides.
    pub fn layered(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = toml::Table::try_from(Self::default())?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))?;
            let from_file: toml::Table =
                text.parse().with_context(|| format!("invalid config {}", path.display()))?;
            table.extend(from_file);
        }
        for kv in overrides {
            let (key, value) = parse_override(kv)?;
            table.insert(key, value);
        }
        Self::deserialize(toml::Value::Table(table)).context("invalid settings")
    }

    pub fn codec_config(&self) -> CodecConfig {
        CodecConfig {
            segment_len: self.segment_len,
            hidden: self.hidden,
            mu: self.mu,
            alpha: self.alpha,
            lambda: self.lambda,
            omega: self.omega,
            phi: self.phi,
            learning_rate: self.lr,
            batch_size: self.batch,
            seed: self.seed,
            bits_per_sample: self.bits_per_sample,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs_max: self.epochs,
            batch_size: self.batch,
            learning_rate: self.lr,
            lambda: self.lambda,
            omega: self.omega,
            phi: self.phi,
            seed: self.seed,
            stop_policy: self.stop_policy,
            monitor_batch: self.monitor_batch,
            threshold_grad: self.threshold_grad,
        }
    }
}

/// Parses `key=value`; the value is read as TOML and falls back to a bare string.
fn parse_override(kv: &str) -> Result<(String, toml::Value)> {
    let Some((key, raw)) = kv.split_once('=') else {
        bail!("override '{kv}' is not of the form key=value");
    };
    let key = key.trim().replace('-', "_");
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key, value))
}
