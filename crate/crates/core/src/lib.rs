//! Lossy compression of one-dimensional vibration signals with an asymmetric
//! autoencoder built around a (5,3) lifting wavelet layer.
//!
//! The encoder is deliberately tiny (74 trainable scalars at the default
//! segment length of 7) so it can run on a sensor; the decoder is a small MLP
//! with a residual path from the inverse wavelet transform. Latents are
//! quantized to integers and packed with zero-run RLE and canonical Huffman
//! codes into a CRC-protected container.
//!
//! All numeric code is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`.

pub mod entropy;
pub mod error;
pub mod lwt;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod scalar;
pub mod signal;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Real;

pub type SampleRecord = signal::SampleRecord<f64>;
pub type Segment = signal::Segment<f64>;
pub type WaveletCoeffs = lwt::WaveletCoeffs<f64>;
pub type ConvParams = nn::ConvParams<f64>;
pub type LinearParams = nn::LinearParams<f64>;
pub type AhtParams = nn::AhtParams<f64>;
pub type EncoderParams = model::EncoderParams<f64>;
pub type DecoderParams = model::DecoderParams<f64>;
pub type CodecModel = model::CodecModel<f64>;
pub type CodecModel32 = model::CodecModel<f32>;

pub use entropy::{Bitstream, CodeTable, StreamHeader};
pub use metrics::MetricsReport;
pub use model::{CodecConfig, MacConvention};
pub use signal::{SampleFormat, SynthConfig};
pub use train::{StopPolicy, TrainConfig, TrainLog};
