//! Record-level compression, decompression and evaluation.

use crate::entropy::{pack_stream, unpack_stream, Bitstream, StreamHeader};
use crate::error::{Error, Result};
use crate::metrics::{compression_ratio, distortion_metrics, quality_score, MetricsReport};
use crate::model::{decode_latent, dequantize_latent, encode_segment, quantize_latent, CodecModel};
use crate::scalar::Real;
use crate::signal::{concat_segments, segment_samples};

/// Segments, encodes, quantizes and entropy-codes a whole record.
pub fn compress<T: Real>(model: &CodecModel<T>, samples: &[T]) -> Result<Bitstream> {
    model.validate()?;
    let cfg = &model.config;
    let header = StreamHeader::for_record(samples.len(), cfg.segment_len, cfg.mu, cfg.alpha as f32)?;
    let alpha = header.alpha as f64;
    let latents = segment_samples(samples, cfg.segment_len)?
        .iter()
        .map(|seg| {
            let z = encode_segment(&seg.values, &model.encoder)?;
            quantize_latent(&z, cfg.mu, alpha)
        })
        .collect::<Result<Vec<_>>>()?;
    pack_stream(&header, &latents)
}

/// Rebuilds the samples from a container, trimmed to the original length.
pub fn decompress<T: Real>(model: &CodecModel<T>, bytes: &[u8]) -> Result<Vec<T>> {
    model.validate()?;
    let (header, latents) = unpack_stream(bytes)?;
    if header.segment_len as usize != model.config.segment_len {
        return Err(Error::Inconsistent(format!(
            "stream segment length {} does not match model ({})",
            header.segment_len, model.config.segment_len
        )));
    }
    let segments = latents
        .iter()
        .map(|q| {
            let z: Vec<T> = dequantize_latent(q, header.mu, header.alpha as f64);
            decode_latent(&z, &model.decoder)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(concat_segments(&segments, header.original_sample_count as usize))
}

/// Full round trip with metrics computed on the trimmed reconstruction.
#[derive(Debug, Clone)]
pub struct Evaluation<T> {
    pub report: MetricsReport,
    pub reconstruction: Vec<T>,
    pub stream: Bitstream,
}

pub fn evaluate_record<T: Real>(model: &CodecModel<T>, samples: &[T]) -> Result<Evaluation<T>> {
    let stream = compress(model, samples)?;
    let reconstruction = decompress(model, &stream.bytes)?;
    let (prd, prdn, rmse) = distortion_metrics(samples, &reconstruction)?;
    let cr = compression_ratio(samples.len(), model.config.bits_per_sample, &stream)?;
    let qs = quality_score(cr, prd)?;
    Ok(Evaluation {
        report: MetricsReport {
            cr,
            prd,
            prdn,
            rmse,
            qs,
            sample_count: samples.len(),
            bitstream_bytes: stream.bytes.len(),
        },
        reconstruction,
        stream,
    })
}
