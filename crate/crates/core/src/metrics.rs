//! Distortion and compression metrics.

use std::io::Write;

use crate::entropy::Bitstream;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub cr: f64,
    /// percent
    pub prd: f64,
    /// percent
    pub prdn: f64,
    pub rmse: f64,
    pub qs: f64,
    pub sample_count: usize,
    pub bitstream_bytes: usize,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "cr,prd,prdn,rmse,qs,samples,bytes";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.cr, self.prd, self.prdn, self.rmse, self.qs, self.sample_count, self.bitstream_bytes
        )
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        writeln!(w, "{}", self.csv_row())?;
        Ok(())
    }

    /// Aligned text table with one row per labelled report.
    pub fn table(rows: &[(&str, &MetricsReport)]) -> String {
        let width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(5);
        let mut out = format!(
            "{:<width$} {:>9} {:>9} {:>9} {:>10} {:>8} {:>9} {:>9}\n",
            "model", "cr", "prd", "prdn", "rmse", "qs", "samples", "bytes"
        );
        for (label, r) in rows {
            out.push_str(&format!(
                "{:<width$} {:>9.2} {:>9.2} {:>9.2} {:>10.5} {:>8.3} {:>9} {:>9}\n",
                label, r.cr, r.prd, r.prdn, r.rmse, r.qs, r.sample_count, r.bitstream_bytes
            ));
        }
        out
    }
}

/// `(prd, prdn, rmse)` of a reconstruction `y` against the original `x`.
pub fn distortion_metrics<T: Real>(x: &[T], y: &[T]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument("metrics need at least two samples".into()));
    }
    let n = x.len() as f64;
    let mean = x.iter().map(|v| v.as_f64()).sum::<f64>() / n;
    let (mut err, mut energy, mut centred) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in x.iter().zip(y) {
        let (a, b) = (a.as_f64(), b.as_f64());
        err += (a - b) * (a - b);
        energy += a * a;
        centred += (a - mean) * (a - mean);
    }
    if energy == 0.0 {
        return Err(Error::UndefinedMetric("PRD of a zero-energy signal"));
    }
    if centred == 0.0 {
        return Err(Error::UndefinedMetric("PRDN of a constant signal"));
    }
    Ok((
        100.0 * (err / energy).sqrt(),
        100.0 * (err / centred).sqrt(),
        (err / n).sqrt(),
    ))
}

/// Original bits over the total stream bits, header included.
pub fn compression_ratio(sample_count: usize, bits_per_sample: u32, stream: &Bitstream) -> Result<f64> {
    if sample_count == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    if stream.is_empty() {
        return Err(Error::UndefinedMetric("compression ratio of an empty bitstream"));
    }
    Ok((sample_count as f64 * bits_per_sample as f64) / stream.bit_len() as f64)
}

pub fn quality_score(cr: f64, prd: f64) -> Result<f64> {
    if prd == 0.0 {
        return Err(Error::UndefinedMetric("quality score at zero PRD"));
    }
    Ok(cr / prd)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_signals() {
        let x = [1.0f64, -2.0, 3.0];
        assert_eq!(distortion_metrics(&x, &x).unwrap(), (0.0, 0.0, 0.0));
    }

    #[test]
    fn hand_computed_case() {
        let (prd, prdn, rmse) = distortion_metrics(&[3.0f64, 4.0], &[0.0, 0.0]).unwrap();
        assert!((prd - 100.0).abs() < 1e-12);
        assert!((rmse - 12.5f64.sqrt()).abs() < 1e-12);
        assert!((prdn - 100.0 * 50.0f64.sqrt()).abs() < 1e-9);
        assert!((prdn - 707.11).abs() < 5e-3);
    }

    #[test]
    fn constant_shift_rmse() {
        let x = [0.5f64, 1.5, -0.25, 2.0];
        let y: Vec<f64> = x.iter().map(|v| v + 0.3).collect();
        let (_, _, rmse) = distortion_metrics(&x, &y).unwrap();
        assert!((rmse - 0.3).abs() < 1e-12);
    }

    #[test]
    fn undefined_cases() {
        assert!(distortion_metrics(&[0.0f64, 0.0], &[1.0, 1.0]).is_err());
        assert!(distortion_metrics(&[2.0f64, 2.0], &[1.0, 1.0]).is_err());
        assert!(distortion_metrics(&[2.0f64, 1.0], &[1.0]).is_err());
        assert!(quality_score(3.0, 0.0).is_err());
        assert!(compression_ratio(10, 32, &Bitstream { bytes: vec![] }).is_err());
    }

    #[test]
    fn compression_ratio_examples() {
        let stream = |n: usize| Bitstream { bytes: vec![0; n] };
        assert_eq!(compression_ratio(1000, 32, &stream(500)).unwrap(), 8.0);
        assert_eq!(compression_ratio(100, 32, &stream(400)).unwrap(), 1.0);
    }

    #[test]
    fn table_lists_every_column() {
        let r = MetricsReport { cr: 9.91, prd: 17.29, prdn: 20.0, rmse: 0.1, qs: 0.573, sample_count: 7, bitstream_bytes: 40 };
        let t = MetricsReport::table(&[("trained", &r)]);
        let mut lines = t.lines();
        let head: Vec<&str> = lines.next().unwrap().split_whitespace().collect();
        assert_eq!(head, ["model", "cr", "prd", "prdn", "rmse", "qs", "samples", "bytes"]);
        let row: Vec<&str> = lines.next().unwrap().split_whitespace().collect();
        assert_eq!(row[..3], ["trained", "9.91", "17.29"]);
    }

    #[test]
    fn quality_score_matches_reported_rows() {
        assert_eq!(format!("{:.2}", quality_score(9.91, 17.29).unwrap()), "0.57");
        assert_eq!(format!("{:.2}", quality_score(31.37, 16.36).unwrap()), "1.92");
    }
}
