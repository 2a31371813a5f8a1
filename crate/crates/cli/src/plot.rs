//! Static SVG comparison of an original and a reconstructed record, with a
//! CSV holding the plotted series.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

const WIDTH: f64 = 960.0;
const PANEL: f64 = 300.0;
const MARGIN: f64 = 60.0;
/// Longer series are reduced to per-column min/max pairs in the SVG only.
const MAX_POINTS: usize = 2000;

/// `|X_k|` for `k = 0..=N/2` where `N` is `x.len()` rounded up to a power of two.
pub fn magnitude_spectrum(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        bail!("cannot take the spectrum of an empty signal");
    }
    let n = x.len().next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    buf.resize(n, Complex::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    Ok(buf[..=n / 2].iter().map(|c| c.norm()).collect())
}

/// Index of the largest magnitude, first one on ties.
pub fn peak_bin(spectrum: &[f64]) -> usize {
    spectrum
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Series shared by the SVG and its CSV companion.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub sample_rate_hz: f64,
    pub fft_len: usize,
    pub original: Vec<f64>,
    pub reconstructed: Vec<f64>,
    pub original_spectrum: Vec<f64>,
    pub reconstructed_spectrum: Vec<f64>,
}

impl PlotData {
    pub fn new(original: &[f64], reconstructed: &[f64], sample_rate_hz: f64) -> Result<Self> {
        if original.len() != reconstructed.len() {
            bail!(
                "length mismatch: original has {} samples, reconstruction {}",
                original.len(),
                reconstructed.len()
            );
        }
        if original.is_empty() {
            bail!("nothing to plot: signals are empty");
        }
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            bail!("sample rate must be positive, got {sample_rate_hz}");
        }
        Ok(Self {
            sample_rate_hz,
            fft_len: original.len().next_power_of_two(),
            original: original.to_vec(),
            reconstructed: reconstructed.to_vec(),
            original_spectrum: magnitude_spectrum(original)?,
            reconstructed_spectrum: magnitude_spectrum(reconstructed)?,
        })
    }

    fn bin_hz(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate_hz / self.fft_len as f64
    }

    /// Long format: `series,index,x,original,reconstructed`, where `x` is
    /// seconds for the `time` series and hertz for the `spectrum` series.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("series,index,x,original,reconstructed\n");
        for (i, (a, b)) in self.original.iter().zip(&self.reconstructed).enumerate() {
            let t = i as f64 / self.sample_rate_hz;
            let _ = writeln!(out, "time,{i},{t},{a},{b}");
        }
        for (k, (a, b)) in self.original_spectrum.iter().zip(&self.reconstructed_spectrum).enumerate() {
            let _ = writeln!(out, "spectrum,{k},{},{a},{b}", self.bin_hz(k));
        }
        out
    }

    pub fn to_svg(&self) -> String {
        let height = 2.0 * PANEL + 3.0 * MARGIN;
        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{height}\" \
             viewBox=\"0 0 {WIDTH} {height}\" font-family=\"sans-serif\" font-size=\"12\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        );
        let duration = self.original.len() as f64 / self.sample_rate_hz;
        let db = |v: &[f64]| -> Vec<f64> { v.iter().map(|m| 20.0 * (m + 1e-12).log10()).collect() };
        let panels = [
            (
                "Time domain",
                "time (s)",
                duration,
                self.original.clone(),
                self.reconstructed.clone(),
            ),
            (
                "Magnitude spectrum (dB)",
                "frequency (Hz)",
                self.sample_rate_hz / 2.0,
                db(&self.original_spectrum),
                db(&self.reconstructed_spectrum),
            ),
        ];
        for (p, (title, x_label, x_max, a, b)) in panels.iter().enumerate() {
            let top = MARGIN + p as f64 * (PANEL + MARGIN);
            let (lo, hi) = value_range(a.iter().chain(b.iter()));
            let frame = Frame { top, lo, hi };
            let _ = writeln!(
                svg,
                "<rect x=\"{MARGIN}\" y=\"{top}\" width=\"{}\" height=\"{PANEL}\" fill=\"none\" stroke=\"#999\"/>",
                WIDTH - 2.0 * MARGIN
            );
            let _ = writeln!(svg, "<text x=\"{MARGIN}\" y=\"{}\" font-weight=\"bold\">{title}</text>", top - 8.0);
            let _ = writeln!(
                svg,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>",
                WIDTH / 2.0,
                top + PANEL + 30.0
            );
            let _ = writeln!(svg, "<text x=\"{MARGIN}\" y=\"{}\">0</text>", top + PANEL + 15.0);
            let _ = writeln!(
                svg,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
                WIDTH - MARGIN,
                top + PANEL + 15.0,
                fmt_tick(*x_max)
            );
            let _ = writeln!(svg, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>", MARGIN - 4.0, top + 10.0, fmt_tick(hi));
            let _ = writeln!(svg, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>", MARGIN - 4.0, top + PANEL, fmt_tick(lo));
            svg.push_str(&polyline(a, &frame, "#d62728", ""));
            svg.push_str(&polyline(b, &frame, "#1f77b4", " stroke-dasharray=\"6 3\""));
        }
        let legend_y = height - 15.0;
        let _ = writeln!(
            svg,
            "<text x=\"{MARGIN}\" y=\"{legend_y}\" fill=\"#d62728\">original (solid)</text>\n\
             <text x=\"{}\" y=\"{legend_y}\" fill=\"#1f77b4\">reconstructed (dashed)</text>",
            MARGIN + 140.0
        );
        svg.push_str("</svg>\n");
        svg
    }
}

struct Frame {
    top: f64,
    lo: f64,
    hi: f64,
}

fn value_range<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 1.0, hi + 1.0)
    }
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn polyline(values: &[f64], frame: &Frame, colour: &str, extra: &str) -> String {
    let width = WIDTH - 2.0 * MARGIN;
    let n = values.len();
    let x_of = |i: f64| MARGIN + if n > 1 { i / (n - 1) as f64 * width } else { width / 2.0 };
    let y_of = |v: f64| frame.top + PANEL - (v - frame.lo) / (frame.hi - frame.lo) * PANEL;
    let mut pts = String::new();
    if n <= MAX_POINTS {
        for (i, &v) in values.iter().enumerate() {
            let _ = write!(pts, "{:.2},{:.2} ", x_of(i as f64), y_of(v));
        }
    } else {
        let buckets = MAX_POINTS / 2;
        for b in 0..buckets {
            let chunk = &values[b * n / buckets..(b + 1) * n / buckets];
            let (lo, hi) = value_range(chunk.iter());
            let (lo, hi) = if chunk.len() == 1 { (chunk[0], chunk[0]) } else { (lo, hi) };
            let x = x_of((b * n / buckets) as f64);
            let _ = write!(pts, "{x:.2},{:.2} {x:.2},{:.2} ", y_of(lo), y_of(hi));
        }
    }
    format!(
        "<polyline fill=\"none\" stroke=\"{colour}\" stroke-width=\"1\"{extra} points=\"{}\"/>\n",
        pts.trim_end()
    )
}

/// Path of the CSV written next to an SVG.
pub fn csv_companion(svg: &Path) -> PathBuf {
    svg.with_extension("csv")
}

/// Writes `out` (SVG) and its CSV companion.
pub fn emit_plot(original: &[f64], reconstructed: &[f64], sample_rate_hz: f64, out: &Path) -> Result<PlotData> {
    let data = PlotData::new(original, reconstructed, sample_rate_hz)?;
    std::fs::write(out, data.to_svg())?;
    std::fs::write(csv_companion(out), data.to_csv())?;
    Ok(data)
}
