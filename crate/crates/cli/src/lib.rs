//! Command-line front end for the `aalw` vibration codec.

pub mod plot;
pub mod settings;

use std::fs;
use std::path::{Path, PathBuf};

use aalw::model::{load_model, save_model};
use aalw::pipeline::{compress, decompress, evaluate_record};
use aalw::signal::{load_samples, segment_samples, split_record, synthesize_bearing, write_raw_f32};
use aalw::train::train_model;
use aalw::{CodecModel, MetricsReport, SampleFormat, SampleRecord, StopPolicy, SynthConfig};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::settings::Settings;

#[derive(Debug, Parser)]
#[command(name = "aalw", version, about = "Lossy compression of vibration signals")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a codec on a recording and save the model.
    Train(TrainArgs),
    /// Encode a recording into a bitstream.
    Compress(CompressArgs),
    /// Decode a bitstream into raw little-endian f32 samples.
    Decompress(DecompressArgs),
    /// Round-trip a recording and report compression and distortion.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic bearing-fault recording (raw little-endian f32).
    Synth(SynthArgs),
    /// Overlay an original and a reconstructed recording in time and frequency.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// raw-f32-le, raw-f64-le or csv-single-column; guessed from the extension
    /// when omitted (.csv, .f64, otherwise raw f32)
    #[arg(long)]
    pub format: Option<SampleFormat>,
    #[arg(long, default_value_t = 8000.0)]
    pub rate: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub out_model: PathBuf,
    /// Per-epoch log; defaults to the model path with a `.log.csv` extension.
    #[arg(long)]
    pub out_log: Option<PathBuf>,
    /// TOML file with settings; keys as accepted by `--set`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Extra `key=value` setting, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub phi: Option<f64>,
    #[arg(long)]
    pub stop_policy: Option<StopPolicy>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train on this leading fraction of the input only.
    #[arg(long)]
    pub train_fraction: Option<f64>,
}

impl TrainArgs {
    pub fn settings(&self) -> Result<Settings> {
        let mut s = Settings::layered(self.config.as_deref(), &self.overrides)?;
        macro_rules! flag {
            ($($f:ident => $s:ident),*) => { $(if let Some(v) = self.$f { s.$s = v; })* };
        }
        flag!(epochs => epochs, batch => batch, lr => lr, lambda => lambda, omega => omega,
              phi => phi, stop_policy => stop_policy, seed => seed);
        if self.train_fraction.is_some() {
            s.train_fraction = self.train_fraction;
        }
        Ok(s)
    }
}

#[derive(Debug, Args)]
pub struct CompressArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecompressArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub model: PathBuf,
    /// Bits per original sample used for the compression ratio.
    #[arg(long, default_value_t = 32)]
    pub bin: u32,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// seconds
    #[arg(long, default_value_t = 10.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 8000.0)]
    pub rate: f64,
    #[arg(long, default_value_t = 97.0)]
    pub fault_hz: f64,
    #[arg(long, default_value_t = 1800.0)]
    pub resonance_hz: f64,
    /// Standard deviation of the additive Gaussian noise.
    #[arg(long, default_value_t = 0.02)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub original: PathBuf,
    #[arg(long)]
    pub reconstructed: PathBuf,
    /// SVG path; the plotted series go to the same path with a `.csv` extension.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub format: Option<SampleFormat>,
    #[arg(long, default_value_t = 8000.0)]
    pub rate: f64,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Compress(a) => cmd_compress(&a),
        Command::Decompress(a) => cmd_decompress(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Plot(a) => cmd_plot(&a),
    }
}

fn guess_format(path: &Path) -> SampleFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => SampleFormat::CsvSingleColumn,
        Some("f64") => SampleFormat::RawF64Le,
        _ => SampleFormat::RawF32Le,
    }
}

fn check_input(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!("input file {} does not exist", path.display());
    }
    Ok(())
}

fn check_output(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        if !dir.is_dir() {
            bail!("output directory {} does not exist", dir.display());
        }
    }
    if path.is_dir() {
        bail!("output path {} is a directory", path.display());
    }
    Ok(())
}

fn read_record(a: &InputArgs) -> Result<SampleRecord> {
    let format = a.format.unwrap_or_else(|| guess_format(&a.input));
    load_samples(&a.input, format, a.rate).with_context(|| format!("reading {}", a.input.display()))
}

fn read_model(path: &Path) -> Result<CodecModel> {
    load_model(path).with_context(|| format!("loading model {}", path.display()))
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let settings = a.settings()?;
    let log_path = a.out_log.clone().unwrap_or_else(|| a.out_model.with_extension("log.csv"));
    check_input(&a.input.input)?;
    check_output(&a.out_model)?;
    check_output(&log_path)?;
    let codec = settings.codec_config();
    let cfg = settings.train_config();
    codec.validate()?;
    cfg.validate()?;

    let record = read_record(&a.input)?;
    let train = match settings.train_fraction {
        Some(f) => split_record(&record, f)?.0,
        None => record,
    };
    let segments: Vec<Vec<f64>> = segment_samples(&train.samples, codec.segment_len)?
        .into_iter()
        .map(|s| s.values)
        .collect();
    let outcome = train_model(&segments, &codec, &cfg)?;
    save_model(&outcome.model, &a.out_model)?;
    outcome.log.write_csv(fs::File::create(&log_path)?)?;

    let last = outcome.log.epochs.last().expect("at least one epoch");
    println!(
        "trained {} epochs on {} segments: loss {:.6}, nonzero fraction {:.3}{}",
        outcome.log.epochs.len(),
        segments.len(),
        last.loss,
        last.nonzero_fraction,
        if outcome.stopped_early { " (stop rule)" } else { "" }
    );
    Ok(())
}

fn cmd_compress(a: &CompressArgs) -> Result<()> {
    check_input(&a.input.input)?;
    check_input(&a.model)?;
    check_output(&a.out)?;
    let model = read_model(&a.model)?;
    let record = read_record(&a.input)?;
    let stream = compress(&model, &record.samples)?;
    fs::write(&a.out, &stream.bytes)?;
    println!("{} samples -> {} bytes", record.len(), stream.bytes.len());
    Ok(())
}

fn cmd_decompress(a: &DecompressArgs) -> Result<()> {
    check_input(&a.input)?;
    check_input(&a.model)?;
    check_output(&a.out)?;
    let model = read_model(&a.model)?;
    let bytes = fs::read(&a.input)?;
    let samples: Vec<f64> = decompress(&model, &bytes).with_context(|| format!("decoding {}", a.input.display()))?;
    write_raw_f32(&a.out, &samples)?;
    println!("{} bytes -> {} samples", bytes.len(), samples.len());
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    check_input(&a.input.input)?;
    check_input(&a.model)?;
    if let Some(p) = &a.out_csv {
        check_output(p)?;
    }
    let mut model = read_model(&a.model)?;
    model.config.bits_per_sample = a.bin;
    let record = read_record(&a.input)?;
    let eval = evaluate_record(&model, &record.samples)?;
    print!("{}", MetricsReport::table(&[(&record.label, &eval.report)]));
    if let Some(p) = &a.out_csv {
        eval.report.write_csv(fs::File::create(p)?)?;
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    check_output(&a.out)?;
    let cfg = SynthConfig {
        duration_s: a.duration,
        sample_rate_hz: a.rate,
        fault_freq_hz: a.fault_hz,
        resonance_hz: a.resonance_hz,
        noise_std: a.noise,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let record: SampleRecord = synthesize_bearing(&cfg)?;
    write_raw_f32(&a.out, &record.samples)?;
    println!("wrote {} samples at {} Hz", record.len(), a.rate);
    Ok(())
}

fn cmd_plot(a: &PlotArgs) -> Result<()> {
    check_input(&a.original)?;
    check_input(&a.reconstructed)?;
    check_output(&a.out)?;
    let load = |p: &Path| -> Result<SampleRecord> {
        let format = a.format.unwrap_or_else(|| guess_format(p));
        load_samples(p, format, a.rate).with_context(|| format!("reading {}", p.display()))
    };
    let original = load(&a.original)?;
    let reconstructed = load(&a.reconstructed)?;
    plot::emit_plot(&original.samples, &reconstructed.samples, a.rate, &a.out)?;
    println!("wrote {} and {}", a.out.display(), plot::csv_companion(&a.out).display());
    Ok(())
}
