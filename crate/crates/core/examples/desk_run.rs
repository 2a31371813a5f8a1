//! Trains on the leading 20% of a synthetic bearing record and evaluates on
//! the remainder.
//!
//! `cargo run --release -p aalw --example desk_run -- [epochs] [seed] [stop-policy] [phi]`

use aalw::pipeline::evaluate_record;
use aalw::signal::{segment_record, split_record, synthesize_bearing};
use aalw::train::train_model;
use aalw::{CodecConfig, CodecModel, SampleRecord, SynthConfig, TrainConfig};

fn main() -> aalw::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(200);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);

    let record: SampleRecord = synthesize_bearing(&SynthConfig { seed, ..SynthConfig::default() })?;
    let (train, test) = split_record(&record, 0.2)?;
    let segments: Vec<Vec<f64>> = segment_record(&train, 7)?.into_iter().map(|s| s.values).collect();

    let codec = CodecConfig { seed, ..CodecConfig::default() };
    let policy = args.next().map(|p| p.parse()).transpose()?.unwrap_or_default();
    let phi: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0.6);
    let cfg = TrainConfig { epochs_max: epochs, seed, stop_policy: policy, phi, ..TrainConfig::default() };
    let outcome = train_model(&segments, &codec, &cfg)?;
    for e in &outcome.log.epochs {
        println!(
            "epoch {:>3} loss {:.5} mse {:.6} kld {:.5} nonzero {:.3}",
            e.epoch, e.loss, e.mse, e.kld, e.nonzero_fraction
        );
    }

    let baseline = evaluate_record(&CodecModel::init(outcome.model.config.clone())?, &test.samples)?;
    let trained = evaluate_record(&outcome.model, &test.samples)?;
    print!(
        "{}",
        aalw::MetricsReport::table(&[("untrained", &baseline.report), ("trained", &trained.report)])
    );
    Ok(())
}
