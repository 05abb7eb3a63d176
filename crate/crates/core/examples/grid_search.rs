//! A small hyperparameter grid on synthetic data, scored by the sum of
//! R@1 in both directions on a held-out split.
//!
//!     cargo run --release --example grid_search

use xmodal::config::RunConfig;
use xmodal::synthetic::{synthetic_dataset, SyntheticSpec};
use xmodal::trainer::{eval_set, grid_search, CaptionMode, GridAxis, TrainingData};

fn main() -> xmodal::Result<()> {
    let spec = SyntheticSpec {
        records: 48,
        vocab: 40,
        feature_dim: 16,
        caption_len: 4,
        captions_per_record: 1,
        seq_len: 6,
    };
    let (records, features, vocab) = synthetic_dataset(&spec, 1);
    let (train, val) = records.split_at(32);
    let data = TrainingData::prepare(train, &features, &vocab, spec.seq_len, CaptionMode::Individual)?;
    let val = eval_set(val, &features, &vocab, spec.seq_len)?;

    let mut base = RunConfig::test_profile();
    base.set("seq_len", "6")?;
    base.set("max_epochs", "20")?;
    base.set("record_wall_time", "false")?;
    let axes = [GridAxis::new("alpha", &[0.05, 0.2]), GridAxis::new("lr", &[0.01, 0.003])];
    let report = grid_search(&base, &axes, &data, &val)?;
    println!("{}", report.table());
    println!("best: {:?}", report.best().overrides);
    Ok(())
}
