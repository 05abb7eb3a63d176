//! Retrieval metrics of an untrained model on 1000 synthetic images with
//! five captions each, under both evaluation protocols.
//!
//!     cargo run --release --example random_baseline [seed]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use xmodal::encoders::{ImageActivation, ModelDims, ModelParams};
use xmodal::evaluator::{evaluate_protocol, Protocol};
use xmodal::synthetic::{synthetic_dataset, SyntheticSpec};
use xmodal::trainer::eval_set;

fn main() -> xmodal::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed"));
    let spec = SyntheticSpec {
        records: 1000,
        vocab: 500,
        feature_dim: 64,
        caption_len: 8,
        captions_per_record: 5,
        seq_len: 20,
    };
    let (records, features, vocab) = synthetic_dataset(&spec, seed);
    let set = eval_set(&records, &features, &vocab, spec.seq_len)?;
    let dims = ModelDims {
        vocab_size: vocab.len(),
        embed_dim: 16,
        joint_dim: 32,
        feature_dim: spec.feature_dim,
    };
    let params = ModelParams::init(dims, &mut ChaCha8Rng::seed_from_u64(seed))?;
    for protocol in [Protocol::Full5k, Protocol::Folds1k] {
        let report = evaluate_protocol(&params, ImageActivation::Relu, &set, protocol)?;
        println!("{protocol}\n{}", report.table());
    }
    println!("chance: R@1 0.1 for images; image Med r about 500");
    Ok(())
}
