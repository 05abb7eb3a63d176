//! Overfits a 64-record synthetic dataset with the plateau schedule and
//! stops once every training pair is retrieved first in both directions
//! with no margin violations left.
//!
//!     cargo run --release --example train_synthetic [seed] [initial_lr]
//!
//! At this scale an initial rate of 0.1 saturates the LSTM gates within the
//! first epoch, hence the smaller default.

use std::ops::ControlFlow;
use std::time::Instant;

use xmodal::encoders::{embed_images, embed_texts, ModelDims};
use xmodal::evaluator::evaluate_embeddings;
use xmodal::objective::{hinge_violations, similarity_matrix};
use xmodal::synthetic::{synthetic_training_data, SyntheticSpec};
use xmodal::trainer::{train, ScheduleConfig, TrainConfig, TrainState};

fn main() -> xmodal::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let initial_lr: f64 = args.next().map_or(0.01, |s| s.parse().expect("initial_lr"));
    let spec = SyntheticSpec {
        records: 64,
        vocab: 50,
        feature_dim: 32,
        caption_len: 4,
        captions_per_record: 1,
        seq_len: 6,
    };
    let data = synthetic_training_data(&spec, seed);
    let cfg = TrainConfig {
        seed,
        max_epochs: 500,
        max_grow_cycles: 10,
        record_wall_time: false,
        schedule: ScheduleConfig {
            initial_lr,
            ..ScheduleConfig::default()
        },
        ..TrainConfig::default()
    };
    let dims = ModelDims {
        vocab_size: data.vocab_size,
        embed_dim: 8,
        joint_dim: 16,
        feature_dim: data.feature_dim(),
    };
    let mut state = TrainState::init(dims, None, &cfg)?;
    let set = data.eval_set();
    let started = Instant::now();
    let report = train(&mut state, &data, None, &cfg, |entry, st| {
        let txt = embed_texts(&set.captions, &st.params).expect("embed");
        let img = embed_images(&set.features, &st.params, cfg.activation).expect("embed");
        let (s, i) = evaluate_embeddings(&txt, &img, &set.owner).expect("evaluate");
        let violations = hinge_violations(&similarity_matrix(&txt, &img).expect("sim"), cfg.loss.alpha);
        let done = s.r1 == 100.0 && i.r1 == 100.0 && violations == 0;
        if entry.epoch % 10 == 0 || done {
            println!(
                "epoch {:>3}  loss {:>9.5}  lr {:<10.3e} batch {:>3}  R@1 sent {:>5.1} img {:>5.1}  violations {}",
                entry.epoch, entry.loss, entry.lr, entry.batch_size, s.r1, i.r1, violations
            );
        }
        if done {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })?;
    println!("stopped after {} epochs ({:?}) in {:.1?}", state.epoch, report.stop, started.elapsed());
    Ok(())
}
