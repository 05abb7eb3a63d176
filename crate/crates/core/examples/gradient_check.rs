//! Compares tape gradients of the full batch loss against central
//! differences, for every parameter tensor of a small model.
//!
//!     cargo run --example gradient_check [seed]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use xmodal::encoders::{image_forward, text_forward, ImageActivation, ModelDims, ModelParams};
use xmodal::numcore::{finite_diff_check, Graph, Tensor};
use xmodal::objective::{batch_loss, LossConfig, NegativeMode};
use xmodal::textpipe::EncodedText;

fn main() -> xmodal::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed"));
    let dims = ModelDims {
        vocab_size: 7,
        embed_dim: 3,
        joint_dim: 4,
        feature_dim: 5,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ModelParams::init(dims, &mut rng)?;
    let texts = [
        EncodedText::from_indices(&[1, 2, 3], 4)?,
        EncodedText::from_indices(&[4, 5], 4)?,
        EncodedText::from_indices(&[6, 7, 1, 2], 4)?,
    ];
    let features = Tensor::matrix(3, 5, (0..15).map(|k| ((k * 7 % 11) as f64 - 5.0) / 4.0).collect())?;
    let point: Vec<Tensor> = params.iter().map(|(_, t)| t.clone()).collect();

    for mode in [NegativeMode::Sum, NegativeMode::Max] {
        let cfg = LossConfig {
            alpha: 0.2,
            negative_mode: mode,
            ..LossConfig::default()
        };
        let worst = finite_diff_check(
            |g, vars| {
                let p = ModelParams::from_vec(vars.to_vec()).expect("17 tensors");
                let seqs: Vec<&EncodedText> = texts.iter().collect();
                let txt = text_forward(g, &seqs, &p)?;
                let f = g.constant(features.clone());
                let img = image_forward(g, &f, &p, ImageActivation::Relu)?;
                batch_loss(g, &txt, &img, &cfg)
            },
            &point,
            1e-5,
        )?;
        println!("{mode:>3} mode: {} scalars, worst relative error {worst:.2e}", params.num_scalars());
    }
    Ok(())
}
