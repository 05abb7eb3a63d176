//! Embeds captions and images with a freshly initialized model and prints
//! the order-violation penalty and similarity for every pair.
//!
//!     cargo run --example encode_pairs [seed]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use xmodal::encoders::{encode_image, encode_text, ImageActivation, ModelDims, ModelParams};
use xmodal::objective::{order_penalty, similarity};
use xmodal::textpipe::{build_vocab, encode, normalize};

fn main() -> xmodal::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed"));
    let captions = ["a cat sleeping on a sofa", "a red bus on the street", "cat on a red sofa"];
    let corpus: Vec<Vec<String>> = captions.iter().map(|c| normalize(c)).collect();
    let vocab = build_vocab(&corpus, 1)?;
    let dims = ModelDims {
        vocab_size: vocab.len(),
        embed_dim: 6,
        joint_dim: 5,
        feature_dim: 4,
    };
    let params = ModelParams::init(dims, &mut ChaCha8Rng::seed_from_u64(seed))?;

    let texts = corpus
        .iter()
        .map(|t| encode_text(&encode(t, &vocab, 10)?, &params))
        .collect::<xmodal::Result<Vec<_>>>()?;
    let images = [[1.0, 0.0, 0.5, -0.5], [0.0, 2.0, -1.0, 0.0]]
        .iter()
        .map(|f| encode_image(f, &params, ImageActivation::Relu))
        .collect::<xmodal::Result<Vec<_>>>()?;

    for (k, t) in texts.iter().enumerate() {
        println!("text {k}: {:.4?}", &t[..]);
    }
    for (k, v) in images.iter().enumerate() {
        println!("image {k}: {:.4?}", &v[..]);
    }
    println!();
    for (a, t) in texts.iter().enumerate() {
        for (b, v) in images.iter().enumerate() {
            println!(
                "text {a} / image {b}: penalty {:.6}  similarity {:.6}",
                order_penalty(t, v)?,
                similarity(t, v)?
            );
        }
    }
    Ok(())
}
