//! Caption normalization, vocabulary building and fixed-length encoding.
//!
//!     cargo run --example text_pipeline

use xmodal::textpipe::{build_vocab, concat_captions, encode, normalize, stem};

fn main() -> xmodal::Result<()> {
    let captions = [
        "A dog is running across the grassy field.",
        "Two dogs playing with a ball in the park!",
        "The running man crosses a busy street.",
        "Dogs run through tall grasses.",
    ];
    for word in ["running", "grasses", "crosses", "playing", "busy"] {
        println!("{word:>8} -> {}", stem(word));
    }
    let corpus: Vec<Vec<String>> = captions.iter().map(|c| normalize(c)).collect();
    for (c, toks) in captions.iter().zip(&corpus) {
        println!("{c:<45} {toks:?}");
    }

    let vocab = build_vocab(&corpus, 2)?;
    println!("\nmin_freq 2 keeps {} tokens:", vocab.len());
    print!("{}", vocab.to_tsv());

    let tokens = normalize(captions[0]);
    let enc = encode(&tokens, &vocab, 8)?;
    println!("\n{:?} (true length {})", enc.indices(), enc.true_length());

    let joined = concat_captions(&captions[..2]);
    println!("concatenated: {joined}");
    Ok(())
}
