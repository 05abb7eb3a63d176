//! The in-batch triplet loss on hand-picked embeddings, in both negative
//! modes, with and without the variance term, plus its gradient.
//!
//!     cargo run --example triplet_loss

use xmodal::numcore::{Graph, Tape, Tensor};
use xmodal::objective::{batch_loss, batch_loss_value, hinge_violations, similarity_matrix, LossConfig, NegativeMode};

fn main() -> xmodal::Result<()> {
    let txt = Tensor::from_rows(&[vec![0.1, 0.2], vec![0.8, 0.1], vec![0.3, 0.9]])?;
    let img = Tensor::from_rows(&[vec![0.3, 0.4], vec![0.9, 0.2], vec![0.2, 0.7]])?;
    let sim = similarity_matrix(&txt, &img)?;
    for r in 0..sim.rows() {
        println!("S[{r}] = {:.3?}", sim.row(r));
    }

    for mode in [NegativeMode::Sum, NegativeMode::Max] {
        for lambda_var in [0.0, 0.5] {
            let cfg = LossConfig {
                alpha: 0.05,
                lambda_var,
                negative_mode: mode,
                ..LossConfig::default()
            };
            println!(
                "{mode:>3}  lambda {lambda_var}: loss {:.6}  violations {}",
                batch_loss_value(&txt, &img, &cfg)?,
                hinge_violations(&sim, cfg.alpha)
            );
        }
    }

    let mut tape = Tape::new();
    let t = tape.variable(txt.clone());
    let i = tape.variable(img.clone());
    let loss = batch_loss(&mut tape, &t, &i, &LossConfig::default())?;
    let grads = tape.backward(loss)?;
    println!("\nd loss / d txt = {:?}", grads.wrt(t).data());
    println!("d loss / d img = {:?}", grads.wrt(i).data());
    Ok(())
}
