//! The loss algebra on hand-made embeddings: cosine similarity, the
//! margin-free contrastive loss for clean and defective pairs, the per-position
//! reconstruction penalty and the weighted total.
//!
//! `cargo run --example contrastive_losses`

use cse::losses::{contrastive_loss, cos_sim, reconstruction_loss, total_loss, PairLabel, ReconstructionNorm};
use cse::numerics::Tensor;

fn main() -> cse::Result<()> {
    let e = Tensor::new(vec![4], vec![0.5f64, -1.0, 2.0, 0.25])?;
    let rotated = Tensor::new(vec![4], vec![-1.0f64, 0.5, 0.25, 2.0])?;
    for (name, other) in [("same", e.clone()), ("opposite", e.scale(-1.0)), ("other", rotated)] {
        println!(
            "{name:<8} cos {:+.3}  clean loss {:.3}  defective loss {:.3}",
            cos_sim(&e, &other)?,
            contrastive_loss(&e, &other, PairLabel::Clean)?,
            contrastive_loss(&e, &other, PairLabel::Defective)?,
        );
    }
    let f = Tensor::new(vec![2, 1, 2], vec![3.0f64, 0.0, 4.0, 1.0])?;
    let r = Tensor::new(vec![2, 1, 2], vec![0.0f64, 0.0, 0.0, 1.0])?;
    // Position 0 is off by (3, 4) → ½·5; position 1 is exact → mean 1.25.
    let recon = reconstruction_loss(&[f], &[r], ReconstructionNorm::Euclidean)?;
    println!("reconstruction {recon:.3}, total with alpha 10 and contrastive 0.2: {:.3}", total_loss(recon, 0.2, 10.0));
    Ok(())
}
