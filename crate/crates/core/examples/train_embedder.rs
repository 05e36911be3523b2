//! Fits the pointwise embedder on procedural defect-free images and prints the
//! per-epoch loss breakdown and learning rate.
//!
//! `cargo run --release --example train_embedder [epochs] [out.cse]`

use cse::features::{load_backbone, BackboneDescriptor, PreprocessProfile};
use cse::toy;
use cse::training::{fit, save_checkpoint, FitContext, TrainConfig};

fn main() -> cse::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().and_then(|a| a.parse().ok()).unwrap_or(4);
    let out = args.next();
    let adapter = load_backbone(&BackboneDescriptor::stub(0))?;
    let corpus = toy::texture_corpus(8, 224, 1)?;
    let images = toy::surface_images(24, 224, 2);
    let config = TrainConfig { epochs, steps_per_epoch: Some(6), val_pairs: Some(16), ..Default::default() };
    let ctx = FitContext {
        adapter: &adapter,
        corpus: Some(&corpus),
        preprocess: PreprocessProfile::ResizeOnly { size: 224 },
        prior_decoder: None,
    };
    let outcome = fit(&images, &ctx, &config)?;
    println!("epoch  lr         train     val (recon + alpha·contr)");
    for r in &outcome.history {
        println!(
            "{:>5}  {:.3e}  {:>8.4}  {:>8.4} ({:.4} + {}·{:.4})",
            r.epoch + 1,
            r.lr,
            r.train.total,
            r.val.total,
            r.val.reconstruction,
            r.val.alpha,
            r.val.contrastive
        );
    }
    println!("kept epoch {} (val {:.4})", outcome.checkpoint.epoch + 1, outcome.checkpoint.val_loss);
    if let Some(path) = out {
        println!("saved {} digest {}", path, save_checkpoint(&outcome.checkpoint, path.as_ref())?);
    }
    Ok(())
}
