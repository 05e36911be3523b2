//! Trains on a procedural woven surface, builds a one-cluster bank and reports
//! image-level AUROC on held-out clean and synthetically corrupted samples.
//!
//! `cargo run --release --example evaluate_toy_texture [epochs]`

use std::time::Instant;

use cse::bank::{anomaly_score, build_bank, KMeansConfig};
use cse::defectgen::DefectConfig;
use cse::eval::{compute_auroc, embed_images};
use cse::features::{load_backbone, BackboneDescriptor, PreprocessProfile};
use cse::toy;
use cse::training::{fit, FitContext, TrainConfig};

fn main() -> cse::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let epochs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(15);
    let t0 = Instant::now();
    let adapter = load_backbone(&BackboneDescriptor::stub(0))?;
    let corpus = toy::texture_corpus(12, 224, 1)?;
    let train = toy::surface_images(60, 224, 2);
    // Pairs are drawn with replacement, so an epoch is a budget of 20 batches.
    let config = TrainConfig { epochs, seed: 3, steps_per_epoch: Some(20), val_pairs: Some(64), ..Default::default() };
    let ctx = FitContext {
        adapter: &adapter,
        corpus: Some(&corpus),
        preprocess: PreprocessProfile::ResizeOnly { size: 224 },
        prior_decoder: None,
    };
    let out = fit(&train, &ctx, &config)?;
    println!(
        "best epoch {} val loss {:.4} ({:.1}s)",
        out.checkpoint.epoch,
        out.checkpoint.val_loss,
        t0.elapsed().as_secs_f64()
    );

    let model = &out.checkpoint.model;
    let bank = build_bank(&embed_images(model, &adapter, &train)?, &KMeansConfig::default())?;
    let test_corpus = toy::texture_corpus(12, 224, 99)?;
    let clean = toy::surface_images(30, 224, 1234);
    let bad = toy::corrupted_surfaces(30, 224, 5678, &DefectConfig::default(), Some(&test_corpus))?;
    let mut images = clean.clone();
    images.extend(bad.iter().map(|b| b.0.clone()));
    let labels: Vec<bool> = (0..60).map(|i| i >= 30).collect();
    let scores = embed_images(model, &adapter, &images)?
        .iter()
        .map(|e| anomaly_score(e, &bank).map(|r| r.score))
        .collect::<cse::Result<Vec<_>>>()?;
    println!("AUROC {:.4} ({:.1}s total)", compute_auroc(&scores, &labels)?, t0.elapsed().as_secs_f64());
    for kind in ["Textural", "Structural", "Blur"] {
        let (mut s, mut l) = (scores[..30].to_vec(), vec![false; 30]);
        for (i, b) in bad.iter().enumerate() {
            if format!("{:?}", b.1) == kind {
                s.push(scores[30 + i]);
                l.push(true);
            }
        }
        if l.len() > 30 {
            println!("  {kind:<10} AUROC {:.4} (n={})", compute_auroc(&s, &l)?, l.len() - 30);
        }
    }
    Ok(())
}
