//! Per-stage single-stream latency of a detector built on the stub backbone
//! with a freshly initialised embedder.
//!
//! `cargo run --release --example latency_bench [iters]`

use cse::bank::KMeansConfig;
use cse::eval::{bench_latency, build_bank_from_images, Detector};
use cse::features::preprocess::tensor_to_image;
use cse::features::{load_backbone, BackboneDescriptor, PreprocessProfile};
use cse::toy;
use cse::training::{fit, FitContext, TrainConfig};

fn main() -> cse::Result<()> {
    let iters = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(30);
    let adapter = load_backbone(&BackboneDescriptor::stub(0))?;
    let images = toy::surface_images(8, 224, 1);
    let ctx = FitContext {
        adapter: &adapter,
        corpus: None,
        preprocess: PreprocessProfile::ResizeOnly { size: 224 },
        prior_decoder: None,
    };
    let mut cfg = TrainConfig { epochs: 1, steps_per_epoch: Some(1), val_pairs: Some(2), ..Default::default() };
    cfg.defects.textural = false;
    let ckpt = fit(&images, &ctx, &cfg)?.checkpoint;
    let bank = build_bank_from_images(&ckpt, &adapter, &images, &KMeansConfig { k: 4, ..Default::default() })?;
    let detector = Detector::new(ckpt, bank, adapter)?;
    let rgb = images.iter().map(tensor_to_image).collect::<cse::Result<Vec<_>>>()?;
    let r = bench_latency(&detector, &rgb, 5, iters)?;
    for (name, s) in [
        ("preprocess", &r.preprocess),
        ("backbone", &r.backbone),
        ("fuse+embed", &r.embed),
        ("score", &r.score),
        ("total", &r.total),
    ] {
        println!("{name:<11} mean {:>8.3} ms  p50 {:>8.3}  p95 {:>8.3}", s.mean_ms, s.p50_ms, s.p95_ms);
    }
    println!("fps {:.1}, head share {:.1}%", r.fps, 100.0 * r.head_share());
    Ok(())
}
