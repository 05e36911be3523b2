//! Extracts the two deep tap points of the seeded stub backbone and fuses them
//! into one 520×14×14 tensor by bilinear upscaling and channel concatenation.
//!
//! `cargo run --release --example feature_fusion`

use cse::features::{fuse_features, load_backbone, BackboneDescriptor};
use cse::toy;

fn main() -> cse::Result<()> {
    let adapter = load_backbone(&BackboneDescriptor::stub(0))?;
    let image = toy::surface_images(1, 224, 1).remove(0);
    let stack = adapter.extract_one(&image)?;
    for (name, l) in adapter.descriptor().tap_points.iter().zip(stack.layers()) {
        let mean = l.data().iter().map(|v| *v as f64).sum::<f64>() / l.len() as f64;
        println!("{name:<7} {:?} mean activation {mean:.4}", l.shape());
    }
    let fused = fuse_features(&stack)?;
    println!("fused   {:?}", fused.shape());
    Ok(())
}
