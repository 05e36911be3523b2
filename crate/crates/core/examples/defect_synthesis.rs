//! Draws synthetic defects on a procedural surface and writes each corrupted
//! image next to its mask, with coverage and kind printed per sample.
//!
//! `cargo run --release --example defect_synthesis [out_dir]`

use std::path::PathBuf;

use cse::defectgen::{sample_corruption, DefectConfig};
use cse::features::preprocess::{plane_to_image, tensor_to_image};
use cse::numerics::SeededRng;
use cse::toy;

fn main() -> cse::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "defects".into()));
    std::fs::create_dir_all(&out).map_err(|e| cse::Error::io(&out, e))?;
    let corpus = toy::texture_corpus(6, 224, 1)?;
    let images = toy::surface_images(4, 224, 2);
    let config = DefectConfig::default();
    let mut rng = SeededRng::new(3);
    for i in 0..9 {
        let s = sample_corruption(&images[i % images.len()], &mut rng, &config, Some(&corpus))?;
        let save = |img: image::DynamicImage, name: String| {
            let p = out.join(name);
            img.save(&p).map_err(|source| cse::Error::Image { path: p, source })
        };
        save(tensor_to_image(&s.image)?.into(), format!("{i:02}.png"))?;
        save(plane_to_image(&s.mask.to_tensor())?.into(), format!("{i:02}_mask.png"))?;
        println!("{i:02} {:<10} coverage {:.3}", format!("{:?}", s.spec.kind()), s.mask.coverage());
    }
    println!("wrote 9 samples to {}", out.display());
    Ok(())
}
