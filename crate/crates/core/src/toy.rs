//! Procedural data for demos and tests: a woven checker surface class,
//! a corpus of foreign textures, and an MVTEC-style tree built from both.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::defectgen::{perlin_noise, sample_corruption, DefectConfig, DefectKind, PerlinParams, TextureCorpus};
use crate::error::{Error, Result};
use crate::features::preprocess::{plane_to_image, tensor_to_image};
use crate::numerics::{SeededRng, Tensor};

/// One defect-free sample of the surface class: a high-contrast woven pattern
/// of soft square waves with jittered period, phase, angle and tint, plus
/// fine pixel noise.
pub fn surface_image(size: usize, rng: &mut SeededRng) -> Tensor {
    let period = rng.random_range(9.0..11.0);
    let angle: f64 = rng.random_range(-0.06..0.06);
    let (px, py) = (rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI));
    let base = [0.62, 0.52, 0.38].map(|c: f64| c + rng.random_range(-0.02..0.02));
    let noise: Vec<f64> = (0..size * size).map(|_| rng.random_range(-0.03..0.03)).collect();
    let (s, c) = angle.sin_cos();
    let k = 2.0 * PI / period;
    Tensor::from_fn(vec![3, size, size], |i| {
        let (ch, p) = (i / (size * size), i % (size * size));
        let (y, x) = ((p / size) as f64, (p % size) as f64);
        let (u, v) = (c * x + s * y, -s * x + c * y);
        let (a, b) = (((k * u + px).sin() * 4.0).tanh(), ((k * v + py).sin() * 4.0).tanh());
        let weave = 0.5 * a * b + 0.25 * a;
        let amp = [0.44, 0.4, 0.32][ch];
        (base[ch] + amp * weave + noise[p]).clamp(0.0, 1.0) as f32
    })
}

/// A foreign texture: independent Perlin fields per channel with random gain.
pub fn anomaly_texture(size: usize, rng: &mut SeededRng) -> Result<Tensor> {
    let mut planes = Vec::with_capacity(3);
    for _ in 0..3 {
        let res = [2usize, 4, 8, 16][rng.random_range(0..4)];
        let params = PerlinParams { grid_res_x: res, grid_res_y: res, octaves: 2, seed: rng.next_u64() };
        let gain = rng.random_range(0.3..0.6);
        let offset = rng.random_range(0.2..0.8);
        let p = perlin_noise(&params, size, size)?;
        planes.extend(p.data().iter().map(|v| (offset + gain * *v as f64).clamp(0.0, 1.0) as f32));
    }
    Tensor::new(vec![3, size, size], planes)
}

pub fn texture_corpus(n: usize, size: usize, seed: u64) -> Result<TextureCorpus> {
    let images = (0..n)
        .map(|i| anomaly_texture(size, &mut SeededRng::derive(seed, &[0x7E, i as u64])))
        .collect::<Result<Vec<_>>>()?;
    Ok(TextureCorpus::from_images(images))
}

pub fn surface_images(n: usize, size: usize, seed: u64) -> Vec<Tensor> {
    (0..n).map(|i| surface_image(size, &mut SeededRng::derive(seed, &[0x5F, i as u64]))).collect()
}

/// Clean images, each with one synthetic defect drawn under `config`.
pub fn corrupted_surfaces(
    n: usize,
    size: usize,
    seed: u64,
    config: &DefectConfig,
    corpus: Option<&TextureCorpus>,
) -> Result<Vec<(Tensor, DefectKind)>> {
    surface_images(n, size, seed)
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let s = sample_corruption(img, &mut SeededRng::derive(seed, &[0xDF, i as u64]), config, corpus)?;
            Ok((s.image, s.spec.kind()))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyDatasetSpec {
    pub n_train: usize,
    pub n_test_good: usize,
    pub n_test_defective: usize,
    pub n_textures: usize,
    pub size: usize,
    pub seed: u64,
}

impl Default for ToyDatasetSpec {
    fn default() -> Self {
        ToyDatasetSpec { n_train: 60, n_test_good: 30, n_test_defective: 30, n_textures: 12, size: 224, seed: 0 }
    }
}

pub(crate) fn save_png(t: &Tensor, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    tensor_to_image(t)?.save(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

pub(crate) fn save_mask_png(t: &Tensor, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    plane_to_image(t)?.save(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

/// Writes `root/train/good`, `root/test/good`, `root/test/<kind>` and a
/// separate `textures` directory holding the foreign-texture corpus.
/// Test defects use seeds disjoint from anything training draws.
pub fn write_toy_dataset(root: &Path, textures: &Path, spec: &ToyDatasetSpec) -> Result<()> {
    let corpus = texture_corpus(spec.n_textures, spec.size, spec.seed)?;
    for (i, t) in corpus.images.iter().enumerate() {
        save_png(t, &textures.join(format!("tex_{i:03}.png")))?;
    }
    // The test corruptions use their own texture set so that test defects are unseen.
    let test_corpus = texture_corpus(spec.n_textures, spec.size, spec.seed ^ 0xA5A5)?;
    for (i, img) in surface_images(spec.n_train, spec.size, spec.seed).iter().enumerate() {
        save_png(img, &root.join(format!("train/good/{i:03}.png")))?;
    }
    let test_seed = spec.seed.wrapping_add(1_000_003);
    for (i, img) in surface_images(spec.n_test_good, spec.size, test_seed).iter().enumerate() {
        save_png(img, &root.join(format!("test/good/{i:03}.png")))?;
    }
    let defects = corrupted_surfaces(
        spec.n_test_defective,
        spec.size,
        test_seed ^ 0xD5,
        &DefectConfig::default(),
        Some(&test_corpus),
    )?;
    for (i, (img, kind)) in defects.iter().enumerate() {
        let dir = match kind {
            DefectKind::Textural => "textural",
            DefectKind::Structural => "structural",
            DefectKind::Blur => "blur",
        };
        save_png(img, &root.join(format!("test/{dir}/{i:03}.png")))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_seeded_and_in_range() {
        let a = surface_images(2, 32, 1);
        assert_eq!(a, surface_images(2, 32, 1));
        assert_ne!(a[0], a[1]);
        assert!(a[0].data().iter().all(|v| (0.0..=1.0).contains(v)));
        let c = texture_corpus(2, 32, 1).unwrap();
        assert_eq!(c.len(), 2);
        assert!(c.images[0].data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
