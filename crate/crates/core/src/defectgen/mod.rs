//! Synthetic defects: a thresholded Perlin mask `N` pastes an anomaly source
//! into the image as `N⊙source + (1−N)⊙I`.
//!
//! Three sources are available and drawn with equal probability:
//! a foreign texture, a patch-shuffled copy of the image itself, and a
//! Gaussian-blurred copy of the image.

mod corrupt;
mod perlin;

use std::path::{Path, PathBuf};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

pub use corrupt::{
    corrupt_blur, corrupt_structural, corrupt_textural, shuffle_patches, threshold_mask, AnomalyMask, CorruptedSample,
    DefectKind, DefectSpec, BLUR_KERNEL_RANGE, BLUR_SIGMA_RANGE,
};
pub use perlin::{perlin_noise, PerlinParams};

use crate::error::{Error, Result};
use crate::features::preprocess::{load_rgb, PreprocessProfile};
use crate::numerics::{resize_bilinear, SeededRng, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefectConfig {
    pub textural: bool,
    pub structural: bool,
    pub blur: bool,
    /// Threshold range on the [−1, 1] noise field.
    pub threshold: (f64, f64),
    /// Accepted mask coverage range; masks outside it are redrawn.
    pub coverage: (f64, f64),
    /// Opacity range for textural and structural blending.
    pub opacity: (f64, f64),
    /// Candidate lattice resolutions, drawn independently per axis.
    pub perlin_resolutions: Vec<usize>,
    pub octaves: u32,
    pub structural_grid: usize,
    pub blur_kernel: (usize, usize),
    pub blur_sigma: (f64, f64),
    pub max_attempts: usize,
}

impl Default for DefectConfig {
    fn default() -> Self {
        DefectConfig {
            textural: true,
            structural: true,
            blur: true,
            threshold: (0.3, 0.7),
            coverage: (0.02, 0.35),
            opacity: (0.2, 1.0),
            perlin_resolutions: vec![2, 4, 8, 16],
            octaves: 1,
            structural_grid: 8,
            blur_kernel: BLUR_KERNEL_RANGE,
            blur_sigma: BLUR_SIGMA_RANGE,
            max_attempts: 20,
        }
    }
}

impl DefectConfig {
    pub fn enabled_kinds(&self) -> Vec<DefectKind> {
        DefectKind::ALL
            .into_iter()
            .filter(|k| match k {
                DefectKind::Textural => self.textural,
                DefectKind::Structural => self.structural,
                DefectKind::Blur => self.blur,
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Configuration(m));
        if self.enabled_kinds().is_empty() {
            return bad("at least one defect kind must be enabled".into());
        }
        let (lo, hi) = self.coverage;
        if !(0.0 < lo && lo <= hi && hi <= 1.0) {
            return bad(format!("coverage range {:?} must satisfy 0 < min <= max <= 1", self.coverage));
        }
        let (lo, hi) = self.opacity;
        if !(0.0 < lo && lo <= hi && hi <= 1.0) {
            return bad(format!("opacity range {:?} must lie in (0, 1]", self.opacity));
        }
        if self.threshold.0 > self.threshold.1 {
            return bad(format!("threshold range {:?} is inverted", self.threshold));
        }
        if self.perlin_resolutions.is_empty() || self.perlin_resolutions.iter().any(|r| !r.is_power_of_two()) {
            return bad(format!("perlin resolutions {:?} must be powers of two", self.perlin_resolutions));
        }
        if self.octaves == 0 || self.max_attempts == 0 {
            return bad("octaves and max_attempts must be positive".into());
        }
        Ok(())
    }
}

/// Anomaly-source images for textural defects, held at the working resolution.
#[derive(Clone, Debug, Default)]
pub struct TextureCorpus {
    pub names: Vec<String>,
    pub images: Vec<Tensor>,
}

impl TextureCorpus {
    pub fn from_images(images: Vec<Tensor>) -> Self {
        let names = (0..images.len()).map(|i| format!("texture-{i}")).collect();
        TextureCorpus { names, images }
    }

    /// Every PNG/JPEG under `root`, recursively, in lexicographic path order,
    /// resized and center-cropped to `size`×`size`.
    pub fn load_dir(root: &Path, size: u32) -> Result<Self> {
        let files = image_files(root)?;
        if files.is_empty() {
            return Err(Error::Configuration(format!("texture corpus {} holds no images", root.display())));
        }
        let profile = PreprocessProfile::ResizeCrop { resize: size, crop: size };
        let mut corpus = TextureCorpus::default();
        for path in files {
            let img = load_rgb(&path)?;
            corpus.images.push(profile.apply(&img)?);
            corpus.names.push(path.display().to_string());
        }
        Ok(corpus)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Image files under `root` (recursive), sorted.
pub fn image_files(root: &Path) -> Result<Vec<PathBuf>> {
    if !root.is_dir() {
        return Err(Error::Configuration(format!("{} is not a directory", root.display())));
    }
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(root).follow_links(true) {
        let entry = entry.map_err(|e| Error::io(root, std::io::Error::other(e.to_string())))?;
        if entry.file_type().is_file() && is_image(entry.path()) {
            out.push(entry.into_path());
        }
    }
    out.sort();
    Ok(out)
}

pub(crate) fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        .unwrap_or(false)
}

fn uniform(rng: &mut SeededRng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Draws a Perlin mask whose coverage lies in the configured range.
pub fn sample_mask(h: usize, w: usize, rng: &mut SeededRng, config: &DefectConfig) -> Result<AnomalyMask> {
    let resolutions: Vec<usize> =
        config.perlin_resolutions.iter().copied().filter(|&r| r << (config.octaves - 1) <= h.min(w)).collect();
    if resolutions.is_empty() {
        return Err(Error::Configuration(format!("no perlin resolution fits a {h}×{w} image")));
    }
    let (lo, hi) = config.coverage;
    for _ in 0..config.max_attempts {
        let params = PerlinParams {
            grid_res_x: resolutions[rng.random_range(0..resolutions.len())],
            grid_res_y: resolutions[rng.random_range(0..resolutions.len())],
            octaves: config.octaves,
            seed: rng.next_u64(),
        };
        let threshold = uniform(rng, config.threshold);
        let mask = threshold_mask(&perlin_noise(&params, h, w)?, threshold)?;
        let cov = mask.coverage();
        if cov > 0.0 && (lo..=hi).contains(&cov) {
            return Ok(mask);
        }
    }
    Err(Error::Generation(format!(
        "{} consecutive masks fell outside coverage {:?}; check threshold and coverage bounds",
        config.max_attempts, config.coverage
    )))
}

/// Draws one fresh synthetic defect for `image` (3×H×W in [0, 1]).
pub fn sample_corruption(
    image: &Tensor,
    rng: &mut SeededRng,
    config: &DefectConfig,
    corpus: Option<&TextureCorpus>,
) -> Result<CorruptedSample> {
    config.validate()?;
    let kinds = config.enabled_kinds();
    let corpus = corpus.filter(|c| !c.is_empty());
    if config.textural && corpus.is_none() {
        return Err(Error::Configuration("textural defects need a non-empty texture corpus".into()));
    }
    let (_, h, w) = image.dims3()?;
    let kind = kinds[rng.random_range(0..kinds.len())];
    let mask = sample_mask(h, w, rng, config)?;
    match kind {
        DefectKind::Textural => {
            let corpus = corpus.expect("checked above");
            let id = rng.random_range(0..corpus.len());
            let opacity = uniform(rng, config.opacity);
            let tex = &corpus.images[id];
            let tex = if tex.shape() == image.shape() { tex.clone() } else { resize_bilinear(tex, h, w)? };
            corrupt_textural(image, &tex, id, &mask, opacity)
        }
        DefectKind::Structural => {
            let opacity = uniform(rng, config.opacity);
            corrupt_structural(image, &mask, config.structural_grid, opacity, rng)
        }
        DefectKind::Blur => corrupt::corrupt_blur_with(image, &mask, rng, config.blur_kernel, config.blur_sigma),
    }
}
