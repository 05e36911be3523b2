use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{reject, Result};
use crate::numerics::{gaussian_blur, SeededRng, Tensor};

/// Binary H×W mask; `true` marks pixels replaced by the anomaly source.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnomalyMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl AnomalyMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width || bits.is_empty() {
            reject!("mask of {} bits cannot be {height}×{width}", bits.len());
        }
        Ok(AnomalyMask { height, width, bits })
    }

    pub fn filled(height: usize, width: usize, value: bool) -> Self {
        AnomalyMask { height, width, bits: vec![value; height * width] }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    /// Fraction of set pixels.
    pub fn coverage(&self) -> f64 {
        self.bits.iter().filter(|b| **b).count() as f64 / self.bits.len() as f64
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.height, self.width], self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
            .expect("mask dims are positive")
    }
}

/// `indicator(noise > threshold)` over an H×W field.
pub fn threshold_mask(noise: &Tensor, threshold: f64) -> Result<AnomalyMask> {
    let [h, w] = noise.shape()[..] else {
        reject!("noise must be an H×W field, got {:?}", noise.shape());
    };
    AnomalyMask::new(h, w, noise.data().iter().map(|&v| v as f64 > threshold).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectKind {
    Textural,
    Structural,
    Blur,
}

impl DefectKind {
    pub const ALL: [DefectKind; 3] = [DefectKind::Textural, DefectKind::Structural, DefectKind::Blur];
}

/// The anomaly source and its blending strength.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DefectSpec {
    Textural { texture: usize, opacity: f64 },
    Structural { grid: usize, opacity: f64 },
    Blur { kernel_size: usize, sigma: f64 },
}

impl DefectSpec {
    pub fn kind(&self) -> DefectKind {
        match self {
            DefectSpec::Textural { .. } => DefectKind::Textural,
            DefectSpec::Structural { .. } => DefectKind::Structural,
            DefectSpec::Blur { .. } => DefectKind::Blur,
        }
    }

    pub fn opacity(&self) -> f64 {
        match *self {
            DefectSpec::Textural { opacity, .. } | DefectSpec::Structural { opacity, .. } => opacity,
            DefectSpec::Blur { .. } => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorruptedSample {
    pub image: Tensor,
    pub mask: AnomalyMask,
    pub spec: DefectSpec,
    pub is_defective: bool,
}

fn check_image(image: &Tensor, mask: &AnomalyMask) -> Result<(usize, usize, usize)> {
    let (c, h, w) = image.dims3()?;
    if (h, w) != (mask.height, mask.width) {
        reject!("mask {}×{} does not match image {h}×{w}", mask.height, mask.width);
    }
    Ok((c, h, w))
}

/// `(1−N)⊙I + N⊙(β·S + (1−β)·I)`; unmasked pixels are copied untouched.
fn blend(image: &Tensor, source: &Tensor, mask: &AnomalyMask, opacity: f64) -> Result<Tensor> {
    let (_, h, w) = check_image(image, mask)?;
    if source.shape() != image.shape() {
        reject!("anomaly source {:?} must match image {:?}", source.shape(), image.shape());
    }
    let hw = h * w;
    let beta = opacity as f32;
    let mut out = image.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        if mask.bits[i % hw] {
            *v = (beta * source.data()[i] + (1.0 - beta) * image.data()[i]).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

fn check_opacity(opacity: f64) -> Result<()> {
    if !(opacity > 0.0 && opacity <= 1.0) {
        reject!("opacity must lie in (0, 1], got {opacity}");
    }
    Ok(())
}

fn sample(out: Tensor, mask: &AnomalyMask, spec: DefectSpec) -> CorruptedSample {
    CorruptedSample { image: out, is_defective: mask.coverage() > 0.0, mask: mask.clone(), spec }
}

/// Blends a texture (already at the image resolution) under the mask.
pub fn corrupt_textural(
    image: &Tensor,
    texture: &Tensor,
    texture_id: usize,
    mask: &AnomalyMask,
    opacity: f64,
) -> Result<CorruptedSample> {
    check_opacity(opacity)?;
    let out = blend(image, texture, mask, opacity)?;
    Ok(sample(out, mask, DefectSpec::Textural { texture: texture_id, opacity }))
}

/// The image cut into `grid`×`grid` patches.
fn patches(image: &Tensor, grid: usize) -> Result<(usize, usize)> {
    let (_, h, w) = image.dims3()?;
    if grid < 2 || h % grid != 0 || w % grid != 0 {
        reject!("patch grid {grid} must be >= 2 and divide the {h}×{w} image");
    }
    Ok((h / grid, w / grid))
}

/// Shuffled-patch copy of `image`: destination patch `p` holds source patch `perm[p]`.
pub fn shuffle_patches(image: &Tensor, grid: usize, perm: &[usize]) -> Result<Tensor> {
    let (ph, pw) = patches(image, grid)?;
    let (c, h, w) = image.dims3()?;
    if perm.len() != grid * grid {
        reject!("permutation has {} entries for {} patches", perm.len(), grid * grid);
    }
    let mut out = image.clone();
    for (dst, &src) in perm.iter().enumerate() {
        let (dy, dx) = ((dst / grid) * ph, (dst % grid) * pw);
        let (sy, sx) = ((src / grid) * ph, (src % grid) * pw);
        for ch in 0..c {
            for y in 0..ph {
                let d = (ch * h + dy + y) * w + dx;
                let s = (ch * h + sy + y) * w + sx;
                out.data_mut()[d..d + pw].copy_from_slice(&image.data()[s..s + pw]);
            }
        }
    }
    Ok(out)
}

/// Random non-identity patch permutation blended under the mask.
pub fn corrupt_structural(
    image: &Tensor,
    mask: &AnomalyMask,
    grid: usize,
    opacity: f64,
    rng: &mut SeededRng,
) -> Result<CorruptedSample> {
    check_opacity(opacity)?;
    check_image(image, mask)?;
    patches(image, grid)?;
    let mut perm: Vec<usize> = (0..grid * grid).collect();
    loop {
        perm.shuffle(rng);
        if perm.iter().enumerate().any(|(i, &p)| i != p) {
            break;
        }
    }
    let source = shuffle_patches(image, grid, &perm)?;
    let out = blend(image, &source, mask, opacity)?;
    Ok(sample(out, mask, DefectSpec::Structural { grid, opacity }))
}

/// Odd kernel sizes available to [`corrupt_blur`].
pub const BLUR_KERNEL_RANGE: (usize, usize) = (5, 15);
pub const BLUR_SIGMA_RANGE: (f64, f64) = (1.0, 4.0);

/// Gaussian blur with a random odd kernel in [5, 15] and σ in [1, 4], pasted under the mask.
pub fn corrupt_blur(image: &Tensor, mask: &AnomalyMask, rng: &mut SeededRng) -> Result<CorruptedSample> {
    corrupt_blur_with(image, mask, rng, BLUR_KERNEL_RANGE, BLUR_SIGMA_RANGE)
}

pub(crate) fn corrupt_blur_with(
    image: &Tensor,
    mask: &AnomalyMask,
    rng: &mut SeededRng,
    kernel_range: (usize, usize),
    sigma_range: (f64, f64),
) -> Result<CorruptedSample> {
    check_image(image, mask)?;
    let (lo, hi) = kernel_range;
    let odd: Vec<usize> = (lo..=hi).filter(|k| k % 2 == 1 && *k >= 3).collect();
    if odd.is_empty() || sigma_range.0 <= 0.0 || sigma_range.0 > sigma_range.1 {
        reject!("invalid blur ranges: kernel {kernel_range:?}, sigma {sigma_range:?}");
    }
    let kernel_size = odd[rng.random_range(0..odd.len())];
    let sigma =
        if sigma_range.0 == sigma_range.1 { sigma_range.0 } else { rng.random_range(sigma_range.0..sigma_range.1) };
    let source = gaussian_blur(image, kernel_size, sigma)?;
    let out = blend(image, &source, mask, 1.0)?;
    Ok(sample(out, mask, DefectSpec::Blur { kernel_size, sigma }))
}
