use std::path::Path;

use image::imageops::{self, FilterType};
use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{reject, Error, Result};
use crate::numerics::Tensor;

/// ImageNet per-channel statistics.
pub const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

/// How raw images are brought to the backbone input size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PreprocessProfile {
    /// Resize to `resize`×`resize`, then center-crop `crop`×`crop`.
    ResizeCrop { resize: u32, crop: u32 },
    /// Resize straight to `size`×`size`.
    ResizeOnly { size: u32 },
}

impl Default for PreprocessProfile {
    fn default() -> Self {
        PreprocessProfile::ResizeCrop { resize: 256, crop: 224 }
    }
}

impl PreprocessProfile {
    pub fn output_size(&self) -> (usize, usize) {
        match *self {
            PreprocessProfile::ResizeCrop { crop, .. } => (crop as usize, crop as usize),
            PreprocessProfile::ResizeOnly { size } => (size as usize, size as usize),
        }
    }

    pub fn apply(&self, img: &RgbImage) -> Result<Tensor> {
        match *self {
            PreprocessProfile::ResizeCrop { resize, crop } => {
                if crop > resize || crop == 0 {
                    reject!("center crop {crop} must be within resize {resize}");
                }
                let resized = imageops::resize(img, resize, resize, FilterType::Triangle);
                let off = (resize - crop) / 2;
                let cropped = imageops::crop_imm(&resized, off, off, crop, crop).to_image();
                Ok(image_to_tensor(&cropped))
            }
            PreprocessProfile::ResizeOnly { size } => {
                if size == 0 {
                    reject!("resize target must be positive");
                }
                Ok(image_to_tensor(&imageops::resize(img, size, size, FilterType::Triangle)))
            }
        }
    }
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })?;
    Ok(img.to_rgb8())
}

/// RGB8 → 3×H×W in [0, 1].
pub fn image_to_tensor(img: &RgbImage) -> Tensor {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = img.as_raw();
    Tensor::from_fn(vec![3, h, w], |i| {
        let (c, p) = (i / (h * w), i % (h * w));
        raw[p * 3 + c] as f32 / 255.0
    })
}

/// 3×H×W in [0, 1] → RGB8 (values clamped and rounded).
pub fn tensor_to_image(t: &Tensor) -> Result<RgbImage> {
    let (c, h, w) = t.dims3()?;
    if c != 3 {
        reject!("expected 3 channels, got {c}");
    }
    let d = t.data();
    let mut raw = vec![0u8; h * w * 3];
    for p in 0..h * w {
        for ch in 0..3 {
            raw[p * 3 + ch] = (d[ch * h * w + p].clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    Ok(RgbImage::from_raw(w as u32, h as u32, raw).expect("buffer sized for image"))
}

/// Grayscale H×W mask or field in [0, 1] → 8-bit image.
pub fn plane_to_image(t: &Tensor) -> Result<image::GrayImage> {
    let [h, w] = t.shape()[..] else {
        reject!("expected H×W plane, got {:?}", t.shape());
    };
    let raw = t.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    Ok(image::GrayImage::from_raw(w as u32, h as u32, raw).expect("buffer sized for image"))
}

/// Per-channel `(x − mean) / std` on an N×3×H×W or 3×H×W tensor.
pub fn normalize(t: &Tensor, mean: &[f64; 3], std: &[f64; 3]) -> Result<Tensor> {
    let s = t.shape();
    let c_axis = match s.len() {
        3 => 0,
        4 => 1,
        _ => reject!("expected an image tensor, got shape {s:?}"),
    };
    if s[c_axis] != 3 {
        reject!("normalization expects 3 channels, got {}", s[c_axis]);
    }
    let hw = s[s.len() - 2] * s[s.len() - 1];
    let mut out = t.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let c = (i / hw) % 3;
        *v = ((*v as f64 - mean[c]) / std[c]) as f32;
    }
    Ok(out)
}
