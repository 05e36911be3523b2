//! Frozen backbone features: extraction at the configured tap points and
//! fusion into a single channel-concatenated tensor at the largest resolution.

pub mod backbone;
pub mod preprocess;

pub use backbone::{
    extract_features, load_backbone, BackboneAdapter, BackboneDescriptor, BackboneSource, FeatureExtractor,
    StubBackbone,
};
pub use preprocess::PreprocessProfile;

use crate::error::{reject, Result};
use crate::numerics::{resize_bilinear, Real, Tensor};

/// Per-layer C_l×H_l×W_l feature maps of one image, deepest last.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStack<T = f32> {
    layers: Vec<Tensor<T>>,
}

impl<T: Real> FeatureStack<T> {
    pub fn new(layers: Vec<Tensor<T>>) -> Result<Self> {
        if layers.is_empty() {
            reject!("a feature stack needs at least one layer");
        }
        let mut prev = (usize::MAX, usize::MAX);
        for l in &layers {
            let (_, h, w) = l.dims3()?;
            if h > prev.0 || w > prev.1 {
                reject!("feature layers must not grow spatially toward deeper layers");
            }
            prev = (h, w);
        }
        Ok(FeatureStack { layers })
    }

    pub fn layers(&self) -> &[Tensor<T>] {
        &self.layers
    }

    pub fn into_layers(self) -> Vec<Tensor<T>> {
        self.layers
    }

    pub fn shapes(&self) -> Vec<[usize; 3]> {
        self.layers.iter().map(|l| [l.shape()[0], l.shape()[1], l.shape()[2]]).collect()
    }
}

/// Bilinearly resizes every layer to the largest spatial size in the stack and
/// concatenates channels in stack order.
pub fn fuse_features<T: Real>(stack: &FeatureStack<T>) -> Result<Tensor<T>> {
    let h = stack.layers.iter().map(|l| l.shape()[1]).max().expect("non-empty");
    let w = stack.layers.iter().map(|l| l.shape()[2]).max().expect("non-empty");
    let channels: usize = stack.layers.iter().map(|l| l.shape()[0]).sum();
    let mut data = Vec::with_capacity(channels * h * w);
    for layer in &stack.layers {
        data.extend_from_slice(resize_bilinear(layer, h, w)?.data());
    }
    Tensor::new(vec![channels, h, w], data)
}

/// Fuses a list of stacks into an N×C×H×W batch.
pub fn fuse_batch<T: Real>(stacks: &[FeatureStack<T>]) -> Result<Tensor<T>> {
    let fused = stacks.iter().map(fuse_features).collect::<Result<Vec<_>>>()?;
    Tensor::stack(&fused)
}
