use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::preprocess::{normalize, IMAGENET_MEAN, IMAGENET_STD};
use super::FeatureStack;
use crate::error::{reject, Error, Result};
use crate::numerics::{conv2d, gaussian_blur, relu, SeededRng, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackboneSource {
    /// Seeded random strided convolutions with the declared output shapes.
    Stub { seed: u64 },
    /// ONNX export exposing the tap points as named graph outputs.
    Onnx { path: PathBuf },
}

/// Self-describing backbone configuration, stored in checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneDescriptor {
    pub source: BackboneSource,
    pub tap_points: Vec<String>,
    /// `(c, h, w)` per tap point.
    pub declared_shapes: Vec<[usize; 3]>,
    /// `(h, w)` of the network input.
    pub input_size: [usize; 2],
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Default for BackboneDescriptor {
    fn default() -> Self {
        BackboneDescriptor::stub(0)
    }
}

impl BackboneDescriptor {
    /// Two deep taps at 224×224: 136×14×14 and 384×7×7.
    pub fn stub(seed: u64) -> Self {
        BackboneDescriptor {
            source: BackboneSource::Stub { seed },
            tap_points: vec!["stage4".into(), "stage5".into()],
            declared_shapes: vec![[136, 14, 14], [384, 7, 7]],
            input_size: [224, 224],
            mean: IMAGENET_MEAN,
            std: IMAGENET_STD,
        }
    }

    pub fn fused_channels(&self) -> usize {
        self.declared_shapes.iter().map(|s| s[0]).sum()
    }

    /// Largest declared spatial size, i.e. the fused feature grid.
    pub fn fused_size(&self) -> (usize, usize) {
        let h = self.declared_shapes.iter().map(|s| s[1]).max().unwrap_or(0);
        let w = self.declared_shapes.iter().map(|s| s[2]).max().unwrap_or(0);
        (h, w)
    }
}

/// A frozen network mapping normalized N×3×H×W images to named feature maps.
pub trait FeatureExtractor: Send + Sync {
    /// Returns one N×C×H×W tensor per requested tap, in request order.
    fn extract(&self, batch: &Tensor, taps: &[String]) -> Result<Vec<Tensor>>;
}

struct StubLayer {
    name: &'static str,
    weight: Tensor,
    bias: Tensor,
    stride: usize,
}

/// Deterministic stand-in for a pre-trained classifier: 3×3 convolutions with
/// ReLU, five of them halving resolution (224 → 7 at the last stage). Each
/// strided convolution is preceded by a small Gaussian low-pass so that
/// periodic textures do not alias into phase-dependent features.
pub struct StubBackbone {
    layers: Vec<StubLayer>,
}

impl StubBackbone {
    /// `(name, c_in, c_out, stride)`.
    const PLAN: [(&'static str, usize, usize, usize); 6] = [
        ("stem", 3, 32, 2),
        ("stage2", 32, 64, 2),
        ("stage2b", 64, 64, 1),
        ("stage3", 64, 128, 2),
        ("stage4", 128, 136, 2),
        ("stage5", 136, 384, 2),
    ];

    const ANTI_ALIAS_SIGMA: f64 = 0.8;

    pub fn new(seed: u64) -> Self {
        let layers = Self::PLAN
            .iter()
            .enumerate()
            .map(|(i, &(name, cin, cout, stride))| {
                let mut rng = SeededRng::derive(seed, &[i as u64]);
                let bound = (6.0 / (cin * 9) as f64).sqrt();
                StubLayer {
                    name,
                    weight: Tensor::from_fn(vec![cout, cin, 3, 3], |_| rng.random_range(-bound..bound) as f32),
                    bias: Tensor::from_fn(vec![cout], |_| rng.random_range(-0.1..0.1) as f32),
                    stride,
                }
            })
            .collect();
        StubBackbone { layers }
    }

    pub fn layer_names() -> Vec<&'static str> {
        Self::PLAN.iter().map(|p| p.0).collect()
    }
}

impl FeatureExtractor for StubBackbone {
    fn extract(&self, batch: &Tensor, taps: &[String]) -> Result<Vec<Tensor>> {
        let deepest = taps
            .iter()
            .map(|t| {
                self.layers
                    .iter()
                    .position(|l| l.name == t)
                    .ok_or_else(|| Error::Configuration(format!("stub backbone has no tap point {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let last = deepest.iter().copied().max().unwrap_or(0);
        let mut outputs: Vec<Option<Tensor>> = vec![None; taps.len()];
        let mut x = batch.clone();
        for (i, layer) in self.layers.iter().enumerate().take(last + 1) {
            if layer.stride > 1 {
                x = gaussian_blur(&x, 5, Self::ANTI_ALIAS_SIGMA)?;
            }
            x = relu(&conv2d(&x, &layer.weight, &layer.bias, layer.stride, 1)?);
            for (slot, &d) in outputs.iter_mut().zip(&deepest) {
                if d == i {
                    *slot = Some(x.clone());
                }
            }
        }
        Ok(outputs.into_iter().map(|o| o.expect("every tap visited")).collect())
    }
}

#[cfg(feature = "onnx")]
mod onnx {
    use std::sync::Arc;

    use super::{Error, FeatureExtractor, Result, Tensor};
    use crate::error::reject;
    use tract_onnx::prelude::{
        tvec, DatumExt, Framework, InferenceModelExt, IntoRunnable, OutletId, TractError, TypedRunnableModel,
    };

    pub struct OnnxBackbone {
        plan: Arc<TypedRunnableModel>,
        taps: Vec<String>,
        input: [usize; 2],
    }

    impl OnnxBackbone {
        pub fn load(path: &std::path::Path, taps: &[String], input: [usize; 2]) -> Result<Self> {
            let cfg = |e: TractError| Error::Configuration(format!("onnx model {}: {e:#}", path.display()));
            let mut model = tract_onnx::onnx().model_for_path(path).map_err(cfg)?;
            // Tap points name graph outputs (or nodes) of the export.
            let outlets = taps
                .iter()
                .map(|t| {
                    model
                        .find_outlet_label(t)
                        .or_else(|| model.node_by_name(t).ok().map(|n| OutletId::new(n.id, 0)))
                        .ok_or_else(|| {
                            Error::Configuration(format!("onnx model {} has no output {t:?}", path.display()))
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            model.select_output_outlets(&outlets).map_err(cfg)?;
            let plan = model
                .with_input_fact(0, f32::fact([1, 3, input[0], input[1]]).into())
                .map_err(cfg)?
                .into_optimized()
                .map_err(cfg)?
                .into_runnable()
                .map_err(cfg)?;
            Ok(OnnxBackbone { plan, taps: taps.to_vec(), input })
        }
    }

    impl FeatureExtractor for OnnxBackbone {
        fn extract(&self, batch: &Tensor, taps: &[String]) -> Result<Vec<Tensor>> {
            if taps != self.taps.as_slice() {
                return Err(Error::Configuration("onnx plan was built for different tap points".into()));
            }
            let (n, _, h, w) = batch.dims4()?;
            if [h, w] != self.input {
                reject!("onnx backbone expects {:?} input, got {h}×{w}", self.input);
            }
            let mut per_tap: Vec<Vec<Tensor>> = taps.iter().map(|_| Vec::with_capacity(n)).collect();
            for item in batch.unstack() {
                let arr = tract_onnx::prelude::tract_ndarray::Array4::from_shape_vec((1, 3, h, w), item.into_data())
                    .map_err(|e| Error::RejectedInput(e.to_string()))?;
                let outputs = self
                    .plan
                    .run(tvec!(tract_onnx::prelude::Tensor::from(arr).into()))
                    .map_err(|e| Error::Configuration(format!("onnx inference failed: {e:#}")))?;
                for (slot, out) in per_tap.iter_mut().zip(outputs.iter()) {
                    let view = out
                        .to_plain_array_view::<f32>()
                        .map_err(|e| Error::Configuration(format!("onnx output is not f32: {e:#}")))?;
                    let shape: Vec<usize> = view.shape().iter().skip(1).copied().collect();
                    slot.push(Tensor::new(shape, view.iter().copied().collect())?);
                }
            }
            per_tap.iter().map(|items| Tensor::stack(items)).collect()
        }
    }
}

/// A loaded, validated backbone. Immutable and shareable across threads.
#[derive(Clone)]
pub struct BackboneAdapter {
    descriptor: BackboneDescriptor,
    engine: Arc<dyn FeatureExtractor>,
}

impl fmt::Debug for BackboneAdapter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BackboneAdapter").field("descriptor", &self.descriptor).finish_non_exhaustive()
    }
}

/// Builds the backbone and checks every tap against its declared shape on a probe image.
pub fn load_backbone(descriptor: &BackboneDescriptor) -> Result<BackboneAdapter> {
    if descriptor.tap_points.is_empty() || descriptor.tap_points.len() != descriptor.declared_shapes.len() {
        return Err(Error::Configuration(format!(
            "{} tap points with {} declared shapes",
            descriptor.tap_points.len(),
            descriptor.declared_shapes.len()
        )));
    }
    if descriptor.std.iter().any(|s| *s <= 0.0) {
        return Err(Error::Configuration("normalization std must be positive".into()));
    }
    let engine: Arc<dyn FeatureExtractor> = match &descriptor.source {
        BackboneSource::Stub { seed } => {
            let known = StubBackbone::layer_names();
            if let Some(t) = descriptor.tap_points.iter().find(|t| !known.contains(&t.as_str())) {
                return Err(Error::Configuration(format!("stub backbone has no tap point {t:?} (known: {known:?})")));
            }
            Arc::new(StubBackbone::new(*seed))
        }
        #[cfg(feature = "onnx")]
        BackboneSource::Onnx { path } => {
            if !path.is_file() {
                return Err(Error::Configuration(format!("backbone file {} does not exist", path.display())));
            }
            Arc::new(onnx::OnnxBackbone::load(path, &descriptor.tap_points, descriptor.input_size)?)
        }
        #[cfg(not(feature = "onnx"))]
        BackboneSource::Onnx { path } => {
            return Err(Error::Configuration(format!(
                "backbone {} needs ONNX support; rebuild with `--features onnx`",
                path.display()
            )))
        }
    };
    let adapter = BackboneAdapter { descriptor: descriptor.clone(), engine };
    let [h, w] = descriptor.input_size;
    let probe = adapter.engine.extract(&Tensor::zeros(vec![1, 3, h, w]), &descriptor.tap_points)?;
    for ((tap, declared), got) in descriptor.tap_points.iter().zip(&descriptor.declared_shapes).zip(&probe) {
        if got.shape()[1..] != declared[..] {
            return Err(Error::Configuration(format!(
                "tap {tap:?} produces {:?}, declared {:?}",
                &got.shape()[1..],
                declared
            )));
        }
    }
    Ok(adapter)
}

impl BackboneAdapter {
    pub fn descriptor(&self) -> &BackboneDescriptor {
        &self.descriptor
    }

    /// Per-image feature stacks for an N×3×H×W batch of [0, 1] images.
    pub fn extract_features(&self, batch: &Tensor) -> Result<Vec<FeatureStack>> {
        let (_, c, h, w) = batch.dims4()?;
        if c != 3 || [h, w] != self.descriptor.input_size {
            reject!("backbone expects N×3×{:?} input, got {:?}", self.descriptor.input_size, batch.shape());
        }
        let x = normalize(batch, &self.descriptor.mean, &self.descriptor.std)?;
        let layers = self.engine.extract(&x, &self.descriptor.tap_points)?;
        let per_layer: Vec<Vec<Tensor>> = layers.iter().map(|l| l.unstack()).collect();
        (0..batch.shape()[0]).map(|i| FeatureStack::new(per_layer.iter().map(|l| l[i].clone()).collect())).collect()
    }

    /// Extraction for a single 3×H×W image.
    pub fn extract_one(&self, image: &Tensor) -> Result<FeatureStack> {
        let (c, h, w) = image.dims3()?;
        let batch = image.clone().reshape(vec![1, c, h, w])?;
        Ok(self.extract_features(&batch)?.remove(0))
    }
}

/// Convenience wrapper matching the adapter method.
pub fn extract_features(adapter: &BackboneAdapter, batch: &Tensor) -> Result<Vec<FeatureStack>> {
    adapter.extract_features(batch)
}
