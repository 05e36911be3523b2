use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{reject, Error, Result};
use crate::numerics::{
    pointwise_conv, pointwise_conv_backward, relu, relu_backward, resize_nearest, resize_nearest_backward,
    PointwiseConv, Real, SeededRng, Tensor,
};

/// How the reconstruction decoder is initialized and whether it learns.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderMode {
    /// Seeded random weights, never updated.
    #[default]
    RandomFrozen,
    /// Weights from a prior reconstruction-only fit, then frozen.
    TrainedBefore,
    /// Trained jointly with the embedder.
    TrainedTogether,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderConfig {
    pub mode: DecoderMode,
    pub seed: u64,
    pub hidden_channels: usize,
    /// `(c, h, w)` of each backbone layer to reconstruct.
    pub targets: Vec<[usize; 3]>,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            mode: DecoderMode::RandomFrozen,
            seed: 0,
            hidden_channels: 128,
            targets: vec![[136, 14, 14], [384, 7, 7]],
        }
    }
}

/// Per-layer head: nearest resize to the layer grid, then conv → ReLU → conv.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderHead<T = f32> {
    pub target: [usize; 3],
    pub conv1: PointwiseConv<T>,
    pub conv2: PointwiseConv<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decoder<T = f32> {
    pub mode: DecoderMode,
    pub seed: u64,
    pub embed_channels: usize,
    pub heads: Vec<DecoderHead<T>>,
}

/// Reconstructed backbone layers `R^l` for one image.
#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction<T = f32> {
    pub layers: Vec<Tensor<T>>,
}

#[derive(Clone, Debug)]
pub struct DecodeCache<T = f32> {
    embed_shape: Vec<usize>,
    resized: Vec<Tensor<T>>,
    hidden_pre: Vec<Tensor<T>>,
    hidden_post: Vec<Tensor<T>>,
}

#[derive(Clone, Debug)]
pub struct DecoderGrads<T = f32> {
    pub embedding: Tensor<T>,
    /// Parameter gradients in [`Decoder::params`] order; empty when the decoder is frozen.
    pub params: Vec<Tensor<T>>,
}

/// Builds the decoder. `TrainedBefore` copies the heads of `prior`, which must
/// come from an earlier reconstruction-only fit.
pub fn init_decoder(config: &DecoderConfig, embed_channels: usize, prior: Option<&Decoder>) -> Result<Decoder> {
    if config.targets.is_empty() || config.hidden_channels == 0 || embed_channels == 0 {
        return Err(Error::Configuration(format!("decoder needs targets and positive widths: {config:?}")));
    }
    let trainable = config.mode == DecoderMode::TrainedTogether;
    let mut heads: Vec<DecoderHead> = match (config.mode, prior) {
        (DecoderMode::TrainedBefore, None) => {
            return Err(Error::Configuration("trained_before decoder mode requires a prior reconstruction fit".into()))
        }
        (DecoderMode::TrainedBefore, Some(p)) => {
            let targets: Vec<[usize; 3]> = p.heads.iter().map(|h| h.target).collect();
            if targets != config.targets || p.embed_channels != embed_channels {
                return Err(Error::Configuration(format!(
                    "prior decoder reconstructs {targets:?} from {} channels, config needs {:?} from {embed_channels}",
                    p.embed_channels, config.targets
                )));
            }
            p.heads.clone()
        }
        _ => config
            .targets
            .iter()
            .enumerate()
            .map(|(l, &target)| {
                let mut rng = SeededRng::derive(config.seed, &[0xDEC, l as u64]);
                DecoderHead {
                    target,
                    conv1: PointwiseConv::kaiming_uniform(embed_channels, config.hidden_channels, &mut rng),
                    conv2: PointwiseConv::kaiming_uniform(config.hidden_channels, target[0], &mut rng),
                }
            })
            .collect(),
    };
    for h in &mut heads {
        h.conv1.trainable = trainable;
        h.conv2.trainable = trainable;
    }
    Ok(Decoder { mode: config.mode, seed: config.seed, embed_channels, heads })
}

impl<T: Real> Decoder<T> {
    pub fn is_trainable(&self) -> bool {
        self.mode == DecoderMode::TrainedTogether
    }

    pub fn targets(&self) -> Vec<[usize; 3]> {
        self.heads.iter().map(|h| h.target).collect()
    }

    /// Batched decode of N×E×h×w embeddings into one N×c_l×h_l×w_l tensor per layer.
    pub fn forward(&self, embedding: &Tensor<T>) -> Result<(Vec<Tensor<T>>, DecodeCache<T>)> {
        let (_, e, _, _) = embedding.dims4()?;
        if e != self.embed_channels {
            reject!("decoder expects {} embedding channels, got {e}", self.embed_channels);
        }
        let mut cache = DecodeCache {
            embed_shape: embedding.shape().to_vec(),
            resized: Vec::new(),
            hidden_pre: Vec::new(),
            hidden_post: Vec::new(),
        };
        let mut outputs = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let [_, h, w] = head.target;
            let r = resize_nearest(embedding, h, w)?;
            let pre = pointwise_conv(&r, &head.conv1)?;
            let post = relu(&pre);
            outputs.push(pointwise_conv(&post, &head.conv2)?);
            cache.resized.push(r);
            cache.hidden_pre.push(pre);
            cache.hidden_post.push(post);
        }
        Ok((outputs, cache))
    }

    pub fn decode(&self, embedding: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        Ok(self.forward(embedding)?.0)
    }

    /// Reconstruction of a single E×h×w embedding.
    pub fn reconstruct(&self, embedding: &Tensor<T>) -> Result<Reconstruction<T>> {
        let (e, h, w) = embedding.dims3()?;
        let batch = embedding.clone().reshape(vec![1, e, h, w])?;
        Ok(Reconstruction { layers: self.decode(&batch)?.into_iter().map(|t| t.item(0)).collect() })
    }

    /// Backpropagates per-layer output gradients. Parameter gradients are only
    /// produced when `with_params` is set.
    pub fn backward(&self, cache: &DecodeCache<T>, grads: &[Tensor<T>], with_params: bool) -> Result<DecoderGrads<T>> {
        if grads.len() != self.heads.len() {
            reject!("{} output gradients for {} decoder heads", grads.len(), self.heads.len());
        }
        let (eh, ew) = (cache.embed_shape[2], cache.embed_shape[3]);
        let mut g_emb = Tensor::zeros(cache.embed_shape.clone());
        let mut params = Vec::new();
        for (l, head) in self.heads.iter().enumerate() {
            let c2 = pointwise_conv_backward(&grads[l], &cache.hidden_post[l], &head.conv2)?;
            let g_pre = relu_backward(&c2.input, &cache.hidden_pre[l])?;
            let c1 = pointwise_conv_backward(&g_pre, &cache.resized[l], &head.conv1)?;
            g_emb = g_emb.add(&resize_nearest_backward(&c1.input, eh, ew)?)?;
            if with_params {
                params.extend([c1.weight, c1.bias, c2.weight, c2.bias]);
            }
        }
        Ok(DecoderGrads { embedding: g_emb, params })
    }

    /// Tensors in gradient order: per head conv1 weight, conv1 bias, conv2 weight, conv2 bias.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.heads.iter().flat_map(|h| [&h.conv1.weight, &h.conv1.bias, &h.conv2.weight, &h.conv2.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.heads
            .iter_mut()
            .flat_map(|h| [&mut h.conv1.weight, &mut h.conv1.bias, &mut h.conv2.weight, &mut h.conv2.bias])
            .collect()
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let names = ["conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias"];
        self.heads
            .iter()
            .enumerate()
            .flat_map(|(l, h)| {
                let ts = [&h.conv1.weight, &h.conv1.bias, &h.conv2.weight, &h.conv2.bias];
                names.iter().zip(ts).map(move |(n, t)| (format!("decoder.head.{l}.{n}"), t))
            })
            .collect()
    }

    /// SHA-256 over every parameter value, hex encoded.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for (name, t) in self.named_tensors() {
            hasher.update(name.as_bytes());
            hasher.update(t.to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }

    pub fn cast<U: Real>(&self) -> Decoder<U> {
        Decoder {
            mode: self.mode,
            seed: self.seed,
            embed_channels: self.embed_channels,
            heads: self
                .heads
                .iter()
                .map(|h| DecoderHead { target: h.target, conv1: h.conv1.cast(), conv2: h.conv2.cast() })
                .collect(),
        }
    }
}

impl Decoder<f32> {
    pub fn from_named(
        config: &DecoderConfig,
        embed_channels: usize,
        tensors: &mut BTreeMap<String, Tensor>,
    ) -> Result<Self> {
        let seed_cfg = DecoderConfig { mode: DecoderMode::RandomFrozen, ..config.clone() };
        let mut d = init_decoder(&seed_cfg, embed_channels, None)?;
        for (l, h) in d.heads.iter_mut().enumerate() {
            for (n, slot) in [
                ("conv1.weight", &mut h.conv1.weight),
                ("conv1.bias", &mut h.conv1.bias),
                ("conv2.weight", &mut h.conv2.weight),
                ("conv2.bias", &mut h.conv2.bias),
            ] {
                let name = format!("decoder.head.{l}.{n}");
                let t = tensors.remove(&name).ok_or_else(|| Error::Persistence(format!("missing tensor {name}")))?;
                if t.shape() != slot.shape() {
                    return Err(Error::Persistence(format!("tensor {name} has shape {:?}", t.shape())));
                }
                *slot = t;
            }
        }
        let trainable = config.mode == DecoderMode::TrainedTogether;
        for h in &mut d.heads {
            h.conv1.trainable = trainable;
            h.conv2.trainable = trainable;
        }
        d.mode = config.mode;
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn default_targets_shapes() {
        let d = init_decoder(&DecoderConfig::default(), 64, None).unwrap();
        let mut rng = SeededRng::new(1);
        let e = Tensor::from_fn(vec![64, 7, 7], |_| rng.random_range(-1.0f32..1.0));
        let r = d.reconstruct(&e).unwrap();
        let shapes: Vec<&[usize]> = r.layers.iter().map(|l| l.shape()).collect();
        assert_eq!(shapes, vec![&[136, 14, 14][..], &[384, 7, 7][..]]);
        assert_eq!(d.reconstruct(&e).unwrap(), r);
    }

    #[test]
    fn zero_embedding_gives_bias_path() {
        let mut d = init_decoder(
            &DecoderConfig { targets: vec![[3, 4, 4]], hidden_channels: 5, ..Default::default() },
            2,
            None,
        )
        .unwrap();
        d.heads[0].conv1.bias = Tensor::from_fn(vec![5], |i| i as f32 - 2.0);
        d.heads[0].conv2.bias = Tensor::from_fn(vec![3], |i| 0.5 * i as f32);
        let r = d.reconstruct(&Tensor::zeros(vec![2, 2, 2])).unwrap();
        // conv2(relu(b1)) + b2 at every position
        let h = d.heads[0].conv1.bias.map(|v| v.max(0.0));
        for o in 0..3 {
            let want: f32 = (0..5).map(|i| d.heads[0].conv2.weight.data()[o * 5 + i] * h.data()[i]).sum::<f32>()
                + d.heads[0].conv2.bias.data()[o];
            assert!(r.layers[0].data()[o * 16..(o + 1) * 16].iter().all(|v| (v - want).abs() < 1e-6));
        }
    }

    #[test]
    fn modes_and_trainability() {
        let cfg = DecoderConfig::default();
        let a = init_decoder(&cfg, 64, None).unwrap();
        assert_eq!(a, init_decoder(&cfg, 64, None).unwrap());
        assert!(!a.is_trainable() && a.heads.iter().all(|h| !h.conv1.trainable));
        let t = init_decoder(&DecoderConfig { mode: DecoderMode::TrainedTogether, ..cfg.clone() }, 64, None).unwrap();
        assert!(t.is_trainable() && t.heads.iter().all(|h| h.conv2.trainable));
        let before = DecoderConfig { mode: DecoderMode::TrainedBefore, ..cfg };
        assert!(matches!(init_decoder(&before, 64, None), Err(Error::Configuration(_))));
        let b = init_decoder(&before, 64, Some(&t)).unwrap();
        assert!(!b.is_trainable());
        assert_eq!(b.digest(), t.digest());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let cfg = DecoderConfig {
            targets: vec![[3, 4, 4], [2, 2, 2]],
            hidden_channels: 4,
            mode: DecoderMode::TrainedTogether,
            seed: 3,
        };
        let d = init_decoder(&cfg, 2, None).unwrap().cast::<f64>();
        let mut rng = SeededRng::new(4);
        let e = Tensor::from_fn(vec![2, 2, 2, 2], |_| rng.random_range(-1.0..1.0));
        let probes = vec![
            Tensor::from_fn(vec![2, 3, 4, 4], |_| rng.random_range(-1.0..1.0)),
            Tensor::from_fn(vec![2, 2, 2, 2], |_| rng.random_range(-1.0..1.0)),
        ];
        let (_, cache) = d.forward(&e).unwrap();
        let g = d.backward(&cache, &probes, true).unwrap();
        let f = |p: &[f64]| {
            let x = Tensor::new(vec![2, 2, 2, 2], p.to_vec()).unwrap();
            d.decode(&x).unwrap().iter().zip(&probes).map(|(o, pr)| o.dot(pr)).sum::<f64>()
        };
        assert!(crate::numerics::grad_check(f, e.data(), g.embedding.data(), 1e-6).max_relative_error < 1e-4);
        assert_eq!(g.params.len(), d.params().len());
    }
}
