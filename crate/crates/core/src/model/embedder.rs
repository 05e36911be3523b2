use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{reject, Error, Result};
use crate::numerics::{
    avg_pool2d, avg_pool2d_backward, batch_norm_backward, batch_norm_forward, pointwise_conv, pointwise_conv_backward,
    relu, relu_backward, BatchNorm, BnCache, Mode, PointwiseConv, Real, SeededRng, Tensor,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    pub in_channels: usize,
    pub hidden_channels: Vec<usize>,
    pub out_channels: usize,
    pub pool_kernel: usize,
    pub pool_stride: usize,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            in_channels: 520,
            hidden_channels: vec![256, 128],
            out_channels: 64,
            pool_kernel: 2,
            pool_stride: 2,
        }
    }
}

impl EmbedderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 || self.hidden_channels.contains(&0) {
            return Err(Error::Configuration(format!("embedder channel counts must be positive: {self:?}")));
        }
        if self.pool_kernel == 0 || self.pool_stride == 0 {
            return Err(Error::Configuration("pooling kernel and stride must be positive".into()));
        }
        Ok(())
    }

    /// Σ (C_out·C_in + C_out) over convolutions plus γ and β per hidden channel.
    pub fn param_count(&self) -> usize {
        let mut cin = self.in_channels;
        let mut total = 0;
        for &h in &self.hidden_channels {
            total += h * cin + h + 2 * h;
            cin = h;
        }
        total + self.out_channels * cin + self.out_channels
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HiddenStage<T = f32> {
    pub conv: PointwiseConv<T>,
    pub bn: BatchNorm<T>,
}

/// Pointwise-convolution embedder: `[conv → BN → ReLU]* → conv → avg-pool`.
/// The last convolution has no activation so embeddings keep signed directions.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedder<T = f32> {
    pub config: EmbedderConfig,
    pub hidden: Vec<HiddenStage<T>>,
    pub head: PointwiseConv<T>,
}

/// Forward intermediates needed for backpropagation.
#[derive(Clone, Debug)]
pub struct EmbedCache<T = f32> {
    stage_inputs: Vec<Tensor<T>>,
    bn_caches: Vec<BnCache<T>>,
    relu_inputs: Vec<Tensor<T>>,
    head_input: Tensor<T>,
    pool_input_shape: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct EmbedderGrads<T = f32> {
    /// One gradient per trainable tensor, in [`Embedder::params`] order.
    pub params: Vec<Tensor<T>>,
    pub input: Tensor<T>,
}

/// Kaiming-uniform convolutions, zero biases, identity batch norms.
pub fn init_embedder(config: &EmbedderConfig, seed: u64) -> Result<Embedder> {
    config.validate()?;
    let mut rng = SeededRng::derive(seed, &[0xE3B]);
    let mut cin = config.in_channels;
    let mut hidden = Vec::new();
    for &h in &config.hidden_channels {
        hidden.push(HiddenStage { conv: PointwiseConv::kaiming_uniform(cin, h, &mut rng), bn: BatchNorm::new(h) });
        cin = h;
    }
    let head = PointwiseConv::kaiming_uniform(cin, config.out_channels, &mut rng);
    Ok(Embedder { config: config.clone(), hidden, head })
}

impl<T: Real> Embedder<T> {
    pub fn forward(&self, input: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, EmbedCache<T>)> {
        let (_, c, _, _) = input.dims4()?;
        if c != self.config.in_channels {
            reject!("embedder expects {} input channels, got {c}", self.config.in_channels);
        }
        let mut cache = EmbedCache {
            stage_inputs: Vec::new(),
            bn_caches: Vec::new(),
            relu_inputs: Vec::new(),
            head_input: Tensor::zeros(vec![1]),
            pool_input_shape: Vec::new(),
        };
        let mut x = input.clone();
        for stage in &self.hidden {
            let z = pointwise_conv(&x, &stage.conv)?;
            let (y, bc) = batch_norm_forward(&z, &stage.bn, mode)?;
            let a = relu(&y);
            cache.stage_inputs.push(x);
            cache.bn_caches.push(bc);
            cache.relu_inputs.push(y);
            x = a;
        }
        let z = pointwise_conv(&x, &self.head)?;
        cache.head_input = x;
        cache.pool_input_shape = z.shape().to_vec();
        let out = avg_pool2d(&z, self.config.pool_kernel, self.config.pool_stride)?;
        Ok((out, cache))
    }

    /// Eval-mode embedding; a pure function of the parameters and input.
    pub fn embed(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward(input, Mode::Eval)?.0)
    }

    pub fn backward(&self, cache: &EmbedCache<T>, grad_out: &Tensor<T>) -> Result<EmbedderGrads<T>> {
        let g =
            avg_pool2d_backward(grad_out, &cache.pool_input_shape, self.config.pool_kernel, self.config.pool_stride)?;
        let head = pointwise_conv_backward(&g, &cache.head_input, &self.head)?;
        let mut grads_rev: Vec<Tensor<T>> = vec![head.bias, head.weight];
        let mut g = head.input;
        for (i, stage) in self.hidden.iter().enumerate().rev() {
            let gy = relu_backward(&g, &cache.relu_inputs[i])?;
            let bn = batch_norm_backward(&gy, &cache.bn_caches[i], &stage.bn)?;
            let conv = pointwise_conv_backward(&bn.input, &cache.stage_inputs[i], &stage.conv)?;
            grads_rev.extend([bn.beta, bn.gamma, conv.bias, conv.weight]);
            g = conv.input;
        }
        grads_rev.reverse();
        Ok(EmbedderGrads { params: grads_rev, input: g })
    }

    /// Folds train-mode batch statistics into every batch norm's running estimates.
    pub fn commit_batch_stats(&mut self, cache: &EmbedCache<T>) {
        for (stage, bc) in self.hidden.iter_mut().zip(&cache.bn_caches) {
            if bc.mode == Mode::Train {
                stage.bn.update_running(bc);
            }
        }
    }

    /// Trainable tensors: per hidden stage conv weight, conv bias, γ, β; then the head.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for s in &self.hidden {
            out.extend([&s.conv.weight, &s.conv.bias, &s.bn.gamma, &s.bn.beta]);
        }
        out.extend([&self.head.weight, &self.head.bias]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for s in &mut self.hidden {
            out.push(&mut s.conv.weight);
            out.push(&mut s.conv.bias);
            out.push(&mut s.bn.gamma);
            out.push(&mut s.bn.beta);
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Every tensor including running statistics, keyed for persistence.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, s) in self.hidden.iter().enumerate() {
            out.push((format!("embedder.hidden.{i}.conv.weight"), &s.conv.weight));
            out.push((format!("embedder.hidden.{i}.conv.bias"), &s.conv.bias));
            out.push((format!("embedder.hidden.{i}.bn.gamma"), &s.bn.gamma));
            out.push((format!("embedder.hidden.{i}.bn.beta"), &s.bn.beta));
            out.push((format!("embedder.hidden.{i}.bn.running_mean"), &s.bn.running_mean));
            out.push((format!("embedder.hidden.{i}.bn.running_var"), &s.bn.running_var));
        }
        out.push(("embedder.head.weight".into(), &self.head.weight));
        out.push(("embedder.head.bias".into(), &self.head.bias));
        out
    }

    pub fn cast<U: Real>(&self) -> Embedder<U> {
        Embedder {
            config: self.config.clone(),
            hidden: self.hidden.iter().map(|s| HiddenStage { conv: s.conv.cast(), bn: s.bn.cast() }).collect(),
            head: self.head.cast(),
        }
    }
}

impl Embedder<f32> {
    /// Rebuilds an embedder from [`Embedder::named_tensors`] output.
    pub fn from_named(config: &EmbedderConfig, tensors: &mut BTreeMap<String, Tensor>) -> Result<Self> {
        let mut e = init_embedder(config, 0)?;
        let mut take = |name: String, slot: &mut Tensor| -> Result<()> {
            let t = tensors.remove(&name).ok_or_else(|| Error::Persistence(format!("missing tensor {name}")))?;
            if t.shape() != slot.shape() {
                return Err(Error::Persistence(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
            Ok(())
        };
        for (i, s) in e.hidden.iter_mut().enumerate() {
            take(format!("embedder.hidden.{i}.conv.weight"), &mut s.conv.weight)?;
            take(format!("embedder.hidden.{i}.conv.bias"), &mut s.conv.bias)?;
            take(format!("embedder.hidden.{i}.bn.gamma"), &mut s.bn.gamma)?;
            take(format!("embedder.hidden.{i}.bn.beta"), &mut s.bn.beta)?;
            take(format!("embedder.hidden.{i}.bn.running_mean"), &mut s.bn.running_mean)?;
            take(format!("embedder.hidden.{i}.bn.running_var"), &mut s.bn.running_var)?;
        }
        take("embedder.head.weight".into(), &mut e.head.weight)?;
        take("embedder.head.bias".into(), &mut e.head.bias)?;
        for s in &e.hidden {
            s.bn.validate().map_err(|err| Error::Persistence(err.to_string()))?;
        }
        Ok(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small() -> EmbedderConfig {
        EmbedderConfig { in_channels: 6, hidden_channels: vec![5], out_channels: 3, pool_kernel: 2, pool_stride: 2 }
    }

    #[test]
    fn same_seed_same_parameters() {
        assert_eq!(init_embedder(&small(), 3).unwrap(), init_embedder(&small(), 3).unwrap());
        assert_ne!(init_embedder(&small(), 3).unwrap(), init_embedder(&small(), 4).unwrap());
    }

    #[test]
    fn parameter_count_matches_config() {
        let cfg = EmbedderConfig::default();
        let e = init_embedder(&cfg, 0).unwrap();
        let by_hand = (256 * 520 + 256) + (128 * 256 + 128) + (64 * 128 + 64) + 2 * (256 + 128);
        assert_eq!(e.param_count(), by_hand);
        assert_eq!(cfg.param_count(), by_hand);
    }

    #[test]
    fn default_config_shape_propagation() {
        let e = init_embedder(&EmbedderConfig::default(), 1).unwrap();
        let mut rng = SeededRng::new(2);
        let x = Tensor::from_fn(vec![1, 520, 14, 14], |_| rng.random_range(0.0f32..1.0));
        assert_eq!(e.embed(&x).unwrap().shape(), &[1, 64, 7, 7]);
        assert!(e.embed(&Tensor::zeros(vec![1, 519, 14, 14])).is_err());
    }

    #[test]
    fn eval_embedding_is_pure() {
        let e = init_embedder(&small(), 5).unwrap();
        let mut rng = SeededRng::new(6);
        let x = Tensor::from_fn(vec![2, 6, 4, 4], |_| rng.random_range(-1.0f32..1.0));
        let before = e.clone();
        assert_eq!(e.embed(&x).unwrap(), e.embed(&x).unwrap());
        assert_eq!(e, before);
    }

    #[test]
    fn conv_relu_is_positively_homogeneous() {
        // Single conv + ReLU, no bias and no batch norm: doubling the input doubles the activations.
        let mut rng = SeededRng::new(7);
        let conv = PointwiseConv::<f64>::kaiming_uniform(4, 3, &mut rng);
        let x = Tensor::from_fn(vec![1, 4, 2, 2], |_| rng.random_range(-1.0..1.0));
        let a = relu(&pointwise_conv(&x, &conv).unwrap());
        let b = relu(&pointwise_conv(&x.scale(2.0), &conv).unwrap());
        assert!(a.scale(2.0).max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn named_roundtrip() {
        let mut e = init_embedder(&small(), 8).unwrap();
        e.hidden[0].bn.running_var.data_mut()[0] = 3.0;
        let mut map: BTreeMap<String, Tensor> = e.named_tensors().into_iter().map(|(k, v)| (k, v.clone())).collect();
        assert_eq!(Embedder::from_named(&small(), &mut map).unwrap(), e);
    }
}
