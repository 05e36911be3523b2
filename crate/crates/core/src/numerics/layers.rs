//! Pointwise convolution, batch normalization, ReLU and average pooling with
//! their analytic backward passes. Tensors are N×C×H×W.

use rand::Rng;
use rayon::prelude::*;

use super::rng::SeededRng;
use super::tensor::{gemm, Op, Real, Tensor};
use crate::error::{reject, Result};

/// 1×1 convolution parameters. `weight` is C_out×C_in×1×1, `bias` is C_out.
#[derive(Clone, Debug, PartialEq)]
pub struct PointwiseConv<T = f32> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub trainable: bool,
}

impl<T: Real> PointwiseConv<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>, trainable: bool) -> Result<Self> {
        let [cout, _cin, 1, 1] = weight.shape()[..] else {
            reject!("pointwise weight must be C_out×C_in×1×1, got {:?}", weight.shape());
        };
        if bias.shape() != [cout] {
            reject!("bias shape {:?} does not match C_out={cout}", bias.shape());
        }
        Ok(PointwiseConv { weight, bias, trainable })
    }

    /// Kaiming-uniform weights (ReLU gain, fan-in mode) and zero bias.
    pub fn kaiming_uniform(cin: usize, cout: usize, rng: &mut SeededRng) -> Self {
        let bound = (6.0 / cin as f64).sqrt();
        let weight = Tensor::from_fn(vec![cout, cin, 1, 1], |_| T::lit(rng.random_range(-bound..bound)));
        PointwiseConv { weight, bias: Tensor::zeros(vec![cout]), trainable: true }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn cast<U: Real>(&self) -> PointwiseConv<U> {
        PointwiseConv { weight: self.weight.cast(), bias: self.bias.cast(), trainable: self.trainable }
    }
}

#[derive(Clone, Debug)]
pub struct ConvGrads<T = f32> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// `out[n,o,h,w] = bias[o] + Σ_i weight[o,i] · input[n,i,h,w]`.
pub fn pointwise_conv<T: Real>(input: &Tensor<T>, conv: &PointwiseConv<T>) -> Result<Tensor<T>> {
    let (n, cin, h, w) = input.dims4()?;
    if cin != conv.in_channels() {
        reject!("input has {cin} channels, conv expects {}", conv.in_channels());
    }
    let cout = conv.out_channels();
    let hw = h * w;
    let mut out = Tensor::zeros(vec![n, cout, h, w]);
    let weight = conv.weight.data();
    let bias = conv.bias.data();
    out.data_mut().par_chunks_mut(cout * hw).zip(input.data().par_chunks(cin * hw)).for_each(|(dst, src)| {
        for (o, row) in dst.chunks_mut(hw).enumerate() {
            row.fill(bias[o]);
        }
        gemm(cout, cin, hw, weight, Op::N, src, Op::N, T::one(), dst);
    });
    Ok(out)
}

pub fn pointwise_conv_backward<T: Real>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    conv: &PointwiseConv<T>,
) -> Result<ConvGrads<T>> {
    let (n, cin, h, w) = input.dims4()?;
    let cout = conv.out_channels();
    if cin != conv.in_channels() || grad_out.shape() != [n, cout, h, w] {
        reject!(
            "backward shapes inconsistent: input {:?}, grad {:?}, weight {:?}",
            input.shape(),
            grad_out.shape(),
            conv.weight.shape()
        );
    }
    let hw = h * w;
    let weight = conv.weight.data();

    let mut grad_input = Tensor::zeros(vec![n, cin, h, w]);
    grad_input
        .data_mut()
        .par_chunks_mut(cin * hw)
        .zip(grad_out.data().par_chunks(cout * hw))
        .for_each(|(dst, g)| gemm(cin, cout, hw, weight, Op::T, g, Op::N, T::zero(), dst));

    // Sequential accumulation over the batch keeps the sum order fixed.
    let mut grad_weight = Tensor::zeros(vec![cout, cin, 1, 1]);
    let mut grad_bias = Tensor::zeros(vec![cout]);
    for (g, x) in grad_out.data().chunks(cout * hw).zip(input.data().chunks(cin * hw)) {
        gemm(cout, hw, cin, g, Op::N, x, Op::T, T::one(), grad_weight.data_mut());
        for (o, row) in g.chunks(hw).enumerate() {
            let s: T = row.iter().copied().sum();
            grad_bias.data_mut()[o] = grad_bias.data()[o] + s;
        }
    }
    Ok(ConvGrads { input: grad_input, weight: grad_weight, bias: grad_bias })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Per-channel batch normalization. `momentum` weighs the newest batch in the
/// running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm<T = f32> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: f64,
    pub eps: f64,
    pub trainable: bool,
}

impl<T: Real> BatchNorm<T> {
    pub const DEFAULT_EPS: f64 = 1e-5;
    pub const DEFAULT_MOMENTUM: f64 = 0.1;

    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: Tensor::full(vec![channels], T::one()),
            beta: Tensor::zeros(vec![channels]),
            running_mean: Tensor::zeros(vec![channels]),
            running_var: Tensor::full(vec![channels], T::one()),
            momentum: Self::DEFAULT_MOMENTUM,
            eps: Self::DEFAULT_EPS,
            trainable: true,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels();
        for t in [&self.beta, &self.running_mean, &self.running_var] {
            if t.shape() != [c] {
                reject!("batch-norm parameter shape {:?} does not match {c} channels", t.shape());
            }
        }
        if self.running_var.data().iter().any(|v| !(*v > T::zero())) {
            reject!("batch-norm running variance must be strictly positive");
        }
        Ok(())
    }

    /// Folds batch statistics from a train-mode forward into the running estimates.
    pub fn update_running(&mut self, cache: &BnCache<T>) {
        let m = self.momentum;
        let count = cache.count as f64;
        for c in 0..self.channels() {
            let unbiased = if cache.count > 1 { cache.var[c] * count / (count - 1.0) } else { cache.var[c] };
            let rm = self.running_mean.data()[c].to_f64().unwrap();
            let rv = self.running_var.data()[c].to_f64().unwrap();
            self.running_mean.data_mut()[c] = T::lit((1.0 - m) * rm + m * cache.mean[c]);
            self.running_var.data_mut()[c] = T::lit((1.0 - m) * rv + m * unbiased);
        }
    }

    pub fn cast<U: Real>(&self) -> BatchNorm<U> {
        BatchNorm {
            gamma: self.gamma.cast(),
            beta: self.beta.cast(),
            running_mean: self.running_mean.cast(),
            running_var: self.running_var.cast(),
            momentum: self.momentum,
            eps: self.eps,
            trainable: self.trainable,
        }
    }
}

/// Intermediates of a batch-norm forward pass needed by the backward pass.
#[derive(Clone, Debug)]
pub struct BnCache<T = f32> {
    pub mode: Mode,
    pub x_hat: Tensor<T>,
    pub inv_std: Vec<T>,
    /// Batch mean and biased variance (train mode only; empty in eval mode).
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: usize,
}

#[derive(Clone, Debug)]
pub struct BnGrads<T = f32> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

/// Pure forward pass; running statistics are left untouched.
pub fn batch_norm_forward<T: Real>(
    input: &Tensor<T>,
    bn: &BatchNorm<T>,
    mode: Mode,
) -> Result<(Tensor<T>, BnCache<T>)> {
    let (n, c, h, w) = input.dims4()?;
    if c != bn.channels() {
        reject!("input has {c} channels, batch norm expects {}", bn.channels());
    }
    bn.validate()?;
    let hw = h * w;
    let count = n * hw;
    let x = input.data();

    let (mean, var): (Vec<f64>, Vec<f64>) = match mode {
        Mode::Train => (0..c)
            .map(|ch| {
                let values = || (0..n).flat_map(move |b| x[(b * c + ch) * hw..(b * c + ch + 1) * hw].iter());
                let mu = values().map(|v| v.to_f64().unwrap()).sum::<f64>() / count as f64;
                let var = values().map(|v| (v.to_f64().unwrap() - mu).powi(2)).sum::<f64>() / count as f64;
                (mu, var)
            })
            .unzip(),
        Mode::Eval => (
            bn.running_mean.data().iter().map(|v| v.to_f64().unwrap()).collect(),
            bn.running_var.data().iter().map(|v| v.to_f64().unwrap()).collect(),
        ),
    };
    let mean_t: Vec<T> = mean.iter().map(|&m| T::lit(m)).collect();
    let inv_std: Vec<T> = var.iter().map(|&v| T::lit(1.0 / (v + bn.eps).sqrt())).collect();

    let mut x_hat = Tensor::zeros(vec![n, c, h, w]);
    let mut out = Tensor::zeros(vec![n, c, h, w]);
    let (gamma, beta) = (bn.gamma.data(), bn.beta.data());
    for (i, ((xh, o), &xv)) in x_hat.data_mut().iter_mut().zip(out.data_mut()).zip(x).enumerate() {
        let ch = (i / hw) % c;
        *xh = (xv - mean_t[ch]) * inv_std[ch];
        *o = gamma[ch] * *xh + beta[ch];
    }
    let cache = match mode {
        Mode::Train => BnCache { mode, x_hat, inv_std, mean, var, count },
        Mode::Eval => BnCache { mode, x_hat, inv_std, mean: Vec::new(), var: Vec::new(), count },
    };
    Ok((out, cache))
}

/// `y = γ·(x−μ)/√(σ²+ε) + β`. Train mode uses batch statistics and updates the
/// running estimates; eval mode uses the running estimates.
pub fn batch_norm<T: Real>(input: &Tensor<T>, bn: &mut BatchNorm<T>, mode: Mode) -> Result<Tensor<T>> {
    let (out, cache) = batch_norm_forward(input, bn, mode)?;
    if mode == Mode::Train {
        bn.update_running(&cache);
    }
    Ok(out)
}

pub fn batch_norm_backward<T: Real>(grad_out: &Tensor<T>, cache: &BnCache<T>, bn: &BatchNorm<T>) -> Result<BnGrads<T>> {
    if grad_out.shape() != cache.x_hat.shape() {
        reject!("grad shape {:?} does not match forward {:?}", grad_out.shape(), cache.x_hat.shape());
    }
    let (n, c, h, w) = grad_out.dims4()?;
    let hw = h * w;
    let g = grad_out.data();
    let xh = cache.x_hat.data();
    let gamma = bn.gamma.data();

    let mut sum_g = vec![0.0f64; c];
    let mut sum_gx = vec![0.0f64; c];
    for (i, (&gv, &xv)) in g.iter().zip(xh).enumerate() {
        let ch = (i / hw) % c;
        let gv = gv.to_f64().unwrap();
        sum_g[ch] += gv;
        sum_gx[ch] += gv * xv.to_f64().unwrap();
    }

    let m = cache.count as f64;
    let mut grad_input = Tensor::zeros(vec![n, c, h, w]);
    for (i, d) in grad_input.data_mut().iter_mut().enumerate() {
        let ch = (i / hw) % c;
        let scale = gamma[ch].to_f64().unwrap() * cache.inv_std[ch].to_f64().unwrap();
        let gv = g[i].to_f64().unwrap();
        *d = T::lit(match cache.mode {
            Mode::Train => scale * (gv - sum_g[ch] / m - xh[i].to_f64().unwrap() * sum_gx[ch] / m),
            Mode::Eval => scale * gv,
        });
    }
    Ok(BnGrads {
        input: grad_input,
        gamma: Tensor::from_fn(vec![c], |ch| T::lit(sum_gx[ch])),
        beta: Tensor::from_fn(vec![c], |ch| T::lit(sum_g[ch])),
    })
}

pub fn relu<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| v.max(T::zero()))
}

/// Gradient mask `1[x > 0]` applied to `grad_out`.
pub fn relu_backward<T: Real>(grad_out: &Tensor<T>, input: &Tensor<T>) -> Result<Tensor<T>> {
    grad_out.zip_map(input, |g, x| if x > T::zero() { g } else { T::zero() })
}

fn pool_out(len: usize, kernel: usize, stride: usize) -> Option<usize> {
    (kernel >= 1 && stride >= 1 && len >= kernel && (len - kernel).is_multiple_of(stride))
        .then(|| (len - kernel) / stride + 1)
}

/// Window means over `kernel`×`kernel` windows placed every `stride` pixels.
/// The windows must tile the input exactly.
pub fn avg_pool2d<T: Real>(input: &Tensor<T>, kernel: usize, stride: usize) -> Result<Tensor<T>> {
    let (n, c, h, w) = input.dims4()?;
    let (Some(oh), Some(ow)) = (pool_out(h, kernel, stride), pool_out(w, kernel, stride)) else {
        reject!("{h}×{w} input is not tiled by kernel {kernel}, stride {stride}");
    };
    let norm = T::lit(1.0 / (kernel * kernel) as f64);
    let x = input.data();
    let mut out = Tensor::zeros(vec![n, c, oh, ow]);
    for (plane, dst) in out.data_mut().chunks_mut(oh * ow).enumerate() {
        let src = &x[plane * h * w..(plane + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = T::zero();
                for ky in 0..kernel {
                    let row = (oy * stride + ky) * w + ox * stride;
                    for kx in 0..kernel {
                        acc = acc + src[row + kx];
                    }
                }
                dst[oy * ow + ox] = acc * norm;
            }
        }
    }
    Ok(out)
}

pub fn avg_pool2d_backward<T: Real>(
    grad_out: &Tensor<T>,
    input_shape: &[usize],
    kernel: usize,
    stride: usize,
) -> Result<Tensor<T>> {
    let [n, c, h, w] = input_shape[..] else {
        reject!("expected rank-4 input shape, got {input_shape:?}");
    };
    let (Some(oh), Some(ow)) = (pool_out(h, kernel, stride), pool_out(w, kernel, stride)) else {
        reject!("{h}×{w} input is not tiled by kernel {kernel}, stride {stride}");
    };
    if grad_out.shape() != [n, c, oh, ow] {
        reject!("pool grad shape {:?} does not match {:?}", grad_out.shape(), [n, c, oh, ow]);
    }
    let norm = T::lit(1.0 / (kernel * kernel) as f64);
    let g = grad_out.data();
    let mut grad = Tensor::zeros(vec![n, c, h, w]);
    for (plane, dst) in grad.data_mut().chunks_mut(h * w).enumerate() {
        let src = &g[plane * oh * ow..(plane + 1) * oh * ow];
        for oy in 0..oh {
            for ox in 0..ow {
                let v = src[oy * ow + ox] * norm;
                for ky in 0..kernel {
                    let row = (oy * stride + ky) * w + ox * stride;
                    for kx in 0..kernel {
                        dst[row + kx] = dst[row + kx] + v;
                    }
                }
            }
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;

    fn rand_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = SeededRng::new(seed);
        Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
    }

    fn rand_conv(cin: usize, cout: usize, seed: u64) -> PointwiseConv<f64> {
        let mut rng = SeededRng::new(seed);
        PointwiseConv {
            weight: Tensor::from_fn(vec![cout, cin, 1, 1], |_| rng.random_range(-1.0..1.0)),
            bias: Tensor::from_fn(vec![cout], |_| rng.random_range(-1.0..1.0)),
            trainable: true,
        }
    }

    #[test]
    fn pointwise_scalar_affine() {
        let x = Tensor::new(vec![1, 1, 1, 1], vec![2.0f32]).unwrap();
        let conv = PointwiseConv::new(
            Tensor::new(vec![1, 1, 1, 1], vec![3.0]).unwrap(),
            Tensor::new(vec![1], vec![1.0]).unwrap(),
            true,
        )
        .unwrap();
        assert_eq!(pointwise_conv(&x, &conv).unwrap().data(), &[7.0]);

        let g = pointwise_conv_backward(&Tensor::scalar(1.0f32).reshape(vec![1, 1, 1, 1]).unwrap(), &x, &conv).unwrap();
        assert_eq!(g.input.data(), &[3.0]);
        assert_eq!(g.weight.data(), &[2.0]);
        assert_eq!(g.bias.data(), &[1.0]);
    }

    #[test]
    fn pointwise_identity_weight() {
        let x = rand_tensor(&[2, 3, 4, 4], 1);
        let eye = Tensor::from_fn(vec![3, 3, 1, 1], |i| if i / 3 == i % 3 { 1.0 } else { 0.0 });
        let conv = PointwiseConv::new(eye, Tensor::zeros(vec![3]), true).unwrap();
        assert_eq!(pointwise_conv(&x, &conv).unwrap(), x);
    }

    #[test]
    fn pointwise_matches_loop_oracle() {
        let x = rand_tensor(&[2, 3, 4, 4], 2);
        let conv = rand_conv(3, 5, 3);
        let out = pointwise_conv(&x, &conv).unwrap();
        let (w, b, xd) = (conv.weight.data(), conv.bias.data(), x.data());
        for n in 0..2 {
            for o in 0..5 {
                for p in 0..16 {
                    let mut acc = b[o];
                    for i in 0..3 {
                        acc += w[o * 3 + i] * xd[(n * 3 + i) * 16 + p];
                    }
                    assert!((out.data()[(n * 5 + o) * 16 + p] - acc).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn pointwise_rejects_channel_mismatch() {
        let x = rand_tensor(&[1, 4, 2, 2], 4);
        assert!(pointwise_conv(&x, &rand_conv(3, 2, 5)).is_err());
    }

    #[test]
    fn pointwise_zero_grad_gives_zero_grads() {
        let x = rand_tensor(&[2, 3, 2, 2], 6);
        let conv = rand_conv(3, 4, 7);
        let g = pointwise_conv_backward(&Tensor::zeros(vec![2, 4, 2, 2]), &x, &conv).unwrap();
        assert!(g.input.data().iter().chain(g.weight.data()).chain(g.bias.data()).all(|v| *v == 0.0));
    }

    #[test]
    fn pointwise_backward_matches_finite_differences() {
        let x = rand_tensor(&[2, 3, 3, 3], 8);
        let conv = rand_conv(3, 4, 9);
        let probe = rand_tensor(&[2, 4, 3, 3], 10);
        let g = pointwise_conv_backward(&probe, &x, &conv).unwrap();

        let loss_w = |p: &[f64]| {
            let c = PointwiseConv {
                weight: Tensor::new(vec![4, 3, 1, 1], p[..12].to_vec()).unwrap(),
                bias: Tensor::new(vec![4], p[12..].to_vec()).unwrap(),
                trainable: true,
            };
            pointwise_conv(&x, &c).unwrap().dot(&probe)
        };
        let params: Vec<f64> = conv.weight.data().iter().chain(conv.bias.data()).copied().collect();
        let analytic: Vec<f64> = g.weight.data().iter().chain(g.bias.data()).copied().collect();
        assert!(grad_check(loss_w, &params, &analytic, 1e-3).max_relative_error < 1e-3);

        let loss_x = |p: &[f64]| {
            let xi = Tensor::new(vec![2, 3, 3, 3], p.to_vec()).unwrap();
            pointwise_conv(&xi, &conv).unwrap().dot(&probe)
        };
        assert!(grad_check(loss_x, x.data(), g.input.data(), 1e-3).max_relative_error < 1e-3);
    }

    #[test]
    fn batch_norm_eval_identity() {
        let x = rand_tensor(&[2, 3, 2, 2], 11);
        let mut bn = BatchNorm::<f64>::new(3);
        bn.eps = 0.0;
        let y = batch_norm(&x, &mut bn, Mode::Eval).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn batch_norm_constant_channel_gives_beta() {
        let x = Tensor::<f32>::full(vec![4, 2, 3, 3], 0.7);
        let mut bn = BatchNorm::<f32>::new(2);
        bn.beta = Tensor::new(vec![2], vec![0.25, -1.5]).unwrap();
        let y = batch_norm(&x, &mut bn, Mode::Train).unwrap();
        for (i, v) in y.data().iter().enumerate() {
            let want = if (i / 9) % 2 == 0 { 0.25 } else { -1.5 };
            assert_eq!(*v, want);
        }
    }

    #[test]
    fn batch_norm_train_statistics() {
        let x = rand_tensor(&[8, 3, 4, 4], 12).map(|v| 3.0 * v + 2.0);
        let mut bn = BatchNorm::<f64>::new(3);
        bn.gamma = Tensor::new(vec![3], vec![0.5, 2.0, 1.3]).unwrap();
        bn.beta = Tensor::new(vec![3], vec![-1.0, 0.0, 4.0]).unwrap();
        let y = batch_norm(&x, &mut bn, Mode::Train).unwrap();
        for ch in 0..3 {
            let vals: Vec<f64> =
                (0..8).flat_map(|b| y.data()[(b * 3 + ch) * 16..(b * 3 + ch + 1) * 16].to_vec()).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!((mean - bn.beta.data()[ch]).abs() < 1e-4);
            assert!((var - bn.gamma.data()[ch].powi(2)).abs() < 1e-4 * bn.gamma.data()[ch].powi(2) + 1e-4);
        }
        // running stats moved by momentum toward the batch statistics
        assert!(bn.running_mean.data()[0] > 0.0);
    }

    #[test]
    fn batch_norm_rejects_channel_mismatch() {
        let x = rand_tensor(&[1, 2, 2, 2], 13);
        let mut bn = BatchNorm::<f64>::new(3);
        assert!(batch_norm(&x, &mut bn, Mode::Eval).is_err());
    }

    #[test]
    fn batch_norm_eval_independent_of_batch_composition() {
        let mut bn = BatchNorm::<f64>::new(2);
        bn.running_mean = Tensor::new(vec![2], vec![0.3, -0.2]).unwrap();
        bn.running_var = Tensor::new(vec![2], vec![2.0, 0.5]).unwrap();
        let a = rand_tensor(&[1, 2, 2, 2], 14);
        let b = rand_tensor(&[1, 2, 2, 2], 15);
        let both = Tensor::concat(&[&a, &b]).unwrap();
        let ya = batch_norm(&a, &mut bn, Mode::Eval).unwrap();
        let yboth = batch_norm(&both, &mut bn, Mode::Eval).unwrap();
        assert_eq!(yboth.item(0), ya.item(0));
    }

    #[test]
    fn batch_norm_backward_matches_finite_differences() {
        for mode in [Mode::Train, Mode::Eval] {
            let x = rand_tensor(&[3, 2, 2, 2], 16);
            let mut bn = BatchNorm::<f64>::new(2);
            bn.gamma = Tensor::new(vec![2], vec![1.5, -0.7]).unwrap();
            bn.beta = Tensor::new(vec![2], vec![0.2, 0.1]).unwrap();
            bn.running_mean = Tensor::new(vec![2], vec![0.1, -0.3]).unwrap();
            bn.running_var = Tensor::new(vec![2], vec![0.8, 1.7]).unwrap();
            let probe = rand_tensor(&[3, 2, 2, 2], 17);
            let (_, cache) = batch_norm_forward(&x, &bn, mode).unwrap();
            let g = batch_norm_backward(&probe, &cache, &bn).unwrap();

            let loss_x = |p: &[f64]| {
                let xi = Tensor::new(vec![3, 2, 2, 2], p.to_vec()).unwrap();
                batch_norm_forward(&xi, &bn, mode).unwrap().0.dot(&probe)
            };
            let r = grad_check(loss_x, x.data(), g.input.data(), 1e-3);
            assert!(r.max_relative_error < 1e-3, "{mode:?}: {r:?}");

            let loss_gb = |p: &[f64]| {
                let mut b2 = bn.clone();
                b2.gamma = Tensor::new(vec![2], p[..2].to_vec()).unwrap();
                b2.beta = Tensor::new(vec![2], p[2..].to_vec()).unwrap();
                batch_norm_forward(&x, &b2, mode).unwrap().0.dot(&probe)
            };
            let params: Vec<f64> = bn.gamma.data().iter().chain(bn.beta.data()).copied().collect();
            let analytic: Vec<f64> = g.gamma.data().iter().chain(g.beta.data()).copied().collect();
            assert!(grad_check(loss_gb, &params, &analytic, 1e-3).max_relative_error < 1e-3);
        }
    }

    #[test]
    fn relu_examples() {
        let x = Tensor::new(vec![3], vec![-1.0f32, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let pos = Tensor::new(vec![3], vec![0.0f32, 1.0, 2.0]).unwrap();
        assert_eq!(relu(&pos), pos);
    }

    #[test]
    fn relu_gradient_matches_finite_differences_away_from_zero() {
        let x = rand_tensor(&[1, 2, 3, 3], 18).map(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
        let probe = rand_tensor(&[1, 2, 3, 3], 19);
        let g = relu_backward(&probe, &x).unwrap();
        let f = |p: &[f64]| relu(&Tensor::new(vec![1, 2, 3, 3], p.to_vec()).unwrap()).dot(&probe);
        assert!(grad_check(f, x.data(), g.data(), 1e-3).max_relative_error < 1e-8);
    }

    #[test]
    fn avg_pool_examples() {
        let x = Tensor::new(vec![1, 1, 2, 2], vec![1.0f32, 3.0, 5.0, 7.0]).unwrap();
        assert_eq!(avg_pool2d(&x, 2, 2).unwrap().data(), &[4.0]);
        let c = Tensor::<f32>::full(vec![1, 2, 4, 4], 0.5);
        assert!(avg_pool2d(&c, 2, 2).unwrap().data().iter().all(|v| *v == 0.5));
        assert!(avg_pool2d(&Tensor::<f32>::zeros(vec![1, 1, 5, 4]), 2, 2).is_err());
    }

    #[test]
    fn avg_pool_matches_loop_oracle() {
        let x = rand_tensor(&[1, 1, 14, 14], 20);
        let y = avg_pool2d(&x, 2, 2).unwrap();
        assert_eq!(y.shape(), &[1, 1, 7, 7]);
        let d = x.data();
        for oy in 0..7 {
            for ox in 0..7 {
                let s = d[2 * oy * 14 + 2 * ox]
                    + d[2 * oy * 14 + 2 * ox + 1]
                    + d[(2 * oy + 1) * 14 + 2 * ox]
                    + d[(2 * oy + 1) * 14 + 2 * ox + 1];
                assert_eq!(y.data()[oy * 7 + ox], s * 0.25);
            }
        }
    }

    #[test]
    fn avg_pool_backward_matches_finite_differences() {
        let x = rand_tensor(&[2, 2, 4, 4], 21);
        let probe = rand_tensor(&[2, 2, 2, 2], 22);
        let g = avg_pool2d_backward(&probe, x.shape(), 2, 2).unwrap();
        let f = |p: &[f64]| avg_pool2d(&Tensor::new(vec![2, 2, 4, 4], p.to_vec()).unwrap(), 2, 2).unwrap().dot(&probe);
        assert!(grad_check(f, x.data(), g.data(), 1e-3).max_relative_error < 1e-8);
    }
}
