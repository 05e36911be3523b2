//! Deterministic tensor math: the handful of layers the embedder and decoder
//! need, each with an analytic backward pass, plus a finite-difference oracle.

mod filter;
mod gradcheck;
mod layers;
mod resize;
mod rng;
mod tensor;

pub use filter::{conv2d, gaussian_blur, gaussian_kernel, reflect_index};
pub use gradcheck::{grad_check, GradCheckReport, REL_ERROR_FLOOR};
pub use layers::{
    avg_pool2d, avg_pool2d_backward, batch_norm, batch_norm_backward, batch_norm_forward, pointwise_conv,
    pointwise_conv_backward, relu, relu_backward, BatchNorm, BnCache, BnGrads, ConvGrads, Mode, PointwiseConv,
};
pub use resize::{resize_bilinear, resize_nearest, resize_nearest_backward};
pub use rng::{derive_seed, SeededRng};
pub use tensor::{Real, Tensor};
