//! Spatial resampling of N×C×H×W tensors (align-corners = false convention).

use super::tensor::{Real, Tensor};
use crate::error::{reject, Result};

/// Source index pair and interpolation weight for one output coordinate.
fn bilinear_taps(out_len: usize, in_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|d| {
            let src = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(in_len - 1);
            let i1 = (i0 + 1).min(in_len - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Channelwise bilinear interpolation. Accepts C×H×W or N×C×H×W.
pub fn resize_bilinear<T: Real>(input: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    if out_h == 0 || out_w == 0 {
        reject!("resize target {out_h}×{out_w} must be at least 1×1");
    }
    let (lead, h, w) = split_spatial(input)?;
    if (h, w) == (out_h, out_w) {
        return Ok(input.clone());
    }
    let ys = bilinear_taps(out_h, h);
    let xs = bilinear_taps(out_w, w);
    let mut shape = input.shape().to_vec();
    let r = shape.len();
    shape[r - 2] = out_h;
    shape[r - 1] = out_w;
    let mut out = Tensor::zeros(shape);
    let src = input.data();
    for (plane, dst) in out.data_mut().chunks_mut(out_h * out_w).enumerate().take(lead) {
        let p = &src[plane * h * w..(plane + 1) * h * w];
        for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
            let (fy, gy) = (T::lit(fy), T::lit(1.0 - fy));
            for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                let (fx, gx) = (T::lit(fx), T::lit(1.0 - fx));
                let top = p[y0 * w + x0] * gx + p[y0 * w + x1] * fx;
                let bot = p[y1 * w + x0] * gx + p[y1 * w + x1] * fx;
                dst[oy * out_w + ox] = top * gy + bot * fy;
            }
        }
    }
    Ok(out)
}

fn nearest_index(d: usize, out_len: usize, in_len: usize) -> usize {
    ((d * in_len) / out_len).min(in_len - 1)
}

/// Nearest-neighbour resampling, `src = floor(dst · in / out)`.
pub fn resize_nearest<T: Real>(input: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    if out_h == 0 || out_w == 0 {
        reject!("resize target {out_h}×{out_w} must be at least 1×1");
    }
    let (_, h, w) = split_spatial(input)?;
    let mut shape = input.shape().to_vec();
    let r = shape.len();
    shape[r - 2] = out_h;
    shape[r - 1] = out_w;
    let mut out = Tensor::zeros(shape);
    let src = input.data();
    for (plane, dst) in out.data_mut().chunks_mut(out_h * out_w).enumerate() {
        let p = &src[plane * h * w..(plane + 1) * h * w];
        for oy in 0..out_h {
            let sy = nearest_index(oy, out_h, h);
            for ox in 0..out_w {
                dst[oy * out_w + ox] = p[sy * w + nearest_index(ox, out_w, w)];
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`resize_nearest`]: scatter-adds output gradients onto their sources.
pub fn resize_nearest_backward<T: Real>(grad_out: &Tensor<T>, in_h: usize, in_w: usize) -> Result<Tensor<T>> {
    let (_, oh, ow) = split_spatial(grad_out)?;
    let mut shape = grad_out.shape().to_vec();
    let r = shape.len();
    shape[r - 2] = in_h;
    shape[r - 1] = in_w;
    let mut grad = Tensor::zeros(shape);
    let g = grad_out.data();
    for (plane, dst) in grad.data_mut().chunks_mut(in_h * in_w).enumerate() {
        let p = &g[plane * oh * ow..(plane + 1) * oh * ow];
        for oy in 0..oh {
            let sy = nearest_index(oy, oh, in_h);
            for ox in 0..ow {
                let idx = sy * in_w + nearest_index(ox, ow, in_w);
                dst[idx] = dst[idx] + p[oy * ow + ox];
            }
        }
    }
    Ok(grad)
}

fn split_spatial<T: Real>(t: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let s = t.shape();
    if s.len() < 2 {
        reject!("resize needs at least two spatial dims, got {s:?}");
    }
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    Ok((t.len() / (h * w), h, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;

    #[test]
    fn same_size_is_identity() {
        let x = Tensor::<f32>::from_fn(vec![2, 5, 6], |i| (i as f32).sin());
        assert_eq!(resize_bilinear(&x, 5, 6).unwrap(), x);
        assert_eq!(resize_nearest(&x, 5, 6).unwrap(), x);
    }

    #[test]
    fn constant_stays_constant() {
        let x = Tensor::<f32>::full(vec![1, 3, 7, 7], 0.375);
        let y = resize_bilinear(&x, 14, 14).unwrap();
        assert!(y.data().iter().all(|v| (*v - 0.375).abs() < 1e-7));
        let z = resize_bilinear(&x, 3, 5).unwrap();
        assert!(z.data().iter().all(|v| (*v - 0.375).abs() < 1e-7));
    }

    #[test]
    fn ramp_upscale_is_analytic() {
        // value = 0.5·x + 0.25·y; align-corners=false maps dst d to src (d+0.5)/2 − 0.5,
        // clamped to the valid range [0, 6] at the borders.
        let ramp = |x: f64, y: f64| 0.5 * x + 0.25 * y;
        let x = Tensor::<f64>::from_fn(vec![1, 7, 7], |i| ramp((i % 7) as f64, (i / 7) as f64));
        let y = resize_bilinear(&x, 14, 14).unwrap();
        let src = |d: usize| ((d as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, 6.0);
        for oy in 0..14 {
            for ox in 0..14 {
                let want = ramp(src(ox), src(oy));
                assert!((y.data()[oy * 14 + ox] - want).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn rejects_empty_target() {
        let x = Tensor::<f32>::zeros(vec![1, 2, 2]);
        assert!(resize_bilinear(&x, 0, 3).is_err());
    }

    #[test]
    fn nearest_backward_is_adjoint() {
        let x = Tensor::<f64>::from_fn(vec![1, 2, 3, 3], |i| (i as f64 * 0.3).cos());
        let probe = Tensor::<f64>::from_fn(vec![1, 2, 7, 7], |i| (i as f64 * 0.11).sin());
        let g = resize_nearest_backward(&probe, 3, 3).unwrap();
        let f =
            |p: &[f64]| resize_nearest(&Tensor::new(vec![1, 2, 3, 3], p.to_vec()).unwrap(), 7, 7).unwrap().dot(&probe);
        assert!(grad_check(f, x.data(), g.data(), 1e-3).max_relative_error < 1e-8);
    }
}
