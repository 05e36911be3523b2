use rayon::prelude::*;

use super::tensor::{gemm, Op, Real, Tensor};
use crate::error::{reject, Result};

/// Normalized 1-D Gaussian taps of odd length `size`.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Result<Vec<f64>> {
    if size < 3 || size.is_multiple_of(2) {
        reject!("gaussian kernel size must be odd and >= 3, got {size}");
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        reject!("gaussian sigma must be positive, got {sigma}");
    }
    let r = (size / 2) as f64;
    let taps: Vec<f64> = (0..size).map(|i| (-(i as f64 - r).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = taps.iter().sum();
    Ok(taps.into_iter().map(|t| t / sum).collect())
}

/// Mirror index without edge repetition (`-1 → 1`, `n → n-2`).
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m < n as isize { m } else { period - m }) as usize
}

/// Separable Gaussian blur with reflect padding over every H×W plane.
pub fn gaussian_blur<T: Real>(input: &Tensor<T>, kernel_size: usize, sigma: f64) -> Result<Tensor<T>> {
    let taps = gaussian_kernel(kernel_size, sigma)?;
    let s = input.shape();
    if s.len() < 2 {
        reject!("blur needs at least two spatial dims, got {s:?}");
    }
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    let r = (kernel_size / 2) as isize;
    let mut out = Tensor::zeros(s.to_vec());
    let src = input.data();
    let mut tmp = vec![0.0f64; h * w];
    for (plane, dst) in out.data_mut().chunks_mut(h * w).enumerate() {
        let p = &src[plane * h * w..(plane + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                tmp[y * w + x] = taps
                    .iter()
                    .enumerate()
                    .map(|(k, t)| t * p[y * w + reflect_index(x as isize + k as isize - r, w)].to_f64().unwrap())
                    .sum();
            }
        }
        for y in 0..h {
            for x in 0..w {
                let v: f64 = taps
                    .iter()
                    .enumerate()
                    .map(|(k, t)| t * tmp[reflect_index(y as isize + k as isize - r, h) * w + x])
                    .sum();
                dst[y * w + x] = T::lit(v);
            }
        }
    }
    Ok(out)
}

/// Dense k×k convolution, zero padding, arbitrary stride. Forward only; used by
/// the frozen stub backbone. `weight` is C_out×C_in×k×k.
pub fn conv2d<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let (n, cin, h, w) = input.dims4()?;
    let [cout, wcin, k, k2] = weight.shape()[..] else {
        reject!("conv weight must be rank 4, got {:?}", weight.shape());
    };
    if wcin != cin || k != k2 || bias.shape() != [cout] || stride == 0 {
        reject!("conv2d shapes inconsistent: input {:?}, weight {:?}", input.shape(), weight.shape());
    }
    if h + 2 * padding < k || w + 2 * padding < k {
        reject!("input {h}×{w} smaller than kernel {k}");
    }
    let oh = (h + 2 * padding - k) / stride + 1;
    let ow = (w + 2 * padding - k) / stride + 1;
    let patch = cin * k * k;
    let ohw = oh * ow;
    let mut out = Tensor::zeros(vec![n, cout, oh, ow]);
    out.data_mut().par_chunks_mut(cout * ohw).zip(input.data().par_chunks(cin * h * w)).for_each(|(dst, src)| {
        let mut cols = vec![T::zero(); patch * ohw];
        for c in 0..cin {
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut cols[((c * k + ky) * k + kx) * ohw..][..ohw];
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix >= 0 && ix < w as isize {
                                row[oy * ow + ox] = src[(c * h + iy as usize) * w + ix as usize];
                            }
                        }
                    }
                }
            }
        }
        for (o, row) in dst.chunks_mut(ohw).enumerate() {
            row.fill(bias.data()[o]);
        }
        gemm(cout, patch, ohw, weight.data(), Op::N, &cols, Op::N, T::one(), dst);
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_normalized() {
        for size in [3, 5, 7, 15] {
            for sigma in [0.3, 1.0, 4.0, 11.0] {
                let k = gaussian_kernel(size, sigma).unwrap();
                assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }
        assert!(gaussian_kernel(4, 1.0).is_err());
        assert!(gaussian_blur(&Tensor::<f32>::zeros(vec![1, 4, 4]), 6, 1.0).is_err());
    }

    #[test]
    fn constant_image_is_unchanged() {
        let x = Tensor::<f32>::full(vec![3, 9, 11], 0.6);
        let y = gaussian_blur(&x, 7, 2.0).unwrap();
        assert!(y.data().iter().all(|v| (*v - 0.6).abs() < 1e-6));
    }

    #[test]
    fn impulse_matches_dense_convolution() {
        let (h, w) = (9, 9);
        let mut x = Tensor::<f64>::zeros(vec![1, h, w]);
        x.data_mut()[4 * w + 4] = 1.0;
        let y = gaussian_blur(&x, 5, 1.0).unwrap();
        let k = gaussian_kernel(5, 1.0).unwrap();
        for oy in 0..h {
            for ox in 0..w {
                let mut acc = 0.0;
                for dy in 0..5 {
                    for dx in 0..5 {
                        let sy = reflect_index(oy as isize + dy as isize - 2, h);
                        let sx = reflect_index(ox as isize + dx as isize - 2, w);
                        acc += k[dy] * k[dx] * x.data()[sy * w + sx];
                    }
                }
                assert!((y.data()[oy * w + ox] - acc).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn reflect_wraps_without_edge_repeat() {
        assert_eq!(reflect_index(-1, 5), 1);
        assert_eq!(reflect_index(5, 5), 3);
        assert_eq!(reflect_index(-9, 5), 1);
        assert_eq!(reflect_index(3, 1), 0);
    }

    #[test]
    fn conv2d_matches_loop_oracle() {
        let x = Tensor::<f64>::from_fn(vec![2, 3, 6, 5], |i| ((i * 7 % 13) as f64 - 6.0) / 5.0);
        let wt = Tensor::<f64>::from_fn(vec![4, 3, 3, 3], |i| ((i * 5 % 11) as f64 - 5.0) / 7.0);
        let b = Tensor::<f64>::from_fn(vec![4], |i| i as f64 * 0.1);
        let y = conv2d(&x, &wt, &b, 2, 1).unwrap();
        assert_eq!(y.shape(), &[2, 4, 3, 3]);
        for n in 0..2 {
            for o in 0..4 {
                for oy in 0..3 {
                    for ox in 0..3 {
                        let mut acc = b.data()[o];
                        for c in 0..3 {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let iy = (oy * 2 + ky) as isize - 1;
                                    let ix = (ox * 2 + kx) as isize - 1;
                                    if (0..6).contains(&iy) && (0..5).contains(&ix) {
                                        acc += wt.data()[((o * 3 + c) * 3 + ky) * 3 + kx]
                                            * x.data()[((n * 3 + c) * 6 + iy as usize) * 5 + ix as usize];
                                    }
                                }
                            }
                        }
                        assert!((y.data()[((n * 4 + o) * 3 + oy) * 3 + ox] - acc).abs() < 1e-12);
                    }
                }
            }
        }
    }
}
