use std::f64::consts::{SQRT_2, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{reject, Result};
use crate::numerics::{SeededRng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerlinParams {
    /// Lattice cells across the width (first octave).
    pub grid_res_x: usize,
    /// Lattice cells across the height (first octave).
    pub grid_res_y: usize,
    pub octaves: u32,
    pub seed: u64,
}

fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// One octave of gradient noise scaled by √2 so its range is exactly [−1, 1].
fn octave(res_x: usize, res_y: usize, h: usize, w: usize, rng: &mut SeededRng) -> Vec<f64> {
    let gradients: Vec<(f64, f64)> = (0..(res_x + 1) * (res_y + 1))
        .map(|_| {
            let angle = rng.random_range(0.0..TAU);
            (angle.cos(), angle.sin())
        })
        .collect();
    let grad = |gx: usize, gy: usize| gradients[gy * (res_x + 1) + gx];
    let cell = |p: usize, len: usize, res: usize| {
        let t = p as f64 * res as f64 / len as f64;
        let i = (t.floor() as usize).min(res - 1);
        (i, t - i as f64)
    };

    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        let (cy, fy) = cell(y, h, res_y);
        for x in 0..w {
            let (cx, fx) = cell(x, w, res_x);
            let corner = |dx: usize, dy: usize| {
                let (gx, gy) = grad(cx + dx, cy + dy);
                gx * (fx - dx as f64) + gy * (fy - dy as f64)
            };
            let (u, v) = (fade(fx), fade(fy));
            let top = lerp(corner(0, 0), corner(1, 0), u);
            let bottom = lerp(corner(0, 1), corner(1, 1), u);
            out.push(SQRT_2 * lerp(top, bottom, v));
        }
    }
    out
}

/// Fractal gradient noise on an H×W grid. Octave `o` doubles the lattice
/// resolution and halves the amplitude; the sum is renormalized to [−1, 1].
pub fn perlin_noise(params: &PerlinParams, h: usize, w: usize) -> Result<Tensor> {
    if params.grid_res_x == 0 || params.grid_res_y == 0 || params.octaves == 0 {
        reject!("perlin resolution and octave count must be positive: {params:?}");
    }
    let top = 1usize << (params.octaves - 1);
    if params.grid_res_x * top > w || params.grid_res_y * top > h {
        reject!(
            "perlin lattice {}×{} (×{top} at the last octave) exceeds the {h}×{w} image",
            params.grid_res_y,
            params.grid_res_x
        );
    }
    let mut acc = vec![0.0f64; h * w];
    let mut amp_sum = 0.0;
    for o in 0..params.octaves {
        let mut rng = SeededRng::derive(params.seed, &[o as u64]);
        let f = 1usize << o;
        let amp = 0.5f64.powi(o as i32);
        amp_sum += amp;
        for (a, v) in acc.iter_mut().zip(octave(params.grid_res_x * f, params.grid_res_y * f, h, w, &mut rng)) {
            *a += amp * v;
        }
    }
    let data = acc.into_iter().map(|v| (v / amp_sum).clamp(-1.0, 1.0) as f32).collect();
    Tensor::new(vec![h, w], data)
}
