use std::f64::consts::PI;

use crate::error::{reject, Result};
use crate::numerics::{Real, Tensor};

use super::config::OneCycleConfig;

/// ADAM with bias correction. Moments are kept in f64.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Default for Adam {
    fn default() -> Self {
        Adam::new(0.9, 0.999, 1e-8)
    }
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam { beta1, beta2, eps, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update of every tensor in `params` with the matching gradient.
    pub fn step<T: Real>(&mut self, params: Vec<&mut Tensor<T>>, grads: &[Tensor<T>], lr: f64) -> Result<()> {
        if params.len() != grads.len() {
            reject!("{} parameter tensors but {} gradients", params.len(), grads.len());
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != grads.len() || self.m.iter().zip(grads).any(|(m, g)| m.len() != g.len()) {
            reject!("gradient layout changed between optimizer steps");
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((w, gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                let gi = gi.to_f64().unwrap();
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let update = lr * (*mi / bc1) / ((*vi / bc2).sqrt() + self.eps);
                *w = T::lit(w.to_f64().unwrap() - update);
            }
        }
        Ok(())
    }
}

/// One-cycle schedule: cosine warm-up from `max_lr / div_factor` to `max_lr`
/// over the first `pct_start` of steps, then cosine decay to `max_lr / final_div`.
#[derive(Clone, Debug, PartialEq)]
pub struct OneCycle {
    pub max_lr: f64,
    pub total_steps: usize,
    pub config: OneCycleConfig,
}

impl OneCycle {
    pub fn new(max_lr: f64, total_steps: usize, config: OneCycleConfig) -> Self {
        OneCycle { max_lr, total_steps, config }
    }

    pub fn initial_lr(&self) -> f64 {
        self.max_lr / self.config.div_factor
    }

    pub fn final_lr(&self) -> f64 {
        self.max_lr / self.config.final_div
    }

    /// Learning rate for zero-based `step`; steps past the end hold the final value.
    pub fn lr(&self, step: usize) -> f64 {
        let cos = |a: f64, b: f64, t: f64| b + (a - b) * 0.5 * (1.0 + (PI * t.clamp(0.0, 1.0)).cos());
        if self.total_steps <= 1 {
            return self.initial_lr();
        }
        let last = (self.total_steps - 1) as f64;
        let peak = (self.config.pct_start * self.total_steps as f64 - 1.0).clamp(0.0, last);
        let s = step as f64;
        if s <= peak {
            if peak == 0.0 {
                return self.max_lr;
            }
            cos(self.initial_lr(), self.max_lr, s / peak)
        } else {
            cos(self.max_lr, self.final_lr(), (s - peak) / (last - peak))
        }
    }
}
