use std::time::Instant;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::detector::Detector;
use crate::bank::anomaly_score;
use crate::error::{Error, Result};
use crate::features::fuse_features;
use crate::numerics::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
}

impl StageStats {
    fn from_samples(samples: &[f64]) -> Self {
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        // Nearest-rank percentile.
        let pct = |q: f64| s[((q * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1];
        StageStats { mean_ms: s.iter().sum::<f64>() / s.len() as f64, p50_ms: pct(0.5), p95_ms: pct(0.95) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub warmup: usize,
    pub iters: usize,
    pub preprocess: StageStats,
    pub backbone: StageStats,
    /// Feature fusion plus the embedder forward pass.
    pub embed: StageStats,
    pub score: StageStats,
    pub total: StageStats,
    /// `1000 / total.mean_ms`.
    pub fps: f64,
}

impl LatencyReport {
    /// Sum of the per-stage means.
    pub fn stage_sum_ms(&self) -> f64 {
        self.preprocess.mean_ms + self.backbone.mean_ms + self.embed.mean_ms + self.score.mean_ms
    }

    /// Share of the mean total spent after the backbone.
    pub fn head_share(&self) -> f64 {
        (self.embed.mean_ms + self.score.mean_ms) / self.total.mean_ms
    }
}

/// Single-stream latency: one image per iteration, cycling through `images`.
/// The first `warmup` iterations are run and discarded.
pub fn bench_latency(detector: &Detector, images: &[RgbImage], warmup: usize, iters: usize) -> Result<LatencyReport> {
    if iters == 0 || images.is_empty() {
        return Err(Error::Configuration("benchmark needs at least one image and one iteration".into()));
    }
    let ms = |t: Instant| t.elapsed().as_secs_f64() * 1e3;
    let mut samples: Vec<Vec<f64>> = (0..5).map(|_| Vec::with_capacity(iters)).collect();
    for i in 0..warmup + iters {
        let img = &images[i % images.len()];
        let t0 = Instant::now();
        let x = detector.prepare(img)?;
        let pre = ms(t0);
        let t1 = Instant::now();
        let (c, h, w) = x.dims3()?;
        let stack = detector.adapter.extract_features(&x.reshape(vec![1, c, h, w])?)?.remove(0);
        let back = ms(t1);
        let t2 = Instant::now();
        let fused = fuse_features(&stack)?;
        let (fc, fh, fw) = fused.dims3()?;
        let emb: Tensor = detector.checkpoint.model.embed(&fused.reshape(vec![1, fc, fh, fw])?)?;
        let emb_t = ms(t2);
        let t3 = Instant::now();
        let result = anomaly_score(&emb, &detector.bank)?;
        let score_t = ms(t3);
        let total = ms(t0);
        std::hint::black_box(result);
        if i >= warmup {
            for (s, v) in samples.iter_mut().zip([pre, back, emb_t, score_t, total]) {
                s.push(v);
            }
        }
    }
    let stats: Vec<StageStats> = samples.iter().map(|s| StageStats::from_samples(s)).collect();
    let fps = 1e3 / stats[4].mean_ms;
    let mut it = stats.into_iter();
    let mut next = || it.next().expect("five stages");
    Ok(LatencyReport {
        warmup,
        iters,
        preprocess: next(),
        backbone: next(),
        embed: next(),
        score: next(),
        total: next(),
        fps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentiles() {
        let s = StageStats::from_samples(&(1..=20).map(f64::from).collect::<Vec<_>>());
        assert_eq!((s.mean_ms, s.p50_ms, s.p95_ms), (10.5, 10.0, 19.0));
        let one = StageStats::from_samples(&[3.0]);
        assert_eq!((one.p50_ms, one.p95_ms), (3.0, 3.0));
    }
}
