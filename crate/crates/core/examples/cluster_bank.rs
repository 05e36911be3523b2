//! Builds k-means banks of increasing size from synthetic embeddings drawn
//! around three directions and scores in- and out-of-distribution queries.
//!
//! `cargo run --example cluster_bank`

use rand::Rng;

use cse::bank::{anomaly_score, build_bank, KMeansConfig};
use cse::numerics::{SeededRng, Tensor};

fn main() -> cse::Result<()> {
    let mut rng = SeededRng::new(1);
    let dim = 64 * 7 * 7;
    let modes: Vec<Vec<f32>> = (0..3).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mut sample =
        |m: &[f32], noise: f32| Tensor::from_fn(vec![64, 7, 7], |i| m[i] + rng.random_range(-noise..noise));
    let train: Vec<Tensor> = (0..60).map(|i| sample(&modes[i % 3], 0.3)).collect();
    let inlier = sample(&modes[1], 0.3);
    let outlier = sample(&vec![0.0; dim], 1.0);
    for k in [1, 2, 3, 5] {
        let bank = build_bank(&train, &KMeansConfig { k, ..Default::default() })?;
        let (a, b) = (anomaly_score(&inlier, &bank)?, anomaly_score(&outlier, &bank)?);
        println!(
            "k={k}: {} iterations, reseeded {}, inlier {:.4} (cluster {}), outlier {:.4}",
            bank.stats.iterations, bank.stats.reseeded, a.score, a.nearest_cluster, b.score
        );
    }
    Ok(())
}
