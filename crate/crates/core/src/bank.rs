//! Cluster bank over defect-free embeddings and minimum-cosine-distance scoring.
//!
//! Clustering runs Lloyd iterations on L2-normalized embeddings, so Euclidean
//! assignment ranks clusters exactly as cosine distance does. Stored centroids
//! are the arithmetic means of each final cluster's raw embeddings; for `k = 1`
//! that is the plain mean of the whole set.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{reject, Error, Result};
use crate::numerics::{Real, SeededRng, Tensor};

const KIND: &str = "bank";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
    pub seed: u64,
    /// Cluster on unit-norm embeddings.
    pub normalize: bool,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig { k: 1, max_iter: 100, tol: 1e-6, seed: 0, normalize: true }
    }
}

/// Immutable set of `k` reference vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterBank {
    /// k×D.
    pub centroids: Tensor,
    /// Shape of one embedding, e.g. `[64, 7, 7]`.
    pub embedding_shape: Vec<usize>,
    /// Digest of the embedder whose outputs built this bank.
    pub embedder_digest: String,
    pub n_train: usize,
    pub stats: KMeansStats,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KMeansStats {
    pub iterations: usize,
    /// Inertia on the clustering inputs after each assignment step.
    pub inertia: Vec<f64>,
    pub reseeded: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreResult {
    /// `min_c (1 − CosSim(e, c))`, in [0, 2].
    pub score: f64,
    pub nearest_cluster: usize,
    pub distances: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// k-means++ seeding: first center uniform, then proportional to squared distance.
fn seed_centers(points: &[Vec<f64>], k: usize, rng: &mut SeededRng) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut t = rng.random_range(0.0..total);
            let mut idx = d2.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if t < *d {
                    idx = i;
                    break;
                }
                t -= d;
            }
            idx
        } else {
            rng.random_range(0..points.len())
        };
        centers.push(points[pick].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, centers.last().unwrap()));
        }
    }
    centers
}

/// Clusters `embeddings` (each of identical shape) into `config.k` centroids.
pub fn build_bank(embeddings: &[Tensor], config: &KMeansConfig) -> Result<ClusterBank> {
    let n = embeddings.len();
    if config.k == 0 || config.k > n {
        return Err(Error::Configuration(format!("k = {} needs 1 ≤ k ≤ {n} embeddings", config.k)));
    }
    let shape = embeddings[0].shape().to_vec();
    if embeddings.iter().any(|e| e.shape() != shape.as_slice()) {
        reject!("bank embeddings must share one shape");
    }
    let raw: Vec<Vec<f64>> = embeddings.iter().map(|e| e.data().iter().map(|v| *v as f64).collect()).collect();
    let points: Vec<Vec<f64>> = if config.normalize {
        raw.iter()
            .map(|v| {
                let nv = norm(v);
                if nv == 0.0 || !nv.is_finite() {
                    return Err(Error::Degenerate("cannot normalize a zero or non-finite embedding".into()));
                }
                Ok(v.iter().map(|x| x / nv).collect())
            })
            .collect::<Result<_>>()?
    } else {
        raw.clone()
    };

    let mut rng = SeededRng::derive(config.seed, &[0xC1A5]);
    let mut centers = seed_centers(&points, config.k, &mut rng);
    let mut stats = KMeansStats::default();
    let mut assign = vec![0usize; n];
    for _ in 0..config.max_iter.max(1) {
        let nd: Vec<(usize, f64)> = points.par_iter().map(|p| nearest(p, &centers)).collect();
        stats.inertia.push(nd.iter().map(|x| x.1).sum());
        assign = nd.iter().map(|x| x.0).collect();
        stats.iterations += 1;

        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; config.k];
        let mut counts = vec![0usize; config.k];
        for (p, &a) in points.iter().zip(&assign) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut shift: f64 = 0.0;
        let mut taken = vec![false; n];
        for j in 0..config.k {
            let next = if counts[j] == 0 {
                // Re-seed from the point farthest from its current center.
                stats.reseeded += 1;
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| nd[a].1.total_cmp(&nd[b].1).then(b.cmp(&a)))
                    .expect("k ≤ n");
                taken[far] = true;
                points[far].clone()
            } else {
                sums[j].iter().map(|s| s / counts[j] as f64).collect()
            };
            shift = shift.max(sq_dist(&next, &centers[j]).sqrt());
            centers[j] = next;
        }
        if shift < config.tol {
            break;
        }
    }
    let nd: Vec<(usize, f64)> = points.par_iter().map(|p| nearest(p, &centers)).collect();
    assign = nd.iter().map(|x| x.0).collect();

    // Raw-member means; a cluster emptied by the final assignment keeps its center.
    let dim = raw[0].len();
    let mut data = Vec::with_capacity(config.k * dim);
    for (j, center) in centers.iter().enumerate() {
        let members: Vec<&Vec<f64>> = raw.iter().zip(&assign).filter(|(_, &a)| a == j).map(|(r, _)| r).collect();
        let c: Vec<f64> = if members.is_empty() {
            center.clone()
        } else {
            (0..dim).map(|d| members.iter().map(|m| m[d]).sum::<f64>() / members.len() as f64).collect()
        };
        if norm(&c) == 0.0 {
            return Err(Error::Degenerate(format!("cluster {j} has a zero-norm centroid")));
        }
        data.extend(c.iter().map(|v| *v as f32));
    }
    Ok(ClusterBank {
        centroids: Tensor::new(vec![config.k, dim], data)?,
        embedding_shape: shape,
        embedder_digest: String::new(),
        n_train: n,
        stats,
    })
}

/// Score of one embedding against the bank; higher is more anomalous.
pub fn anomaly_score<T: Real>(embedding: &Tensor<T>, bank: &ClusterBank) -> Result<ScoreResult> {
    let dim = bank.dim();
    if embedding.len() != dim {
        reject!("embedding has {} values, bank expects {dim}", embedding.len());
    }
    let e: Vec<f64> = embedding.data().iter().map(|v| v.to_f64().unwrap()).collect();
    let ne = norm(&e);
    if ne == 0.0 || !ne.is_finite() {
        return Err(Error::Degenerate("cannot score a zero-norm or non-finite embedding".into()));
    }
    let distances: Vec<f64> = bank
        .centroids
        .data()
        .chunks_exact(dim)
        .map(|c| {
            let (mut dot, mut cc) = (0.0, 0.0);
            for (x, y) in e.iter().zip(c) {
                let y = *y as f64;
                dot += x * y;
                cc += y * y;
            }
            1.0 - (dot / (ne * cc.sqrt())).clamp(-1.0, 1.0)
        })
        .collect();
    let (nearest_cluster, score) =
        distances.iter().copied().enumerate().fold((0, f64::INFINITY), |b, (i, d)| if d < b.1 { (i, d) } else { b });
    Ok(ScoreResult { score, nearest_cluster, distances })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    k: usize,
    embedding_shape: Vec<usize>,
    embedder_digest: String,
    n_train: usize,
    stats: KMeansStats,
}

impl ClusterBank {
    pub fn k(&self) -> usize {
        self.centroids.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.centroids.shape()[1]
    }

    pub fn with_digest(mut self, embedder_digest: impl Into<String>) -> Self {
        self.embedder_digest = embedder_digest.into();
        self
    }

    /// Errors unless the bank was built from the embedder with `embedder_digest`.
    pub fn check_binding(&self, embedder_digest: &str) -> Result<()> {
        if self.embedder_digest != embedder_digest {
            return Err(Error::Configuration(format!(
                "bank was built for embedder {} but the checkpoint holds {}",
                short(&self.embedder_digest),
                short(embedder_digest)
            )));
        }
        Ok(())
    }

    pub fn centroid(&self, j: usize) -> &[f32] {
        &self.centroids.data()[j * self.dim()..(j + 1) * self.dim()]
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = Meta {
            k: self.k(),
            embedding_shape: self.embedding_shape.clone(),
            embedder_digest: self.embedder_digest.clone(),
            n_train: self.n_train,
            stats: self.stats.clone(),
        };
        let meta = serde_json::to_value(&meta).map_err(|e| Error::Persistence(e.to_string()))?;
        container::encode(KIND, meta, &[("centroids".into(), &self.centroids)])
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (meta, mut tensors) = container::decode(bytes, KIND)?;
        let meta: Meta =
            serde_json::from_value(meta).map_err(|e| Error::Persistence(format!("bad bank metadata: {e}")))?;
        let centroids =
            tensors.remove("centroids").ok_or_else(|| Error::Persistence("bank has no centroids".into()))?;
        let dim: usize = meta.embedding_shape.iter().product();
        if centroids.shape() != [meta.k, dim] {
            return Err(Error::Persistence(format!(
                "centroids {:?} do not match k={} dim={dim}",
                centroids.shape(),
                meta.k
            )));
        }
        Ok(ClusterBank {
            centroids,
            embedding_shape: meta.embedding_shape,
            embedder_digest: meta.embedder_digest,
            n_train: meta.n_train,
            stats: meta.stats,
        })
    }

    pub fn save(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes()?;
        container::write_file(path, &bytes)?;
        Ok(container::sha256_hex(&bytes))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&container::read_file(path)?)
    }
}

fn short(d: &str) -> &str {
    &d[..d.len().min(12)]
}
