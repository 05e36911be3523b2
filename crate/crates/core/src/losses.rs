//! Cosine contrastive loss, per-layer reconstruction loss and their weighted sum.
//!
//! Scalars are accumulated in `f64` regardless of the tensor element type.

use serde::{Deserialize, Serialize};

use crate::error::{reject, Error, Result};
use crate::numerics::{Real, Tensor};

/// Whether the partner image of a pair carries a synthesized defect.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairLabel {
    Clean,
    Defective,
}

impl PairLabel {
    pub fn from_defective(is_defective: bool) -> Self {
        if is_defective {
            PairLabel::Defective
        } else {
            PairLabel::Clean
        }
    }

    pub fn is_defective(self) -> bool {
        self == PairLabel::Defective
    }
}

/// Reading of the per-position reconstruction penalty.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconstructionNorm {
    /// `½‖F_ij − R_ij‖₂`
    #[default]
    Euclidean,
    /// `½‖F_ij − R_ij‖₂²`, kept for sensitivity checks.
    Squared,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub contrastive: f64,
    pub reconstruction: f64,
    pub total: f64,
    pub alpha: f64,
}

impl LossBreakdown {
    pub fn new(reconstruction: f64, contrastive: f64, alpha: f64) -> Self {
        LossBreakdown { contrastive, reconstruction, total: total_loss(reconstruction, contrastive, alpha), alpha }
    }
}

fn dot_norms<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<(f64, f64, f64)> {
    if a.len() != b.len() {
        reject!("embedding sizes differ: {} vs {}", a.len(), b.len());
    }
    let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.data().iter().zip(b.data()) {
        let (x, y) = (x.to_f64().unwrap(), y.to_f64().unwrap());
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    let (na, nb) = (aa.sqrt(), bb.sqrt());
    if na == 0.0 || nb == 0.0 || !na.is_finite() || !nb.is_finite() {
        return Err(Error::Degenerate(format!("cosine similarity needs non-zero finite vectors (norms {na}, {nb})")));
    }
    Ok((ab, na, nb))
}

/// `a·b / (‖a‖‖b‖)` over the flattened tensors, clamped to `[-1, 1]`.
pub fn cos_sim<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    let (ab, na, nb) = dot_norms(a, b)?;
    Ok((ab / (na * nb)).clamp(-1.0, 1.0))
}

/// Cosine similarity and its gradients with respect to both arguments.
pub fn cos_sim_grad<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<(f64, Tensor<T>, Tensor<T>)> {
    let (ab, na, nb) = dot_norms(a, b)?;
    let s = ab / (na * nb);
    let inv = 1.0 / (na * nb);
    let (ka, kb) = (s / (na * na), s / (nb * nb));
    let da = Tensor::from_fn(a.shape().to_vec(), |i| {
        T::lit(b.data()[i].to_f64().unwrap() * inv - ka * a.data()[i].to_f64().unwrap())
    });
    let db = Tensor::from_fn(b.shape().to_vec(), |i| {
        T::lit(a.data()[i].to_f64().unwrap() * inv - kb * b.data()[i].to_f64().unwrap())
    });
    Ok((s, da, db))
}

/// `1 + CosSim` for a defective partner, `1 − CosSim` otherwise.
pub fn contrastive_loss<T: Real>(anchor: &Tensor<T>, partner: &Tensor<T>, label: PairLabel) -> Result<f64> {
    let s = cos_sim(anchor, partner)?;
    Ok(match label {
        PairLabel::Defective => 1.0 + s,
        PairLabel::Clean => 1.0 - s,
    })
}

/// Contrastive loss with gradients for the anchor and the partner embedding.
pub fn contrastive_loss_grad<T: Real>(
    anchor: &Tensor<T>,
    partner: &Tensor<T>,
    label: PairLabel,
) -> Result<(f64, Tensor<T>, Tensor<T>)> {
    let (s, da, db) = cos_sim_grad(anchor, partner)?;
    Ok(match label {
        PairLabel::Defective => (1.0 + s, da, db),
        PairLabel::Clean => (1.0 - s, da.scale(-T::one()), db.scale(-T::one())),
    })
}

fn check_layers<T: Real>(features: &[Tensor<T>], recon: &[Tensor<T>]) -> Result<()> {
    if features.len() != recon.len() || features.is_empty() {
        reject!("{} feature layers vs {} reconstructed layers", features.len(), recon.len());
    }
    for (f, r) in features.iter().zip(recon) {
        f.dims3()?;
        if f.shape() != r.shape() {
            reject!("layer shape {:?} vs reconstruction {:?}", f.shape(), r.shape());
        }
    }
    Ok(())
}

/// Sum over layers of the spatial mean of the per-position penalty, computed on
/// C×H×W layers of a single defect-free image.
pub fn reconstruction_loss<T: Real>(
    features: &[Tensor<T>],
    recon: &[Tensor<T>],
    norm: ReconstructionNorm,
) -> Result<f64> {
    Ok(reconstruction_loss_grad(features, recon, norm)?.0)
}

/// Reconstruction loss and its gradient with respect to each reconstructed layer.
/// Where `F_ij = R_ij` exactly the Euclidean penalty contributes zero gradient.
pub fn reconstruction_loss_grad<T: Real>(
    features: &[Tensor<T>],
    recon: &[Tensor<T>],
    norm: ReconstructionNorm,
) -> Result<(f64, Vec<Tensor<T>>)> {
    check_layers(features, recon)?;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(features.len());
    for (f, r) in features.iter().zip(recon) {
        let (c, h, w) = f.dims3()?;
        let hw = h * w;
        let (fd, rd) = (f.data(), r.data());
        let mut g = Tensor::zeros(vec![c, h, w]);
        let mut layer = 0.0;
        for p in 0..hw {
            let sq: f64 =
                (0..c).map(|ch| (fd[ch * hw + p].to_f64().unwrap() - rd[ch * hw + p].to_f64().unwrap()).powi(2)).sum();
            let (penalty, coeff) = match norm {
                ReconstructionNorm::Euclidean => {
                    let d = sq.sqrt();
                    (0.5 * d, if d > 0.0 { 0.5 / d } else { 0.0 })
                }
                ReconstructionNorm::Squared => (0.5 * sq, 1.0),
            };
            layer += penalty;
            // d/dR of penalty = −coeff · (F − R), then scaled by the spatial mean.
            for ch in 0..c {
                let diff = fd[ch * hw + p].to_f64().unwrap() - rd[ch * hw + p].to_f64().unwrap();
                g.data_mut()[ch * hw + p] = T::lit(-coeff * diff / hw as f64);
            }
        }
        total += layer / hw as f64;
        grads.push(g);
    }
    Ok((total, grads))
}

/// `reconstruction + alpha · contrastive`.
pub fn total_loss(reconstruction: f64, contrastive: f64, alpha: f64) -> f64 {
    debug_assert!(alpha > 0.0, "alpha must be positive");
    reconstruction + alpha * contrastive
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check, SeededRng};
    use rand::Rng;

    fn v(values: &[f64]) -> Tensor<f64> {
        Tensor::new(vec![values.len()], values.to_vec()).unwrap()
    }

    fn rand_t(shape: &[usize], rng: &mut SeededRng) -> Tensor<f64> {
        Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn cosine_examples() {
        let a = v(&[1.0, 2.0, -3.0]);
        assert!((cos_sim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((cos_sim(&a, &a.scale(-1.0)).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(cos_sim(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        assert!(matches!(cos_sim(&a, &v(&[0.0; 3])), Err(Error::Degenerate(_))));
    }

    #[test]
    fn contrastive_examples() {
        let e = v(&[0.3, -1.0, 2.0, 0.5]);
        assert!(contrastive_loss(&e, &e, PairLabel::Clean).unwrap().abs() < 1e-12);
        assert!(contrastive_loss(&e, &e.scale(-1.0), PairLabel::Defective).unwrap().abs() < 1e-12);
        assert!((contrastive_loss(&e, &e, PairLabel::Defective).unwrap() - 2.0).abs() < 1e-12);
        assert!(contrastive_loss(&e, &v(&[0.0; 4]), PairLabel::Clean).is_err());
    }

    #[test]
    fn reconstruction_examples() {
        let f = Tensor::new(vec![1, 1, 1], vec![3.0]).unwrap();
        let r = Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap();
        let n = ReconstructionNorm::Euclidean;
        assert_eq!(reconstruction_loss(std::slice::from_ref(&f), &[r], n).unwrap(), 1.0);
        assert_eq!(reconstruction_loss(std::slice::from_ref(&f), std::slice::from_ref(&f), n).unwrap(), 0.0);
        let wrong = Tensor::new(vec![1, 1, 2], vec![1.0, 1.0]).unwrap();
        assert!(reconstruction_loss(&[f], &[wrong], n).is_err());
    }

    #[test]
    fn total_examples() {
        assert_eq!(total_loss(0.0, 0.0, 10.0), 0.0);
        assert!((total_loss(1.5, 0.2, 10.0) - 3.5).abs() < 1e-12);
        let b = LossBreakdown::new(1.5, 0.2, 10.0);
        assert!((b.total - 3.5).abs() < 1e-12);
    }

    #[test]
    fn contrastive_gradients_match_finite_differences() {
        let mut rng = SeededRng::new(3);
        for label in [PairLabel::Clean, PairLabel::Defective] {
            let a = rand_t(&[2, 3, 3], &mut rng);
            let b = rand_t(&[2, 3, 3], &mut rng);
            let (_, da, db) = contrastive_loss_grad(&a, &b, label).unwrap();
            let fa = |p: &[f64]| contrastive_loss(&Tensor::new(vec![2, 3, 3], p.to_vec()).unwrap(), &b, label).unwrap();
            assert!(grad_check(fa, a.data(), da.data(), 1e-5).max_relative_error < 1e-5);
            let fb = |p: &[f64]| contrastive_loss(&a, &Tensor::new(vec![2, 3, 3], p.to_vec()).unwrap(), label).unwrap();
            assert!(grad_check(fb, b.data(), db.data(), 1e-5).max_relative_error < 1e-5);
        }
    }

    #[test]
    fn reconstruction_gradients_match_finite_differences() {
        let mut rng = SeededRng::new(4);
        for norm in [ReconstructionNorm::Euclidean, ReconstructionNorm::Squared] {
            let f = vec![rand_t(&[3, 4, 4], &mut rng), rand_t(&[5, 2, 2], &mut rng)];
            let r = vec![rand_t(&[3, 4, 4], &mut rng), rand_t(&[5, 2, 2], &mut rng)];
            let (_, g) = reconstruction_loss_grad(&f, &r, norm).unwrap();
            let flat: Vec<f64> = r.iter().flat_map(|t| t.data().to_vec()).collect();
            let analytic: Vec<f64> = g.iter().flat_map(|t| t.data().to_vec()).collect();
            let fwd = |p: &[f64]| {
                let r0 = Tensor::new(vec![3, 4, 4], p[..48].to_vec()).unwrap();
                let r1 = Tensor::new(vec![5, 2, 2], p[48..].to_vec()).unwrap();
                reconstruction_loss(&f, &[r0, r1], norm).unwrap()
            };
            assert!(grad_check(fwd, &flat, &analytic, 1e-5).max_relative_error < 1e-5);
        }
    }

    #[test]
    fn exact_reconstruction_has_zero_gradient() {
        let f = vec![Tensor::<f64>::full(vec![2, 2, 2], 0.5)];
        let (loss, g) = reconstruction_loss_grad(&f, &f, ReconstructionNorm::Euclidean).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g[0].data().iter().all(|v| *v == 0.0));
    }
}
