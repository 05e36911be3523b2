use crate::error::{reject, Error, Result};
use crate::losses::{contrastive_loss_grad, reconstruction_loss_grad, LossBreakdown, PairLabel, ReconstructionNorm};
use crate::numerics::{Mode, Real, Tensor};

use super::{CseModel, EmbedCache};

/// Fused features for one pair batch. Anchors are defect-free; `anchor_layers[l]`
/// holds the raw backbone layer `l` of every anchor as N×c_l×h_l×w_l.
#[derive(Clone, Debug)]
pub struct PairInputs<T = f32> {
    pub anchors: Tensor<T>,
    pub anchor_layers: Vec<Tensor<T>>,
    /// Partner features and labels; `None` gives a reconstruction-only objective.
    pub partners: Option<(Tensor<T>, Vec<PairLabel>)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveConfig {
    pub alpha: f64,
    pub norm: ReconstructionNorm,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig { alpha: 10.0, norm: ReconstructionNorm::Euclidean }
    }
}

/// Gradients of the batch-mean total loss.
#[derive(Clone, Debug)]
pub struct ObjectiveGrads<T = f32> {
    /// In [`CseModel::trainable_params`] order.
    pub trainable: Vec<Tensor<T>>,
}

#[derive(Clone, Debug)]
pub struct ObjectiveOutput<T = f32> {
    pub loss: LossBreakdown,
    pub grads: Option<ObjectiveGrads<T>>,
    /// Embedder cache, needed to commit train-mode batch statistics.
    pub cache: EmbedCache<T>,
}

/// Batch-mean `reconstruction + alpha · contrastive`, with gradients when
/// `with_grads` is set. The embedder sees anchors and partners as one batch.
pub fn pair_objective<T: Real>(
    model: &CseModel<T>,
    inputs: &PairInputs<T>,
    config: &ObjectiveConfig,
    mode: Mode,
    with_grads: bool,
) -> Result<ObjectiveOutput<T>> {
    let (n, ..) = inputs.anchors.dims4()?;
    if inputs.anchor_layers.len() != model.decoder.heads.len() {
        reject!("{} anchor layers for {} decoder heads", inputs.anchor_layers.len(), model.decoder.heads.len());
    }
    let x = match &inputs.partners {
        Some((p, labels)) => {
            if p.shape() != inputs.anchors.shape() || labels.len() != n {
                reject!(
                    "partner batch {:?} with {} labels vs anchors {:?}",
                    p.shape(),
                    labels.len(),
                    inputs.anchors.shape()
                );
            }
            Tensor::concat(&[&inputs.anchors, p])?
        }
        None => inputs.anchors.clone(),
    };
    let (emb, cache) = model.embedder.forward(&x, mode)?;
    if !emb.is_finite() {
        return Err(Error::Training("embedder produced non-finite values".into()));
    }
    let items = emb.unstack();
    let inv_n = 1.0 / n as f64;

    // Contrastive term on (E(I_k), E(I_m)).
    let mut contr = 0.0;
    let mut g_items: Vec<Tensor<T>> = items.iter().map(|t| Tensor::zeros(t.shape().to_vec())).collect();
    if let Some((_, labels)) = &inputs.partners {
        let k = T::lit(config.alpha * inv_n);
        for (i, &label) in labels.iter().enumerate() {
            let (l, ga, gp) = contrastive_loss_grad(&items[i], &items[n + i], label)?;
            contr += l * inv_n;
            if with_grads {
                g_items[i] = ga.scale(k);
                g_items[n + i] = gp.scale(k);
            }
        }
    }

    // Reconstruction term on the anchors only.
    let anchor_emb = Tensor::stack(&items[..n])?;
    let (recon, dcache) = model.decoder.forward(&anchor_emb)?;
    let per_layer_items: Vec<Vec<Tensor<T>>> = recon.iter().map(Tensor::unstack).collect();
    let feat_items: Vec<Vec<Tensor<T>>> = inputs.anchor_layers.iter().map(Tensor::unstack).collect();
    let mut rec = 0.0;
    let mut g_recon: Vec<Vec<Tensor<T>>> = vec![Vec::with_capacity(n); recon.len()];
    for i in 0..n {
        let f: Vec<Tensor<T>> = feat_items.iter().map(|l| l[i].clone()).collect();
        let r: Vec<Tensor<T>> = per_layer_items.iter().map(|l| l[i].clone()).collect();
        let (l, g) = reconstruction_loss_grad(&f, &r, config.norm)?;
        rec += l * inv_n;
        for (slot, gl) in g_recon.iter_mut().zip(g) {
            slot.push(gl.scale(T::lit(inv_n)));
        }
    }
    let loss = LossBreakdown::new(rec, contr, config.alpha);
    if !loss.total.is_finite() {
        return Err(Error::Training(format!("non-finite loss {loss:?}")));
    }
    if !with_grads {
        return Ok(ObjectiveOutput { loss, grads: None, cache });
    }

    let g_recon: Vec<Tensor<T>> = g_recon.iter().map(|l| Tensor::stack(l)).collect::<Result<_>>()?;
    let dgrads = model.decoder.backward(&dcache, &g_recon, model.decoder.is_trainable())?;
    for (i, g) in dgrads.embedding.unstack().into_iter().enumerate() {
        g_items[i] = g_items[i].add(&g)?;
    }
    let egrads = model.embedder.backward(&cache, &Tensor::stack(&g_items)?)?;
    let mut trainable = egrads.params;
    trainable.extend(dgrads.params);
    Ok(ObjectiveOutput { loss, grads: Some(ObjectiveGrads { trainable }), cache })
}
