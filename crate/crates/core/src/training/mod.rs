//! Pair-based training of the embedder: ADAM under a one-cycle schedule,
//! validation after every epoch, and the weights with the lowest validation
//! loss kept as the checkpoint.

mod checkpoint;
mod config;
mod optim;

pub use checkpoint::{file_digest, load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{OneCycleConfig, TrainConfig};
pub use optim::{Adam, OneCycle};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::defectgen::{sample_corruption, CorruptedSample, TextureCorpus};
use crate::error::{Error, Result};
use crate::features::{fuse_features, BackboneAdapter, FeatureStack, PreprocessProfile};
use crate::losses::{LossBreakdown, PairLabel};
use crate::model::{
    init_decoder, init_embedder, pair_objective, CseModel, Decoder, DecoderConfig, DecoderMode, ObjectiveConfig,
    PairInputs,
};
use crate::numerics::{derive_seed, Mode, SeededRng, Tensor};

/// Deterministic shuffled split into `(train, validation)`. Both sides are
/// non-empty; the training side gets `round(n · split)` items.
pub fn split_dataset<T: Clone>(items: &[T], split: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if items.len() < 2 {
        return Err(Error::Configuration(format!("need at least 2 images to split, got {}", items.len())));
    }
    if !(split > 0.0 && split < 1.0) {
        return Err(Error::Configuration(format!("split {split} must lie strictly between 0 and 1")));
    }
    let n = items.len();
    let n_train = ((n as f64 * split).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut SeededRng::derive(seed, &[0x5911]));
    let pick = |ix: &[usize]| ix.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}

/// Partner of one pair: an image index and, when defective, its corruption.
#[derive(Clone, Debug, PartialEq)]
pub struct Partner {
    pub index: usize,
    pub corruption: Option<CorruptedSample>,
}

impl Partner {
    pub fn label(&self) -> PairLabel {
        PairLabel::from_defective(self.corruption.is_some())
    }
}

/// Anchors are indices of defect-free images, used as-is.
#[derive(Clone, Debug, PartialEq)]
pub struct PairBatch {
    pub anchors: Vec<usize>,
    pub partners: Vec<Partner>,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn labels(&self) -> Vec<PairLabel> {
        self.partners.iter().map(Partner::label).collect()
    }
}

/// Draws `n_pairs` anchor/partner pairs with replacement; each partner is
/// corrupted with probability `config.p_defective`. Items are generated in
/// parallel, each from its own seed derived from one draw of `rng`.
pub fn sample_pair_batch(
    images: &[Tensor],
    rng: &mut SeededRng,
    n_pairs: usize,
    config: &TrainConfig,
    corpus: Option<&TextureCorpus>,
) -> Result<PairBatch> {
    if images.is_empty() {
        return Err(Error::Configuration("cannot draw pairs from an empty image set".into()));
    }
    let base = rng.next_u64();
    let pairs = (0..n_pairs)
        .into_par_iter()
        .map(|i| {
            let mut r = SeededRng::derive(base, &[i as u64]);
            let anchor = r.random_range(0..images.len());
            let index = r.random_range(0..images.len());
            let corruption = if r.random_bool(config.p_defective) {
                Some(sample_corruption(&images[index], &mut r, &config.defects, corpus)?)
            } else {
                None
            };
            Ok((anchor, Partner { index, corruption }))
        })
        .collect::<Result<Vec<_>>>()?;
    let (anchors, partners) = pairs.into_iter().unzip();
    Ok(PairBatch { anchors, partners })
}

/// Backbone outputs of a fixed image set, computed once.
#[derive(Clone, Debug)]
pub struct FeatureCache {
    pub fused: Vec<Tensor>,
    pub layers: Vec<Vec<Tensor>>,
}

const EXTRACT_CHUNK: usize = 8;

impl FeatureCache {
    pub fn build(adapter: &BackboneAdapter, images: &[Tensor]) -> Result<Self> {
        let mut cache =
            FeatureCache { fused: Vec::with_capacity(images.len()), layers: Vec::with_capacity(images.len()) };
        for chunk in images.chunks(EXTRACT_CHUNK) {
            for stack in adapter.extract_features(&Tensor::stack(chunk)?)? {
                cache.fused.push(fuse_features(&stack)?);
                cache.layers.push(stack.into_layers());
            }
        }
        Ok(cache)
    }
}

/// Assembles objective inputs for a batch; only defective partners go through the backbone.
pub fn batch_inputs(
    adapter: &BackboneAdapter,
    cache: &FeatureCache,
    batch: &PairBatch,
    with_partners: bool,
) -> Result<PairInputs> {
    let anchors = Tensor::stack(&batch.anchors.iter().map(|&a| cache.fused[a].clone()).collect::<Vec<_>>())?;
    let n_layers = cache.layers[0].len();
    let anchor_layers = (0..n_layers)
        .map(|l| Tensor::stack(&batch.anchors.iter().map(|&a| cache.layers[a][l].clone()).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    if !with_partners {
        return Ok(PairInputs { anchors, anchor_layers, partners: None });
    }
    let corrupted: Vec<Tensor> =
        batch.partners.iter().filter_map(|p| p.corruption.as_ref().map(|c| c.image.clone())).collect();
    let mut fresh = Vec::with_capacity(corrupted.len());
    for chunk in corrupted.chunks(EXTRACT_CHUNK) {
        let stacks: Vec<FeatureStack> = adapter.extract_features(&Tensor::stack(chunk)?)?;
        fresh.extend(stacks.iter().map(fuse_features).collect::<Result<Vec<_>>>()?);
    }
    let mut fresh = fresh.into_iter();
    let partners: Vec<Tensor> = batch
        .partners
        .iter()
        .map(|p| match p.corruption {
            Some(_) => fresh.next().expect("one extraction per corrupted partner"),
            None => cache.fused[p.index].clone(),
        })
        .collect();
    Ok(PairInputs { anchors, anchor_layers, partners: Some((Tensor::stack(&partners)?, batch.labels())) })
}

/// One ADAM update on the batch-mean total loss. Batch-norm running statistics
/// absorb this batch. Returns the loss before the update.
pub fn train_step(
    model: &mut CseModel,
    optimizer: &mut Adam,
    inputs: &PairInputs,
    objective: &ObjectiveConfig,
    lr: f64,
) -> Result<LossBreakdown> {
    let out = pair_objective(model, inputs, objective, Mode::Train, true)?;
    let grads = out.grads.expect("requested gradients");
    if grads.trainable.iter().any(|g| !g.is_finite()) {
        return Err(Error::Training(format!("non-finite gradient at loss {:?}", out.loss)));
    }
    model.embedder.commit_batch_stats(&out.cache);
    optimizer.step(model.trainable_params_mut(), &grads.trainable, lr)?;
    Ok(out.loss)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Learning rate of the last step in the epoch.
    pub lr: f64,
    pub train: LossBreakdown,
    pub val: LossBreakdown,
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
}

/// Inputs to [`fit`] besides the images and the config.
#[derive(Clone, Copy, Debug)]
pub struct FitContext<'a> {
    pub adapter: &'a BackboneAdapter,
    pub corpus: Option<&'a TextureCorpus>,
    pub preprocess: PreprocessProfile,
    /// Decoder from [`pretrain_decoder`], required for `trained_before` mode.
    pub prior_decoder: Option<&'a Decoder>,
}

const SEED_EMBEDDER: u64 = 1;
const SEED_DECODER: u64 = 2;
const SEED_TRAIN: u64 = 3;
const SEED_VAL: u64 = 4;
const SEED_PRETRAIN: u64 = 5;

fn mean_loss(parts: &[(LossBreakdown, usize)], alpha: f64) -> LossBreakdown {
    let n: usize = parts.iter().map(|p| p.1).sum();
    let w = |f: fn(&LossBreakdown) -> f64| parts.iter().map(|(l, k)| f(l) * *k as f64).sum::<f64>() / n as f64;
    LossBreakdown::new(w(|l| l.reconstruction), w(|l| l.contrastive), alpha)
}

/// Trains on the defect-free `images` (3×H×W in [0, 1]), holding out a
/// validation share, and returns the checkpoint with the lowest validation loss.
pub fn fit(images: &[Tensor], ctx: &FitContext, config: &TrainConfig) -> Result<FitOutcome> {
    run(images, ctx, config, config.decoder_mode, ctx.prior_decoder, false, config.seed)
}

/// Reconstruction-only fit of a jointly trained decoder on defect-free images.
/// The returned decoder is frozen and feeds `trained_before` mode.
pub fn pretrain_decoder(images: &[Tensor], ctx: &FitContext, config: &TrainConfig) -> Result<Decoder> {
    let seed = derive_seed(config.seed, &[SEED_PRETRAIN]);
    let out = run(images, ctx, config, DecoderMode::TrainedTogether, None, true, seed)?;
    let mut decoder = out.checkpoint.model.decoder;
    decoder.mode = DecoderMode::TrainedBefore;
    for h in &mut decoder.heads {
        h.conv1.trainable = false;
        h.conv2.trainable = false;
    }
    Ok(decoder)
}

fn run(
    images: &[Tensor],
    ctx: &FitContext,
    config: &TrainConfig,
    mode: DecoderMode,
    prior: Option<&Decoder>,
    recon_only: bool,
    seed: u64,
) -> Result<FitOutcome> {
    config.validate()?;
    let desc = ctx.adapter.descriptor();
    if config.embedder.in_channels != desc.fused_channels() {
        return Err(Error::Configuration(format!(
            "embedder expects {} input channels but the backbone fuses to {}",
            config.embedder.in_channels,
            desc.fused_channels()
        )));
    }
    if config.p_defective > 0.0 && config.defects.textural && ctx.corpus.is_none_or(|c| c.is_empty()) && !recon_only {
        return Err(Error::Configuration("textural defects are enabled but no texture corpus was given".into()));
    }
    let (train, val) = split_dataset(images, config.split, seed)?;
    let decoder_config = DecoderConfig {
        mode,
        seed: derive_seed(seed, &[SEED_DECODER]),
        hidden_channels: config.decoder_hidden,
        targets: desc.declared_shapes.clone(),
    };
    let embedder = init_embedder(&config.embedder, derive_seed(seed, &[SEED_EMBEDDER]))?;
    let decoder = init_decoder(&decoder_config, config.embedder.out_channels, prior)?;
    let mut model = CseModel { embedder, decoder };
    let objective = ObjectiveConfig { alpha: config.alpha, norm: config.reconstruction_norm };

    let train_cache = FeatureCache::build(ctx.adapter, &train)?;
    let val_cache = FeatureCache::build(ctx.adapter, &val)?;
    let steps = config.steps_per_epoch.unwrap_or(train.len().div_ceil(config.batch_size));
    let val_pairs = config.val_pairs.unwrap_or(val.len());
    let schedule = OneCycle::new(config.lr, steps * config.epochs, config.one_cycle.clone());
    let mut optimizer = Adam::default();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, CseModel)> = None;

    for epoch in 0..config.epochs {
        let mut rng = SeededRng::derive(seed, &[SEED_TRAIN, epoch as u64]);
        let mut parts = Vec::with_capacity(steps);
        let mut lr = 0.0;
        for s in 0..steps {
            lr = schedule.lr(epoch * steps + s);
            let batch = sample_pair_batch(&train, &mut rng, config.batch_size, config, ctx.corpus)?;
            let inputs = batch_inputs(ctx.adapter, &train_cache, &batch, !recon_only)?;
            parts.push((train_step(&mut model, &mut optimizer, &inputs, &objective, lr)?, batch.len()));
        }
        let train_loss = mean_loss(&parts, config.alpha);

        let mut vrng = SeededRng::derive(seed, &[SEED_VAL, epoch as u64]);
        let mut vparts = Vec::new();
        let mut left = val_pairs;
        while left > 0 {
            let n = left.min(config.batch_size);
            left -= n;
            let batch = sample_pair_batch(&val, &mut vrng, n, config, ctx.corpus)?;
            let inputs = batch_inputs(ctx.adapter, &val_cache, &batch, !recon_only)?;
            vparts.push((pair_objective(&model, &inputs, &objective, Mode::Eval, false)?.loss, n));
        }
        let val_loss = mean_loss(&vparts, config.alpha);
        log::info!(
            "epoch {:>3}/{} lr {lr:.3e} train {:.5} val {:.5} (recon {:.5}, contr {:.5})",
            epoch + 1,
            config.epochs,
            train_loss.total,
            val_loss.total,
            val_loss.reconstruction,
            val_loss.contrastive
        );
        if best.as_ref().is_none_or(|b| val_loss.total < b.0) {
            best = Some((val_loss.total, epoch, model.clone()));
        }
        history.push(EpochRecord { epoch, lr, train: train_loss, val: val_loss });
    }

    let (val_loss, epoch, model) = best.expect("at least one epoch");
    let checkpoint = Checkpoint {
        model,
        decoder_config,
        backbone: desc.clone(),
        preprocess: ctx.preprocess,
        train_config_digest: config.digest(),
        epoch,
        val_loss,
    };
    Ok(FitOutcome { checkpoint, history })
}
