use std::path::{Path, PathBuf};

use image::RgbImage;
use rayon::prelude::*;

use crate::bank::{anomaly_score, build_bank, ClusterBank, KMeansConfig, ScoreResult};
use crate::container;
use crate::error::{Error, Result};
use crate::features::preprocess::load_rgb;
use crate::features::{fuse_batch, load_backbone, BackboneAdapter, BackboneDescriptor, PreprocessProfile};
use crate::model::CseModel;
use crate::numerics::Tensor;
use crate::training::{load_checkpoint, Checkpoint};

const CHUNK: usize = 8;

/// Decodes and preprocesses images in parallel.
pub fn load_images(paths: &[PathBuf], profile: &PreprocessProfile) -> Result<Vec<Tensor>> {
    paths.par_iter().map(|p| profile.apply(&load_rgb(p)?)).collect()
}

/// Eval-mode embeddings (E×h×w each) of 3×H×W images in [0, 1].
pub fn embed_images(model: &CseModel, adapter: &BackboneAdapter, images: &[Tensor]) -> Result<Vec<Tensor>> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(CHUNK) {
        let fused = fuse_batch(&adapter.extract_features(&Tensor::stack(chunk)?)?)?;
        out.extend(model.embed(&fused)?.unstack());
    }
    Ok(out)
}

/// Clusters the embeddings of defect-free `images` and binds the bank to the checkpoint.
pub fn build_bank_from_images(
    checkpoint: &Checkpoint,
    adapter: &BackboneAdapter,
    images: &[Tensor],
    config: &KMeansConfig,
) -> Result<ClusterBank> {
    let emb = embed_images(&checkpoint.model, adapter, images)?;
    Ok(build_bank(&emb, config)?.with_digest(checkpoint.embedder_digest()))
}

/// A checkpoint, its bank and a loaded backbone: everything needed to score images.
#[derive(Clone, Debug)]
pub struct Detector {
    pub checkpoint: Checkpoint,
    pub bank: ClusterBank,
    pub adapter: BackboneAdapter,
    pub checkpoint_digest: String,
    pub bank_digest: String,
}

impl Detector {
    pub fn new(checkpoint: Checkpoint, bank: ClusterBank, adapter: BackboneAdapter) -> Result<Self> {
        bank.check_binding(&checkpoint.embedder_digest())?;
        let cfg = &checkpoint.model.embedder.config;
        if adapter.descriptor().fused_channels() != cfg.in_channels {
            return Err(Error::Configuration(format!(
                "backbone fuses to {} channels, checkpoint embedder expects {}",
                adapter.descriptor().fused_channels(),
                cfg.in_channels
            )));
        }
        let checkpoint_digest = checkpoint.digest()?;
        let bank_digest = container::sha256_hex(&bank.to_bytes()?);
        Ok(Detector { checkpoint, bank, adapter, checkpoint_digest, bank_digest })
    }

    /// Loads both files; `backbone` overrides the descriptor stored in the checkpoint.
    pub fn load(checkpoint: &Path, bank: &Path, backbone: Option<&BackboneDescriptor>) -> Result<Self> {
        let ckpt = load_checkpoint(checkpoint)?;
        let bank = ClusterBank::load(bank)?;
        let adapter = load_backbone(backbone.unwrap_or(&ckpt.backbone))?;
        Detector::new(ckpt, bank, adapter)
    }

    pub fn preprocess(&self) -> &PreprocessProfile {
        &self.checkpoint.preprocess
    }

    pub fn prepare(&self, img: &RgbImage) -> Result<Tensor> {
        self.checkpoint.preprocess.apply(img)
    }

    pub fn embed(&self, images: &[Tensor]) -> Result<Vec<Tensor>> {
        embed_images(&self.checkpoint.model, &self.adapter, images)
    }

    pub fn score(&self, images: &[Tensor]) -> Result<Vec<ScoreResult>> {
        let emb = self.embed(images)?;
        emb.par_iter().map(|e| anomaly_score(e, &self.bank)).collect()
    }

    /// Scores image files in chunks so memory stays bounded on large sets.
    pub fn score_paths(&self, paths: &[PathBuf]) -> Result<Vec<ScoreResult>> {
        let mut out = Vec::with_capacity(paths.len());
        for chunk in paths.chunks(64) {
            out.extend(self.score(&load_images(chunk, self.preprocess())?)?);
        }
        Ok(out)
    }
}
