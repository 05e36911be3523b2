use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::features::{BackboneDescriptor, PreprocessProfile};
use crate::model::{CseModel, Decoder, DecoderConfig, Embedder, EmbedderConfig};

const KIND: &str = "checkpoint";

/// Everything needed to embed and score images without the training config.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: CseModel,
    pub decoder_config: DecoderConfig,
    pub backbone: BackboneDescriptor,
    pub preprocess: PreprocessProfile,
    pub train_config_digest: String,
    /// Zero-based epoch the weights were taken from.
    pub epoch: usize,
    pub val_loss: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    embedder: EmbedderConfig,
    decoder: DecoderConfig,
    backbone: BackboneDescriptor,
    preprocess: PreprocessProfile,
    train_config_digest: String,
    epoch: usize,
    val_loss: f64,
}

impl Checkpoint {
    pub fn format_version(&self) -> u32 {
        container::FORMAT_VERSION
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = Meta {
            embedder: self.model.embedder.config.clone(),
            decoder: self.decoder_config.clone(),
            backbone: self.backbone.clone(),
            preprocess: self.preprocess,
            train_config_digest: self.train_config_digest.clone(),
            epoch: self.epoch,
            val_loss: self.val_loss,
        };
        let meta = serde_json::to_value(&meta).map_err(|e| Error::Persistence(e.to_string()))?;
        let mut tensors = self.model.embedder.named_tensors();
        tensors.extend(self.model.decoder.named_tensors());
        container::encode(KIND, meta, &tensors)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (meta, mut tensors) = container::decode(bytes, KIND)?;
        let meta: Meta =
            serde_json::from_value(meta).map_err(|e| Error::Persistence(format!("bad checkpoint metadata: {e}")))?;
        let embedder = Embedder::from_named(&meta.embedder, &mut tensors)?;
        let decoder = Decoder::from_named(&meta.decoder, meta.embedder.out_channels, &mut tensors)?;
        if let Some(extra) = tensors.keys().next() {
            return Err(Error::Persistence(format!("unexpected tensor {extra} in checkpoint")));
        }
        Ok(Checkpoint {
            model: CseModel { embedder, decoder },
            decoder_config: meta.decoder,
            backbone: meta.backbone,
            preprocess: meta.preprocess,
            train_config_digest: meta.train_config_digest,
            epoch: meta.epoch,
            val_loss: meta.val_loss,
        })
    }

    /// Hex SHA-256 of the serialized file.
    pub fn digest(&self) -> Result<String> {
        Ok(container::sha256_hex(&self.to_bytes()?))
    }

    /// Identifies the embedder weights a bank was built with.
    pub fn embedder_digest(&self) -> String {
        self.model.embedder.digest()
    }
}

/// Writes the checkpoint and returns its digest.
pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<String> {
    let bytes = ckpt.to_bytes()?;
    container::write_file(path, &bytes)?;
    Ok(container::sha256_hex(&bytes))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&container::read_file(path)?)
}

/// Digest of a checkpoint file on disk.
pub fn file_digest(path: &Path) -> Result<String> {
    Ok(container::sha256_hex(&container::read_file(path)?))
}
