//! Trainable pointwise embedder and the reconstruction decoder hanging off it.

mod decoder;
mod embedder;
mod objective;

pub use decoder::{
    init_decoder, DecodeCache, Decoder, DecoderConfig, DecoderGrads, DecoderHead, DecoderMode, Reconstruction,
};
pub use embedder::{init_embedder, EmbedCache, Embedder, EmbedderConfig, EmbedderGrads, HiddenStage};
pub use objective::{pair_objective, ObjectiveConfig, ObjectiveGrads, ObjectiveOutput, PairInputs};

use sha2::{Digest, Sha256};

use crate::error::{reject, Error, Result};
use crate::numerics::{Real, Tensor};

/// One image's E×h×w embedding; compared as a flat vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding(Tensor);

impl Embedding {
    pub fn new(data: Tensor) -> Result<Self> {
        data.dims3()?;
        if !data.is_finite() {
            return Err(Error::Degenerate("embedding has non-finite values".into()));
        }
        Ok(Embedding(data))
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn flat(&self) -> &[f32] {
        self.0.data()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl<T: Real> Embedder<T> {
    /// SHA-256 over every named tensor, running statistics included, hex encoded.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for (name, t) in self.named_tensors() {
            hasher.update(name.as_bytes());
            hasher.update(t.to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

/// Embedder plus decoder, the unit that training updates and checkpoints store.
#[derive(Clone, Debug, PartialEq)]
pub struct CseModel<T = f32> {
    pub embedder: Embedder<T>,
    pub decoder: Decoder<T>,
}

impl<T: Real> CseModel<T> {
    /// Embedder parameters, then decoder parameters when the decoder is trainable.
    pub fn trainable_params(&self) -> Vec<&Tensor<T>> {
        let mut out = self.embedder.params();
        if self.decoder.is_trainable() {
            out.extend(self.decoder.params());
        }
        out
    }

    pub fn trainable_params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let trainable = self.decoder.is_trainable();
        let mut out = self.embedder.params_mut();
        if trainable {
            out.extend(self.decoder.params_mut());
        }
        out
    }

    pub fn trainable_count(&self) -> usize {
        self.trainable_params().iter().map(|t| t.len()).sum()
    }

    pub fn flat_trainable(&self) -> Vec<f64> {
        self.trainable_params().iter().flat_map(|t| t.data().iter().map(|v| v.to_f64().unwrap())).collect()
    }

    pub fn set_flat_trainable(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.trainable_count() {
            reject!("{} values for {} trainable parameters", values.len(), self.trainable_count());
        }
        let mut at = 0;
        for t in self.trainable_params_mut() {
            for v in t.data_mut() {
                *v = T::lit(values[at]);
                at += 1;
            }
        }
        Ok(())
    }

    /// Eval-mode embeddings for an N×C×H×W batch of fused features.
    pub fn embed(&self, fused: &Tensor<T>) -> Result<Tensor<T>> {
        self.embedder.embed(fused)
    }

    pub fn cast<U: Real>(&self) -> CseModel<U> {
        CseModel { embedder: self.embedder.cast(), decoder: self.decoder.cast() }
    }
}
