use serde::{Deserialize, Serialize};

use crate::defectgen::DefectConfig;
use crate::error::{Error, Result};
use crate::losses::ReconstructionNorm;
use crate::model::{DecoderMode, EmbedderConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OneCycleConfig {
    pub pct_start: f64,
    /// Initial lr is `max_lr / div_factor`.
    pub div_factor: f64,
    /// Final lr is `max_lr / final_div`.
    pub final_div: f64,
}

impl Default for OneCycleConfig {
    fn default() -> Self {
        OneCycleConfig { pct_start: 0.3, div_factor: 25.0, final_div: 1e4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Peak learning rate of the one-cycle schedule.
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub alpha: f64,
    pub p_defective: f64,
    /// Fraction of the images used for training; the rest validate.
    pub split: f64,
    pub seed: u64,
    /// Optimizer steps per epoch; defaults to `ceil(train images / batch_size)`.
    pub steps_per_epoch: Option<usize>,
    /// Validation pairs per epoch; defaults to the validation set size.
    pub val_pairs: Option<usize>,
    pub one_cycle: OneCycleConfig,
    pub decoder_mode: DecoderMode,
    pub decoder_hidden: usize,
    pub reconstruction_norm: ReconstructionNorm,
    pub embedder: EmbedderConfig,
    pub defects: DefectConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 4e-4,
            epochs: 100,
            batch_size: 8,
            alpha: 10.0,
            p_defective: 0.5,
            split: 0.7,
            seed: 0,
            steps_per_epoch: None,
            val_pairs: None,
            one_cycle: OneCycleConfig::default(),
            decoder_mode: DecoderMode::RandomFrozen,
            decoder_hidden: 128,
            reconstruction_norm: ReconstructionNorm::Euclidean,
            embedder: EmbedderConfig::default(),
            defects: DefectConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Configuration(m));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr {} must be finite and non-negative", self.lr));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive".into());
        }
        if !(self.alpha > 0.0) {
            return bad(format!("alpha {} must be positive", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.p_defective) {
            return bad(format!("p_defective {} must lie in [0, 1]", self.p_defective));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return bad(format!("split {} must lie strictly between 0 and 1", self.split));
        }
        let oc = &self.one_cycle;
        if !(oc.pct_start > 0.0 && oc.pct_start < 1.0 && oc.div_factor >= 1.0 && oc.final_div >= 1.0) {
            return bad(format!("invalid one-cycle settings {oc:?}"));
        }
        if self.decoder_hidden == 0 || self.steps_per_epoch == Some(0) || self.val_pairs == Some(0) {
            return bad("decoder_hidden, steps_per_epoch and val_pairs must be positive".into());
        }
        self.embedder.validate()?;
        self.defects.validate()
    }

    /// TOML form; round-trips through [`TrainConfig::from_toml`].
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Configuration(format!("cannot serialize config: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig =
            toml::from_str(text).map_err(|e| Error::Configuration(format!("bad train config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        crate::container::sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}
