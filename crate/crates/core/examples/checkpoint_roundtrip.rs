//! Saves a checkpoint and a bank, reloads both and checks that the digests
//! and the scores of the reloaded detector are unchanged.
//!
//! `cargo run --release --example checkpoint_roundtrip`

use cse::bank::{ClusterBank, KMeansConfig};
use cse::eval::{build_bank_from_images, Detector};
use cse::features::{load_backbone, BackboneDescriptor, PreprocessProfile};
use cse::toy;
use cse::training::{file_digest, fit, load_checkpoint, save_checkpoint, FitContext, TrainConfig};

fn main() -> cse::Result<()> {
    let dir = std::env::temp_dir().join(format!("cse-roundtrip-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| cse::Error::io(&dir, e))?;
    let adapter = load_backbone(&BackboneDescriptor::stub(0))?;
    let corpus = toy::texture_corpus(3, 224, 1)?;
    let images = toy::surface_images(8, 224, 2);
    let ctx = FitContext {
        adapter: &adapter,
        corpus: Some(&corpus),
        preprocess: PreprocessProfile::ResizeOnly { size: 224 },
        prior_decoder: None,
    };
    let ckpt = fit(
        &images,
        &ctx,
        &TrainConfig { epochs: 1, steps_per_epoch: Some(2), val_pairs: Some(4), ..Default::default() },
    )?
    .checkpoint;
    let bank = build_bank_from_images(&ckpt, &adapter, &images, &KMeansConfig { k: 2, ..Default::default() })?;

    let (ckpt_path, bank_path) = (dir.join("model.cse"), dir.join("bank.cse"));
    let ckpt_digest = save_checkpoint(&ckpt, &ckpt_path)?;
    let bank_digest = bank.save(&bank_path)?;
    println!("checkpoint {ckpt_digest}\nbank       {bank_digest}");
    assert_eq!(file_digest(&ckpt_path)?, ckpt_digest);
    assert_eq!(load_checkpoint(&ckpt_path)?.digest()?, ckpt_digest);
    assert_eq!(ClusterBank::load(&bank_path)?, bank);

    let before = Detector::new(ckpt, bank, adapter.clone())?.score(&images)?;
    let after = Detector::load(&ckpt_path, &bank_path, None)?.score(&images)?;
    assert_eq!(before, after);
    println!("reloaded detector reproduces {} scores exactly", after.len());
    std::fs::remove_dir_all(&dir).map_err(|e| cse::Error::io(&dir, e))?;
    Ok(())
}
