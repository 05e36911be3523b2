//! Command-line surface: `synth`, `train`, `bank`, `score`, `eval`, `bench`, `toy`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bank::{ClusterBank, KMeansConfig};
use crate::defectgen::{sample_corruption, TextureCorpus};
use crate::error::{Error, Result};
use crate::eval::{
    bench_latency, build_bank_from_images, evaluate, ingest_dataset, load_images, score_dataset, write_scores,
    Detector, Layout, ScoreFormat,
};
use crate::features::preprocess::load_rgb;
use crate::features::{load_backbone, BackboneDescriptor, BackboneSource, PreprocessProfile};
use crate::numerics::SeededRng;
use crate::toy::{save_mask_png, save_png, write_toy_dataset, ToyDatasetSpec};
use crate::training::{fit, load_checkpoint, pretrain_decoder, save_checkpoint, FitContext, TrainConfig};

/// Everything a run can be configured with; loaded from `--config` TOML.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub backbone: BackboneDescriptor,
    pub preprocess: PreprocessProfile,
    pub train: TrainConfig,
    pub bank: KMeansConfig,
    /// Directory of foreign textures for textural defects.
    pub textures: Option<PathBuf>,
    /// Checkpoint whose decoder seeds `trained_before` mode; without it one is pretrained first.
    pub decoder_prior: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| Error::Configuration(format!("{}: {e}", path.display())))?;
        cfg.train.validate()?;
        Ok(cfg)
    }
}

#[derive(Parser, Debug)]
#[command(name = "cse", version, about = "Surface anomaly detection with contrastive embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Pipeline config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// ONNX file, or `stub` for the built-in seeded backbone.
    #[arg(long)]
    backbone: Option<String>,
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "mvtec")]
    layout: Layout,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write corrupted samples and their masks for inspection.
    Synth {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long)]
        textures: Option<PathBuf>,
    },
    /// Fit the embedder on defect-free training images and save a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        textures: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Build the cluster bank from defect-free training images.
    Bank {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Score test images (every image for flat layouts).
    Score {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "json")]
        format: ScoreFormat,
    },
    /// Image-level AUROC report over the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Include wall-clock timing (makes the report non-reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Single-stream per-stage latency.
    Bench {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        #[arg(long, default_value_t = 5)]
        warmup: usize,
        #[arg(long, default_value_t = 50)]
        iters: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate the procedural demo dataset and texture corpus.
    Toy {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 60)]
        n_train: usize,
        #[arg(long, default_value_t = 30)]
        n_test: usize,
        #[arg(long, default_value_t = 224)]
        size: usize,
    },
}

fn config(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
        cfg.bank.seed = seed;
    }
    if let Some(b) = &common.backbone {
        cfg.backbone = backbone_override(&cfg.backbone, b);
    }
    Ok(cfg)
}

fn backbone_override(base: &BackboneDescriptor, arg: &str) -> BackboneDescriptor {
    if arg == "stub" {
        let seed = match base.source {
            BackboneSource::Stub { seed } => seed,
            BackboneSource::Onnx { .. } => 0,
        };
        BackboneDescriptor::stub(seed)
    } else {
        BackboneDescriptor { source: BackboneSource::Onnx { path: PathBuf::from(arg) }, ..base.clone() }
    }
}

fn corpus(dir: Option<&Path>, cfg: &PipelineConfig) -> Result<Option<TextureCorpus>> {
    let dir = dir.or(cfg.textures.as_deref());
    match dir {
        Some(d) => {
            let size = cfg.preprocess.output_size().0 as u32;
            Ok(Some(TextureCorpus::load_dir(d, size)?))
        }
        None => Ok(None),
    }
}

fn writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            Box::new(BufWriter::new(File::create(p).map_err(|e| Error::io(p, e))?))
        }
        None => Box::new(std::io::stdout().lock()),
    })
}

fn detector(common: &Common, checkpoint: &Path, bank: &Path) -> Result<Detector> {
    let ckpt = load_checkpoint(checkpoint)?;
    let desc = match &common.backbone {
        Some(b) => backbone_override(&ckpt.backbone, b),
        None => ckpt.backbone.clone(),
    };
    let adapter = load_backbone(&desc)?;
    Detector::new(ckpt, ClusterBank::load(bank)?, adapter)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common, data, out, n, textures } => {
            let cfg = config(&common)?;
            let index = ingest_dataset(&data.dataset, data.layout)?;
            let corpus = corpus(textures.as_deref(), &cfg)?;
            let images = load_images(&index.train_good, &cfg.preprocess)?;
            let mut rng = SeededRng::derive(cfg.train.seed, &[0x5E]);
            let mut manifest = writer(Some(&out.join("manifest.jsonl")))?;
            for i in 0..n {
                let src = i % images.len();
                let s = sample_corruption(&images[src], &mut rng, &cfg.train.defects, corpus.as_ref())?;
                save_png(&s.image, &out.join(format!("{i:04}.png")))?;
                save_mask_png(&s.mask.to_tensor(), &out.join(format!("{i:04}_mask.png")))?;
                let line = serde_json::json!({
                    "image": format!("{i:04}.png"),
                    "source": index.display_path(&index.train_good[src]),
                    "coverage": s.mask.coverage(),
                    "defect": s.spec,
                });
                writeln!(manifest, "{line}").map_err(|e| Error::io(&out, e))?;
            }
            manifest.flush().map_err(|e| Error::io(&out, e))?;
            println!("{}", serde_json::json!({ "written": n, "out": out }));
        }
        Command::Train { common, data, out, textures, epochs } => {
            let mut cfg = config(&common)?;
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            let index = ingest_dataset(&data.dataset, data.layout)?;
            let corpus = corpus(textures.as_deref(), &cfg)?;
            let adapter = load_backbone(&cfg.backbone)?;
            let images = load_images(&index.train_good, &cfg.preprocess)?;
            let mut ctx = FitContext {
                adapter: &adapter,
                corpus: corpus.as_ref(),
                preprocess: cfg.preprocess,
                prior_decoder: None,
            };
            let prior = match (cfg.train.decoder_mode, &cfg.decoder_prior) {
                (crate::model::DecoderMode::TrainedBefore, Some(p)) => Some(load_checkpoint(p)?.model.decoder),
                (crate::model::DecoderMode::TrainedBefore, None) => Some(pretrain_decoder(&images, &ctx, &cfg.train)?),
                _ => None,
            };
            ctx.prior_decoder = prior.as_ref();
            let outcome = fit(&images, &ctx, &cfg.train)?;
            let digest = save_checkpoint(&outcome.checkpoint, &out)?;
            println!(
                "{}",
                serde_json::json!({
                    "checkpoint": out,
                    "digest": digest,
                    "epoch": outcome.checkpoint.epoch,
                    "val_loss": outcome.checkpoint.val_loss,
                })
            );
        }
        Command::Bank { common, data, checkpoint, out, k } => {
            let mut cfg = config(&common)?;
            if let Some(k) = k {
                cfg.bank.k = k;
            }
            let ckpt = load_checkpoint(&checkpoint)?;
            let desc = match &common.backbone {
                Some(b) => backbone_override(&ckpt.backbone, b),
                None => ckpt.backbone.clone(),
            };
            let adapter = load_backbone(&desc)?;
            let index = ingest_dataset(&data.dataset, data.layout)?;
            let images = load_images(&index.train_good, &ckpt.preprocess)?;
            let bank = build_bank_from_images(&ckpt, &adapter, &images, &cfg.bank)?;
            let digest = bank.save(&out)?;
            println!(
                "{}",
                serde_json::json!({ "bank": out, "digest": digest, "k": bank.k(), "n_train": bank.n_train })
            );
        }
        Command::Score { common, data, checkpoint, bank, out, format } => {
            let det = detector(&common, &checkpoint, &bank)?;
            let index = ingest_dataset(&data.dataset, data.layout)?;
            let records = score_dataset(&det, &index)?;
            write_scores(&records, format, writer(out.as_deref())?)?;
        }
        Command::Eval { common, data, checkpoint, bank, out, timing } => {
            let det = detector(&common, &checkpoint, &bank)?;
            let index = ingest_dataset(&data.dataset, data.layout)?;
            let report = evaluate(&det, &index, timing)?;
            let mut w = writer(Some(&out))?;
            w.write_all(report.to_json()?.as_bytes()).and_then(|_| w.flush()).map_err(|e| Error::io(&out, e))?;
            println!(
                "{}",
                serde_json::json!({
                    "auroc": report.auroc,
                    "n_good": report.n_good,
                    "n_defective": report.n_defective,
                    "report": out,
                })
            );
        }
        Command::Bench { common, data, checkpoint, bank, warmup, iters, out } => {
            let det = detector(&common, &checkpoint, &bank)?;
            let index = ingest_dataset(&data.dataset, data.layout)?;
            let paths: Vec<_> = index.test.iter().map(|e| e.path.clone()).collect();
            let images = paths.iter().take(16).map(|p| load_rgb(p)).collect::<Result<Vec<_>>>()?;
            let report = bench_latency(&det, &images, warmup, iters)?;
            let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Persistence(e.to_string()))?;
            let mut w = writer(out.as_deref())?;
            writeln!(w, "{text}")
                .and_then(|_| w.flush())
                .map_err(|e| Error::io(out.as_deref().unwrap_or(Path::new("-")), e))?;
        }
        Command::Toy { out, seed, n_train, n_test, size } => {
            let spec = ToyDatasetSpec {
                n_train,
                n_test_good: n_test,
                n_test_defective: n_test,
                size,
                seed: seed.unwrap_or(0),
                ..Default::default()
            };
            write_toy_dataset(&out.join("surface"), &out.join("textures"), &spec)?;
            println!("{}", serde_json::json!({ "dataset": out.join("surface"), "textures": out.join("textures") }));
        }
    }
    Ok(())
}

fn init_threads() {
    if let Some(n) = std::env::var("CSE_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        // Fails harmlessly when the pool already exists in this process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

/// Runs the CLI on `argv` (program name first) and returns the process exit code:
/// 0 on success, 1 on a runtime error, 2 on a usage error.
pub fn cli_run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_threads();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.kind(), "message": e.to_string() }));
            1
        }
    }
}
