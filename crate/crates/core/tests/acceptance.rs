//! Acceptance criteria 1-10. Runs as a plain binary so that every criterion
//! prints a PASS/FAIL line; exits non-zero when any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng;

use cse::bank::{anomaly_score, build_bank, KMeansConfig};
use cse::defectgen::{sample_corruption, DefectConfig, DefectKind};
use cse::eval::{bench_latency, compute_auroc, embed_images, Detector};
use cse::features::preprocess::tensor_to_image;
use cse::features::{load_backbone, BackboneAdapter, BackboneDescriptor, PreprocessProfile};
use cse::losses::{contrastive_loss, cos_sim, reconstruction_loss, total_loss, PairLabel, ReconstructionNorm};
use cse::model::{
    init_decoder, init_embedder, pair_objective, CseModel, DecoderConfig, DecoderMode, EmbedderConfig, ObjectiveConfig,
    PairInputs,
};
use cse::numerics::{grad_check, Mode, SeededRng, Tensor};
use cse::toy;
use cse::training::{fit, FitContext, FitOutcome, TrainConfig};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn close(a: f64, b: f64, tol: f64, what: &str) -> Result<(), String> {
    ensure((a - b).abs() <= tol, format!("{what}: {a} vs {b} (tol {tol})"))
}

fn random(rng: &mut SeededRng, shape: Vec<usize>) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn within(start: Instant, limit_s: f64) -> Result<f64, String> {
    let s = start.elapsed().as_secs_f64();
    ensure(s < limit_s, format!("took {s:.1}s, limit {limit_s}s"))?;
    Ok(s)
}

fn c1_loss_algebra() -> Outcome {
    let t0 = Instant::now();
    let v = |d: &[f64]| Tensor::new(vec![d.len()], d.to_vec()).unwrap();
    let a = v(&[0.3, -1.2, 2.0, 0.7]);
    let neg = a.scale(-1.0);
    let err = |e: cse::Error| e.to_string();
    close(cos_sim(&a, &a).map_err(err)?, 1.0, 1e-6, "cos(a, a)")?;
    close(cos_sim(&a, &neg).map_err(err)?, -1.0, 1e-6, "cos(a, -a)")?;
    close(cos_sim(&v(&[1.0, 0.0, 0.0]), &v(&[0.0, 1.0, 0.0])).map_err(err)?, 0.0, 1e-6, "cos(e1, e2)")?;
    ensure(cos_sim(&v(&[0.0; 4]), &a).is_err(), "zero vector must be rejected")?;
    close(contrastive_loss(&a, &a, PairLabel::Clean).map_err(err)?, 0.0, 1e-6, "clean, equal")?;
    close(contrastive_loss(&a, &neg, PairLabel::Defective).map_err(err)?, 0.0, 1e-6, "defective, antipodal")?;
    close(contrastive_loss(&a, &a, PairLabel::Defective).map_err(err)?, 2.0, 1e-6, "defective, equal")?;
    close(total_loss(0.0, 0.0, 10.0), 0.0, 1e-6, "total(0, 0, 10)")?;
    close(total_loss(1.5, 0.2, 10.0), 3.5, 1e-6, "total(1.5, 0.2, 10)")?;
    close(TrainConfig::default().alpha, 10.0, 0.0, "default alpha")?;

    let mut rng = SeededRng::new(1);
    let (mut lo, mut hi) = (f64::MAX, f64::MIN);
    for i in 0..10_000 {
        let d = rng.random_range(1..64);
        let (x, y) = (random(&mut rng, vec![d]), random(&mut rng, vec![d]));
        let label = PairLabel::from_defective(i % 2 == 1);
        let l = contrastive_loss(&x, &y, label).map_err(err)?;
        ensure((0.0..=2.0).contains(&l), format!("contrastive loss {l} outside [0, 2]"))?;
        let sum = contrastive_loss(&x, &x, PairLabel::Clean).map_err(err)?
            + contrastive_loss(&x, &x, PairLabel::Defective).map_err(err)?;
        ensure(sum == 2.0, format!("clean + defective on (e, e) = {sum}"))?;
        close(cos_sim(&x.scale(3.7), &y).map_err(err)?, cos_sim(&x, &y).map_err(err)?, 1e-6, "scale invariance")?;
        lo = lo.min(l);
        hi = hi.max(l);
    }
    let s = within(t0, 5.0)?;
    Ok(format!("10^4 pairs in [{lo:.4}, {hi:.4}], {s:.2}s"))
}

fn c2_gradient_oracle() -> Outcome {
    let t0 = Instant::now();
    let ecfg =
        EmbedderConfig { in_channels: 16, hidden_channels: vec![8], out_channels: 4, pool_kernel: 2, pool_stride: 2 };
    let mut worst: f64 = 0.0;
    for inst in 0..20u64 {
        let mode = if inst % 2 == 0 { DecoderMode::RandomFrozen } else { DecoderMode::TrainedTogether };
        let dcfg = DecoderConfig { mode, seed: 100 + inst, hidden_channels: 6, targets: vec![[5, 4, 4], [7, 2, 2]] };
        let model: CseModel<f64> = CseModel {
            embedder: init_embedder(&ecfg, inst).map_err(|e| e.to_string())?,
            decoder: init_decoder(&dcfg, 4, None).map_err(|e| e.to_string())?,
        }
        .cast();
        let mut rng = SeededRng::derive(42, &[inst]);
        let n = 3;
        let labels: Vec<PairLabel> = (0..n).map(|_| PairLabel::from_defective(rng.random_bool(0.5))).collect();
        let inputs = PairInputs {
            anchors: random(&mut rng, vec![n, 16, 4, 4]),
            anchor_layers: vec![random(&mut rng, vec![n, 5, 4, 4]), random(&mut rng, vec![n, 7, 2, 2])],
            partners: Some((random(&mut rng, vec![n, 16, 4, 4]), labels)),
        };
        let cfg = ObjectiveConfig::default();
        let out = pair_objective(&model, &inputs, &cfg, Mode::Train, true).map_err(|e| e.to_string())?;
        let analytic: Vec<f64> =
            out.grads.expect("requested").trainable.iter().flat_map(|t| t.data().to_vec()).collect();
        let params = model.flat_trainable();
        let mut probe = model.clone();
        let report = grad_check(
            |p| {
                probe.set_flat_trainable(p).expect("same length");
                pair_objective(&probe, &inputs, &cfg, Mode::Train, false).expect("finite").loss.total
            },
            &params,
            &analytic,
            1e-6,
        );
        worst = worst.max(report.max_relative_error);
    }
    ensure(worst < 1e-3, format!("max relative error {worst:.3e}"))?;
    let s = within(t0, 60.0)?;
    Ok(format!("20 instances, max relative error {worst:.2e}, {s:.2}s"))
}

/// Direct transcription: for each layer, each (i, j), ½·‖F_ij − R_ij‖ over
/// channels; mean over positions; sum over layers.
fn naive_reconstruction(f: &[Tensor<f64>], r: &[Tensor<f64>]) -> f64 {
    let mut total = 0.0;
    for (fl, rl) in f.iter().zip(r) {
        let (c, h, w) = (fl.shape()[0], fl.shape()[1], fl.shape()[2]);
        let at = |t: &Tensor<f64>, ch: usize, i: usize, j: usize| t.data()[(ch * h + i) * w + j];
        let mut layer = 0.0;
        for i in 0..h {
            for j in 0..w {
                let mut sq = 0.0;
                for ch in 0..c {
                    sq += (at(fl, ch, i, j) - at(rl, ch, i, j)).powi(2);
                }
                layer += 0.5 * sq.sqrt();
            }
        }
        total += layer / (h * w) as f64;
    }
    total
}

fn c3_reconstruction_oracle() -> Outcome {
    let t0 = Instant::now();
    let err = |e: cse::Error| e.to_string();
    let one = |v: f64| Tensor::new(vec![1, 1, 1], vec![v]).unwrap();
    close(
        reconstruction_loss(&[one(3.0)], &[one(1.0)], ReconstructionNorm::Euclidean).map_err(err)?,
        1.0,
        1e-12,
        "F=3, R=1",
    )?;
    let mut rng = SeededRng::new(3);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let layers = rng.random_range(1..4);
        let shapes: Vec<Vec<usize>> = (0..layers)
            .map(|_| vec![rng.random_range(1..12), rng.random_range(1..9), rng.random_range(1..9)])
            .collect();
        let f: Vec<_> = shapes.iter().map(|s| random(&mut rng, s.clone())).collect();
        let r: Vec<_> = shapes.iter().map(|s| random(&mut rng, s.clone())).collect();
        let got = reconstruction_loss(&f, &r, ReconstructionNorm::Euclidean).map_err(err)?;
        worst = worst.max((got - naive_reconstruction(&f, &r)).abs());
        ensure(
            reconstruction_loss(&f, &f, ReconstructionNorm::Euclidean).map_err(err)? == 0.0,
            "perfect reconstruction",
        )?;
    }
    ensure(worst <= 1e-6, format!("max deviation from loop oracle {worst:e}"))?;
    let s = within(t0, 5.0)?;
    Ok(format!("200 random stacks, max deviation {worst:.1e}, {s:.2}s"))
}

fn c4_bank() -> Outcome {
    let err = |e: cse::Error| e.to_string();
    let mut rng = SeededRng::new(4);
    let shape = vec![4, 3, 3];
    let emb: Vec<Tensor> = (0..25).map(|_| random(&mut rng, shape.clone()).cast()).collect();
    let bank = build_bank(&emb, &KMeansConfig { k: 1, ..Default::default() }).map_err(err)?;
    let d = emb[0].len();
    let mut mean_err: f64 = 0.0;
    for i in 0..d {
        let m = emb.iter().map(|e| e.data()[i] as f64).sum::<f64>() / emb.len() as f64;
        mean_err = mean_err.max((bank.centroid(0)[i] as f64 - m).abs());
    }
    ensure(mean_err <= 1e-6, format!("k=1 centroid deviates from mean by {mean_err:e}"))?;

    let bank3 = build_bank(&emb, &KMeansConfig { k: 3, seed: 9, ..Default::default() }).map_err(err)?;
    let cos = |a: &[f32], b: &[f32]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
        let n = |v: &[f32]| v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        dot / (n(a) * n(b))
    };
    let mut score_err: f64 = 0.0;
    for _ in 0..50 {
        let q: Tensor = random(&mut rng, shape.clone()).cast();
        let exhaustive = (0..bank3.k()).map(|j| 1.0 - cos(q.data(), bank3.centroid(j))).fold(f64::MAX, f64::min);
        score_err = score_err.max((anomaly_score(&q, &bank3).map_err(err)?.score - exhaustive).abs());
    }
    ensure(score_err <= 1e-6, format!("score deviates from exhaustive minimum by {score_err:e}"))?;

    let dim = 16;
    let centres: [Vec<f64>; 2] = [
        (0..dim).map(|i| if i < 8 { 1.0 } else { 0.1 }).collect(),
        (0..dim).map(|i| if i < 8 { -0.2 } else { 1.0 }).collect(),
    ];
    let mut blobs = Vec::new();
    let mut truth: Vec<usize> = Vec::new();
    for i in 0..40 {
        let c = &centres[i % 2];
        blobs.push(Tensor::from_fn(vec![dim], |j| (c[j] + rng.random_range(-0.01..0.01)) as f32));
        truth.push(i % 2);
    }
    let bank2 = build_bank(&blobs, &KMeansConfig { k: 2, seed: 5, ..Default::default() }).map_err(err)?;
    let mut blob_err: f64 = 0.0;
    for b in 0..2 {
        let members: Vec<&Tensor> = blobs.iter().zip(&truth).filter(|(_, t)| **t == b).map(|(x, _)| x).collect();
        let mean: Vec<f64> =
            (0..dim).map(|j| members.iter().map(|m| m.data()[j] as f64).sum::<f64>() / members.len() as f64).collect();
        let best = (0..2)
            .map(|c| bank2.centroid(c).iter().zip(&mean).map(|(x, m)| (*x as f64 - m).abs()).fold(0.0, f64::max))
            .fold(f64::MAX, f64::min);
        blob_err = blob_err.max(best);
    }
    ensure(blob_err <= 1e-3, format!("two-blob centroid error {blob_err:e}"))?;
    Ok(format!("k=1 mean err {mean_err:.1e}, score err {score_err:.1e}, two-blob err {blob_err:.1e}"))
}

fn pairwise_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut twice, mut p, mut q) = (0u64, 0u64, 0u64);
    for (s, l) in scores.iter().zip(labels) {
        if *l {
            p += 1;
        } else {
            q += 1;
        }
        if !*l {
            continue;
        }
        for (t, m) in scores.iter().zip(labels) {
            if !*m {
                twice += if s > t {
                    2
                } else if s == t {
                    1
                } else {
                    0
                };
            }
        }
    }
    twice as f64 / (2 * p * q) as f64
}

fn c5_auroc() -> Outcome {
    let t0 = Instant::now();
    let mut rng = SeededRng::new(5);
    let mut ties = 0;
    for inst in 0..200 {
        let n = rng.random_range(2..300);
        // Half the instances draw from a small value set so ties are common.
        let levels = if inst % 2 == 0 { 7 } else { 1_000_000 };
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let got = compute_auroc(&scores, &labels).map_err(|e| e.to_string())?;
        let want = pairwise_auroc(&scores, &labels);
        ensure(got == want, format!("instance {inst}: {got} vs pairwise {want}"))?;
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        ties += usize::from(sorted.len() < scores.len());
    }
    let s = within(t0, 10.0)?;
    Ok(format!("200 instances exact ({ties} with ties), {s:.2}s"))
}

fn c6_defects() -> Outcome {
    let err = |e: cse::Error| e.to_string();
    let corpus = toy::texture_corpus(4, 64, 6).map_err(err)?;
    let images = toy::surface_images(8, 64, 6);
    let cfg = DefectConfig::default();
    let draw =
        |i: u64| sample_corruption(&images[i as usize % 8], &mut SeededRng::derive(66, &[i]), &cfg, Some(&corpus));
    let mut counts = [0usize; 3];
    for i in 0..3000u64 {
        let s = draw(i).map_err(err)?;
        let again = draw(i).map_err(err)?;
        ensure(s == again, format!("draw {i} not reproducible"))?;
        let src = &images[i as usize % 8];
        let plane = 64 * 64;
        for (p, &m) in s.mask.bits().iter().enumerate() {
            if !m {
                for c in 0..3 {
                    ensure(
                        s.image.data()[c * plane + p].to_bits() == src.data()[c * plane + p].to_bits(),
                        format!("draw {i}: pixel {p} outside the mask changed"),
                    )?;
                }
            }
        }
        counts[match s.spec.kind() {
            DefectKind::Textural => 0,
            DefectKind::Structural => 1,
            DefectKind::Blur => 2,
        }] += 1;
    }
    let freq = counts.map(|c| c as f64 / 3000.0);
    ensure(freq.iter().all(|f| (0.30..=0.37).contains(f)), format!("kind frequencies {freq:?}"))?;
    Ok(format!("3000 draws reproducible and local, kind frequencies {freq:.3?}"))
}

struct ToyRun {
    adapter: BackboneAdapter,
    frozen: FitOutcome,
    test_images: Vec<Tensor>,
}

fn toy_config(mode: DecoderMode) -> TrainConfig {
    // Pairs are drawn with replacement, so an epoch is a budget of 20 batches.
    TrainConfig {
        epochs: 15,
        seed: 3,
        steps_per_epoch: Some(20),
        val_pairs: Some(64),
        decoder_mode: mode,
        ..Default::default()
    }
}

fn toy_fit(adapter: &BackboneAdapter, mode: DecoderMode) -> Result<FitOutcome, cse::Error> {
    let corpus = toy::texture_corpus(12, 224, 1)?;
    let train = toy::surface_images(60, 224, 2);
    let ctx = FitContext {
        adapter,
        corpus: Some(&corpus),
        preprocess: PreprocessProfile::ResizeOnly { size: 224 },
        prior_decoder: None,
    };
    fit(&train, &ctx, &toy_config(mode))
}

fn c7_end_to_end(run: &mut Option<ToyRun>) -> Outcome {
    let t0 = Instant::now();
    let err = |e: cse::Error| e.to_string();
    let adapter = load_backbone(&BackboneDescriptor::stub(0)).map_err(err)?;
    let out = toy_fit(&adapter, DecoderMode::RandomFrozen).map_err(err)?;
    let model = &out.checkpoint.model;
    let train = toy::surface_images(60, 224, 2);
    let bank =
        build_bank(&embed_images(model, &adapter, &train).map_err(err)?, &KMeansConfig::default()).map_err(err)?;
    // Held-out clean images and corruptions built from textures never seen in training.
    let test_corpus = toy::texture_corpus(12, 224, 99).map_err(err)?;
    let mut images = toy::surface_images(30, 224, 1234);
    let bad = toy::corrupted_surfaces(30, 224, 5678, &DefectConfig::default(), Some(&test_corpus)).map_err(err)?;
    images.extend(bad.into_iter().map(|b| b.0));
    let labels: Vec<bool> = (0..60).map(|i| i >= 30).collect();
    let scores = embed_images(model, &adapter, &images)
        .map_err(err)?
        .iter()
        .map(|e| anomaly_score(e, &bank).map(|r| r.score))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    let auroc = compute_auroc(&scores, &labels).map_err(err)?;
    let secs = t0.elapsed().as_secs_f64();
    *run = Some(ToyRun { adapter, frozen: out, test_images: images });
    ensure(auroc >= 0.90, format!("AUROC {auroc:.4} < 0.90"))?;
    ensure(secs < 900.0, format!("took {secs:.0}s"))?;
    Ok(format!("AUROC {auroc:.4} on 30 clean + 30 corrupted, {secs:.0}s"))
}

fn c8_frozen_decoder(run: &Option<ToyRun>) -> Outcome {
    let run = run.as_ref().ok_or("criterion 7 did not produce a training run")?;
    let err = |e: cse::Error| e.to_string();
    let ckpt = &run.frozen.checkpoint;
    let initial = init_decoder(&ckpt.decoder_config, 64, None).map_err(err)?;
    let (before, after) = (initial.digest(), ckpt.model.decoder.digest());
    ensure(before == after, format!("frozen decoder changed: {before} -> {after}"))?;
    let together = toy_fit(&run.adapter, DecoderMode::TrainedTogether).map_err(err)?;
    let cfg = &together.checkpoint.decoder_config;
    ensure(cfg.mode == DecoderMode::TrainedTogether, "mode not recorded")?;
    let init_together = init_decoder(cfg, 64, None).map_err(err)?.digest();
    let trained = together.checkpoint.model.decoder.digest();
    ensure(init_together == before, "both modes should start from the same decoder weights")?;
    ensure(init_together != trained, "jointly trained decoder did not change")?;
    Ok(format!("random_frozen digest unchanged ({}…), trained_together changed", &before[..12]))
}

fn cli(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_cse"))
        .args(args)
        .env("CSE_THREADS", "1")
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("cse {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn c9_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let p = |s: &str| root.join(s).to_string_lossy().into_owned();
    cli(&["toy", "--out", &p("toy"), "--n-train", "16", "--n-test", "6"])?;
    std::fs::write(
        root.join("cfg.toml"),
        format!(
            "textures = {:?}\n[preprocess]\nkind = \"resize_only\"\nsize = 224\n[train]\nepochs = 3\nsteps_per_epoch = 3\nval_pairs = 6\n",
            p("toy/textures")
        ),
    )
    .map_err(|e| e.to_string())?;
    let data = p("toy/surface");
    let mut digests = Vec::new();
    let mut score_files = Vec::new();
    for run in ["a", "b"] {
        let ckpt = p(&format!("{run}.ckpt"));
        let bank = p(&format!("{run}.bank"));
        let scores = p(&format!("{run}_scores.jsonl"));
        let stdout = cli(&["train", "--config", &p("cfg.toml"), "--seed", "7", "--dataset", &data, "--out", &ckpt])?;
        let v: serde_json::Value = serde_json::from_str(stdout.trim()).map_err(|e| e.to_string())?;
        digests.push(v["digest"].as_str().unwrap_or_default().to_string());
        cli(&["bank", "--seed", "7", "--dataset", &data, "--checkpoint", &ckpt, "--out", &bank])?;
        cli(&["score", "--dataset", &data, "--checkpoint", &ckpt, "--bank", &bank, "--out", &scores])?;
        score_files.push(std::fs::read(&scores).map_err(|e| e.to_string())?);
    }
    ensure(!digests[0].is_empty() && digests[0] == digests[1], format!("checkpoint digests differ: {digests:?}"))?;
    let bytes = |r: &str| std::fs::read(Path::new(&p(r))).map_err(|e| e.to_string());
    ensure(bytes("a.ckpt")? == bytes("b.ckpt")?, "checkpoint files differ")?;
    ensure(score_files[0] == score_files[1] && !score_files[0].is_empty(), "score files differ")?;
    Ok(format!("digest {}… reproduced, score files identical ({} bytes)", &digests[0][..12], score_files[0].len()))
}

fn c10_latency(run: &Option<ToyRun>) -> Outcome {
    let run = run.as_ref().ok_or("criterion 7 did not produce a training run")?;
    let err = |e: cse::Error| e.to_string();
    let ckpt = run.frozen.checkpoint.clone();
    let train = toy::surface_images(20, 224, 2);
    let bank =
        cse::eval::build_bank_from_images(&ckpt, &run.adapter, &train, &KMeansConfig { k: 4, ..Default::default() })
            .map_err(err)?;
    let det = Detector::new(ckpt, bank, run.adapter.clone()).map_err(err)?;
    let images = run.test_images.iter().take(8).map(tensor_to_image).collect::<Result<Vec<_>, _>>().map_err(err)?;
    let report = bench_latency(&det, &images, 5, 40).map_err(err)?;
    let total = report.total.mean_ms;
    let gap = (report.stage_sum_ms() - total).abs() / total;
    let share = report.head_share();
    ensure(gap <= 0.05, format!("stage sum {:.3}ms vs total {total:.3}ms", report.stage_sum_ms()))?;
    ensure(share < 0.20, format!("fuse+embed+score share {share:.3}"))?;
    Ok(format!("total {total:.2}ms, stage-sum gap {:.2}%, head share {:.1}%", gap * 100.0, share * 100.0))
}

fn main() {
    let mut toy_run: Option<ToyRun> = None;
    let mut failed = 0;
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or(p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        match result {
            Ok(detail) => println!("criterion {n:>2} {name}: PASS ({detail})"),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2} {name}: FAIL ({why})");
            }
        }
    };
    report(1, "loss algebra", &mut c1_loss_algebra);
    report(2, "gradient oracle", &mut c2_gradient_oracle);
    report(3, "reconstruction oracle", &mut c3_reconstruction_oracle);
    report(4, "bank correctness", &mut c4_bank);
    report(5, "auroc oracle", &mut c5_auroc);
    report(6, "defect synthesis", &mut c6_defects);
    report(7, "end-to-end toy detection", &mut || c7_end_to_end(&mut toy_run));
    report(8, "frozen decoder", &mut || c8_frozen_decoder(&toy_run));
    report(9, "determinism pin", &mut c9_determinism);
    report(10, "latency accounting", &mut || c10_latency(&toy_run));
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
