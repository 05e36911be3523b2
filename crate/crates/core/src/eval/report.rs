use std::collections::BTreeMap;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::auroc::compute_auroc;
use super::dataset::{DatasetIndex, Label};
use super::detector::Detector;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub path: String,
    pub score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub defect_type: Option<String>,
    pub nearest_cluster: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreFormat {
    /// One JSON object per line.
    #[default]
    Json,
    Csv,
}

impl FromStr for ScoreFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" | "jsonl" => Ok(ScoreFormat::Json),
            "csv" => Ok(ScoreFormat::Csv),
            _ => Err(Error::Configuration(format!("unknown format {s:?} (expected json or csv)"))),
        }
    }
}

fn out_err(e: impl std::fmt::Display) -> Error {
    Error::Persistence(format!("cannot write scores: {e}"))
}

pub fn write_scores<W: Write>(records: &[ScoreRecord], format: ScoreFormat, out: W) -> Result<()> {
    match format {
        ScoreFormat::Json => {
            let mut out = out;
            for r in records {
                serde_json::to_writer(&mut out, r).map_err(out_err)?;
                out.write_all(b"\n").map_err(out_err)?;
            }
            out.flush().map_err(out_err)
        }
        ScoreFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["path", "score", "label", "defect_type", "nearest_cluster"]).map_err(out_err)?;
            for r in records {
                let label = match r.label {
                    Some(Label::Good) => "good",
                    Some(Label::Defective) => "defective",
                    None => "",
                };
                w.write_record([
                    r.path.as_str(),
                    &r.score.to_string(),
                    label,
                    r.defect_type.as_deref().unwrap_or(""),
                    &r.nearest_cluster.to_string(),
                ])
                .map_err(out_err)?;
            }
            w.flush().map_err(out_err)
        }
    }
}

/// Scores every test entry of the index. Training images are never read.
pub fn score_dataset(detector: &Detector, index: &DatasetIndex) -> Result<Vec<ScoreRecord>> {
    let paths: Vec<_> = index.test.iter().map(|e| e.path.clone()).collect();
    let results = detector.score_paths(&paths)?;
    Ok(index
        .test
        .iter()
        .zip(results)
        .map(|(e, r)| ScoreRecord {
            path: index.display_path(&e.path),
            score: r.score,
            label: e.label,
            defect_type: e.defect_type.clone(),
            nearest_cluster: r.nearest_cluster,
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub seconds: f64,
    pub images_per_second: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub category: String,
    pub auroc: f64,
    pub n_good: usize,
    pub n_defective: usize,
    /// Each defect type against the good test images.
    pub per_type_auroc: BTreeMap<String, f64>,
    pub k: usize,
    pub checkpoint_digest: String,
    pub bank_digest: String,
    pub scores: Vec<ScoreRecord>,
    /// Wall-clock figures; absent unless requested so reports stay reproducible.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl EvalReport {
    /// Recomputes the AUROC from the stored score table.
    pub fn recompute_auroc(&self) -> Result<f64> {
        auroc_of(&self.scores)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Persistence(e.to_string()))
    }
}

fn auroc_of(records: &[ScoreRecord]) -> Result<f64> {
    let labelled: Vec<(f64, bool)> =
        records.iter().filter_map(|r| r.label.map(|l| (r.score, l.is_defective()))).collect();
    let (s, l): (Vec<f64>, Vec<bool>) = labelled.into_iter().unzip();
    compute_auroc(&s, &l)
}

/// Image-level AUROC over the test split of a labelled dataset.
pub fn evaluate(detector: &Detector, index: &DatasetIndex, with_timing: bool) -> Result<EvalReport> {
    if index.n_good() == 0 || index.n_defective() == 0 {
        return Err(Error::Evaluation(format!(
            "evaluation needs good and defective test images ({} good, {} defective)",
            index.n_good(),
            index.n_defective()
        )));
    }
    let start = Instant::now();
    let scores = score_dataset(detector, index)?;
    let seconds = start.elapsed().as_secs_f64();
    let auroc = auroc_of(&scores)?;
    let mut per_type = BTreeMap::new();
    let types: std::collections::BTreeSet<&str> =
        scores.iter().filter(|r| r.label == Some(Label::Defective)).filter_map(|r| r.defect_type.as_deref()).collect();
    for t in types {
        let subset: Vec<ScoreRecord> = scores
            .iter()
            .filter(|r| r.label == Some(Label::Good) || r.defect_type.as_deref() == Some(t))
            .cloned()
            .collect();
        per_type.insert(t.to_string(), auroc_of(&subset)?);
    }
    Ok(EvalReport {
        category: index.category.clone(),
        auroc,
        n_good: index.n_good(),
        n_defective: index.n_defective(),
        per_type_auroc: per_type,
        k: detector.bank.k(),
        checkpoint_digest: detector.checkpoint_digest.clone(),
        bank_digest: detector.bank_digest.clone(),
        timing: with_timing.then(|| Timing { seconds, images_per_second: scores.len() as f64 / seconds.max(1e-12) }),
        scores,
    })
}
