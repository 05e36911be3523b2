//! Dataset ingestion, image-level AUROC, scoring reports and latency benchmarks.

mod auroc;
mod bench;
mod dataset;
mod detector;
mod report;

pub use auroc::compute_auroc;
pub use bench::{bench_latency, LatencyReport, StageStats};
pub use dataset::{ingest_dataset, DatasetIndex, Label, Layout, TestEntry};
pub use detector::{build_bank_from_images, embed_images, load_images, Detector};
pub use report::{evaluate, score_dataset, write_scores, EvalReport, ScoreFormat, ScoreRecord, Timing};
