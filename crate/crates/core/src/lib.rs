//! Surface anomaly detection: a contrastively trained pointwise embedder over
//! frozen backbone features, scored by cosine distance to a k-means bank of
//! defect-free embeddings.
// `!(x > 0.0)` checks are there to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bank;
pub mod cli;
pub mod container;
pub mod defectgen;
pub mod error;
pub mod eval;
pub mod features;
pub mod losses;
pub mod model;
pub mod numerics;
pub mod toy;
pub mod training;

pub use error::{Error, Result};
