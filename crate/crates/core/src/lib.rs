//! Tabular de-identification benchmarking.
//!
//! The crate covers the whole workflow of measuring what privacy-preserving
//! transforms cost in predictive performance:
//!
//! * [`tabular`]: the columnar data model, CSV ingestion and equivalence classes.
//! * [`transforms`]: suppression, top-and-bottom coding, Laplace noise, rounding
//!   and global re-coding, plus enumeration of every technique combination.
//! * [`linkage`]: distance-based record linkage producing a re-identification risk.
//! * [`tuning`]: per-technique parameter selection by minimum matched records.
//! * [`learning`]: split plans, grid-searched cross-validation, F-score and a
//!   built-in logistic regression.
//! * [`stats`]: percentage differences, the Bayes sign test with a ROPE, rank
//!   aggregation and baseline-comparison scenarios.
//! * [`pipeline`]: the on-disk, resumable `transform → risk → evaluate → analyze`
//!   workflow driven by the `deidbench` binary.

pub mod error;
pub mod learning;
pub mod linkage;
pub mod pipeline;
pub mod seed;
pub mod stats;
pub mod tabular;
pub mod transforms;
pub mod tuning;

pub use error::{Error, Result};
pub use tabular::{Column, ColumnData, ColumnKind, Dataset};
pub use transforms::{Technique, VariantSpec};
