//! motlab is a desk-scale laboratory for studying how supervision labels are
//! assigned between detect queries and track queries in end-to-end,
//! query-based multi-object trackers.
//!
//! The crate provides:
//!
//! - [`geometry`]: normalized boxes, IoU / GIoU / L1 measures.
//! - [`assignment`]: cost matrices, exact Hungarian matching with a
//!   brute-force oracle, and the two matching spaces (detect-only vs.
//!   all-queries).
//! - [`losses`]: focal / L1 / GIoU losses, confidence-reweighted pseudo-label
//!   losses, clip-level aggregation, and closed-form gradients.
//! - [`lifecycle`]: the track-query state machine — free/locked label
//!   partition, frame-to-frame propagation, spawning and retirement.
//! - [`tgd`]: track-group expansion, reference-box scaling noise, and the
//!   leakage-preventing attention mask.
//! - [`pld`]: pseudo-label ingestion, confidence filtering, and matching.
//! - [`world`]: synthetic multi-target scenarios and a simulated noisy
//!   detector.
//! - [`engine`]: a small analytically-differentiable query model, the
//!   training loop combining the three supervision strategies, and inference.
//! - [`analytics`]: assignment-dynamics statistics, stage-misalignment
//!   statistics, and simplified CLEAR-MOT evaluation.
//! - [`cli`]: batch commands over the file formats above.
//!
//! Every run is a pure function of its configuration and seed: all
//! randomness flows through [`rng`] streams derived from a single per-run
//! seed, and all persisted artifacts are byte-reproducible.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod analytics;
pub mod assignment;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod lifecycle;
pub mod losses;
pub mod pld;
pub mod rng;
pub mod tgd;
pub mod world;

pub use error::{Error, Result};
