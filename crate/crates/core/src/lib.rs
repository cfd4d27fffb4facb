//! Core engine for detecting and monitoring AI-generated text in
//! timestamped social-media corpora.
//!
//! The pipeline runs in stages, each backed by one module:
//!
//! 1. [`corpus`] — JSONL ingestion, preprocessing filters, dataset splits.
//! 2. [`scorer`] — token-probability backends (local n-gram or remote HTTP).
//! 3. [`metrics`] — per-document detector features (log-likelihood, rank,
//!    log-rank, entropy, GLTR fractions, LRR, DetectGPT, NPR).
//! 4. [`classify`] — logistic-regression detector head plus evaluation.
//! 5. [`monitor`] — longitudinal statistics: monthly AI-attribution rates,
//!    FPR baselines, word-frequency trends, engagement and author analysis.
//! 6. [`explain`] — model-agnostic Shapley attribution over text spans.

pub mod classify;
pub mod corpus;
pub mod explain;
pub mod metrics;
pub mod monitor;
pub mod scorer;
