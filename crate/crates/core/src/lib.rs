//! Corpus-to-training-data toolkit for dense retrieval.
//!
//! The crate covers the whole path from raw documents to weighted
//! contrastive training pairs:
//!
//! * [`corpus`] ingests documents and queries, persists query sets and
//!   training pairs as JSON-Lines, and caches remote calls on disk.
//! * [`tokenize`] normalizes and segments text and counts content words,
//!   the complexity proxy used for sample weighting.
//! * [`synth`] renders the multi-query prompts, talks to an
//!   OpenAI-compatible chat endpoint, parses numbered lists and selects a
//!   prompt by measured diversity.
//! * [`qd_metrics`] computes Dist-Sim, Len-Sim, CE and Self-BLEU over a
//!   pluggable [`qd_metrics::ScorerBackend`].
//! * [`weighting`] turns content-word counts and reasoning-index ratios into
//!   batch-normalized sample weights.
//! * [`trainer`] trains a hashed-feature linear retriever with weighted
//!   InfoNCE and AdamW.
//! * [`eval_stats`] ranks documents, scores NDCG@k, and runs the
//!   complexity/diversity correlation analysis.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled (the default) and plain iterators otherwise.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod eval_stats;
pub mod hashing;
pub mod http;
pub mod par;
pub mod qd_metrics;
pub mod report;
pub mod synth;
pub mod tokenize;
pub mod trainer;
pub mod weighting;

pub use corpus::{Corpus, Document, HumanQuery, QueryMode, SyntheticQuerySet, WeightedPair};
pub use qd_metrics::{QdReport, ScorerBackend, StubBackend};
pub use tokenize::{StopwordTable, TokenizerSpec, TokenizerStrategy};
