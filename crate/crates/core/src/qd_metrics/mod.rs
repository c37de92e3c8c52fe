//! Quality/diversity metrics for synthetic query collections.
//!
//! Quality (higher is more human-like):
//! * Dist-Sim: mean cosine between each synthetic query's embedding and the
//!   embedding of its document's human query.
//! * Len-Sim: mean of `1 - |l_s - l_h| / max(l_s, l_h)` over matched pairs,
//!   lengths in characters.
//!
//! Diversity (lower is more diverse):
//! * CE: fraction of within-document query pairs whose pair score exceeds
//!   a threshold (0.5 by default).
//! * Self-BLEU: mean BLEU-4 of each query against its siblings.

mod backend;
mod bleu;

pub use backend::{
    backend_from_spec, cosine, stub_embed, BackendError, BackendId, ScorerBackend, SidecarBackend,
    StubBackend,
};
pub use bleu::{bleu4, brevity_penalty};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SyntheticQuerySet;
use crate::par;
use crate::tokenize::{tokenize_batch, TokenizeError, TokenizerSpec};

pub const DEFAULT_CE_THRESHOLD: f64 = 0.5;
const EMBED_BATCH: usize = 64;

#[derive(Debug, Error)]
pub enum QdError {
    #[error("no human query for document {0}")]
    MissingHuman(String),
    #[error("length lists differ: {synthetic} synthetic vs {human} human")]
    LengthMismatch { synthetic: usize, human: usize },
    #[error("no queries to measure")]
    Empty,
    #[error("empty candidate")]
    EmptyCandidate,
    #[error("no non-empty reference")]
    NoReference,
    #[error("Self-BLEU undefined for M=1")]
    SelfBleuUndefined,
    #[error("backend returned {got} results for {expected} inputs")]
    BackendShape { expected: usize, got: usize },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Tokenize(#[from] TokenizeError),
}

fn embed_all(texts: &[String], backend: &dyn ScorerBackend) -> Result<Vec<Vec<f64>>, QdError> {
    let chunks = par::map_chunks(texts, EMBED_BATCH, |c| {
        let out = backend.embed(c)?;
        if out.len() != c.len() {
            return Err(QdError::BackendShape {
                expected: c.len(),
                got: out.len(),
            });
        }
        Ok(out)
    });
    let mut all = Vec::with_capacity(texts.len());
    for c in chunks {
        all.extend(c?);
    }
    Ok(all)
}

/// Mean cosine between each synthetic query and its document's human query.
pub fn dist_sim(
    synthetic: &[(String, String)],
    human: &BTreeMap<String, String>,
    backend: &dyn ScorerBackend,
) -> Result<f64, QdError> {
    if synthetic.is_empty() {
        return Err(QdError::Empty);
    }
    let mut human_texts = Vec::new();
    let mut human_idx = BTreeMap::new();
    for (doc_id, _) in synthetic {
        let h = human
            .get(doc_id)
            .ok_or_else(|| QdError::MissingHuman(doc_id.clone()))?;
        human_idx.entry(doc_id.as_str()).or_insert_with(|| {
            human_texts.push(h.clone());
            human_texts.len() - 1
        });
    }
    let syn_texts: Vec<String> = synthetic.iter().map(|(_, q)| q.clone()).collect();
    let syn_vecs = embed_all(&syn_texts, backend)?;
    let human_vecs = embed_all(&human_texts, backend)?;
    let total: f64 = synthetic
        .iter()
        .zip(&syn_vecs)
        .map(|((doc_id, _), v)| cosine(v, &human_vecs[human_idx[doc_id.as_str()]]))
        .sum();
    Ok(total / synthetic.len() as f64)
}

/// Length similarity of one pair; two empty strings are identical.
pub fn len_sim_pair(ls: usize, lh: usize) -> f64 {
    let m = ls.max(lh);
    if m == 0 {
        1.0
    } else {
        1.0 - ls.abs_diff(lh) as f64 / m as f64
    }
}

pub fn len_sim(synthetic_lengths: &[usize], human_lengths: &[usize]) -> Result<f64, QdError> {
    if synthetic_lengths.len() != human_lengths.len() {
        return Err(QdError::LengthMismatch {
            synthetic: synthetic_lengths.len(),
            human: human_lengths.len(),
        });
    }
    if synthetic_lengths.is_empty() {
        return Err(QdError::Empty);
    }
    let total: f64 = synthetic_lengths
        .iter()
        .zip(human_lengths)
        .map(|(&s, &h)| len_sim_pair(s, h))
        .sum();
    Ok(total / synthetic_lengths.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CeRatio {
    pub value: f64,
    pub n_pairs: usize,
    /// Set when no document has two or more queries; `value` is then 0.
    pub no_pairs: bool,
}

/// All unordered within-set pairs `(q_i, q_j)` with `i < j`.
pub fn within_pairs(queries: &[String]) -> Vec<(String, String)> {
    let mut out = Vec::with_capacity(queries.len() * queries.len().saturating_sub(1) / 2);
    for i in 0..queries.len() {
        for j in i + 1..queries.len() {
            out.push((queries[i].clone(), queries[j].clone()));
        }
    }
    out
}

pub fn ce_ratio(
    sets: &[SyntheticQuerySet],
    threshold: f64,
    backend: &dyn ScorerBackend,
) -> Result<CeRatio, QdError> {
    let per_set = par::try_map_collect(sets, |s| -> Result<(usize, usize), QdError> {
        let pairs = within_pairs(&s.queries);
        if pairs.is_empty() {
            return Ok((0, 0));
        }
        let scores = backend.pair_score(&pairs)?;
        if scores.len() != pairs.len() {
            return Err(QdError::BackendShape {
                expected: pairs.len(),
                got: scores.len(),
            });
        }
        Ok((scores.iter().filter(|&&s| s > threshold).count(), pairs.len()))
    })?;
    let (above, n_pairs) = per_set
        .iter()
        .fold((0, 0), |(a, n), (sa, sn)| (a + sa, n + sn));
    if n_pairs == 0 {
        log::warn!("CE over a collection with no within-document pairs; reporting 0");
        return Ok(CeRatio {
            value: 0.0,
            n_pairs: 0,
            no_pairs: true,
        });
    }
    Ok(CeRatio {
        value: above as f64 / n_pairs as f64,
        n_pairs,
        no_pairs: false,
    })
}

/// Self-BLEU of one query set.
pub fn self_bleu(queries: &[String], spec: &TokenizerSpec) -> Result<f64, QdError> {
    if queries.len() < 2 {
        return Err(QdError::SelfBleuUndefined);
    }
    let tokens = tokenize_batch(queries, spec)?;
    self_bleu_tokens(&tokens)
}

fn self_bleu_tokens(tokens: &[Vec<String>]) -> Result<f64, QdError> {
    let mut total = 0.0;
    for i in 0..tokens.len() {
        let refs: Vec<Vec<String>> = tokens
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, t)| t.clone())
            .collect();
        total += bleu4(&tokens[i], &refs)?;
    }
    Ok(total / tokens.len() as f64)
}

/// Mean per-set Self-BLEU over sets with at least two queries.
pub fn self_bleu_corpus(sets: &[SyntheticQuerySet], spec: &TokenizerSpec) -> Result<f64, QdError> {
    let multi: Vec<&SyntheticQuerySet> = sets.iter().filter(|s| s.queries.len() >= 2).collect();
    if multi.is_empty() {
        return Err(QdError::SelfBleuUndefined);
    }
    let values = par::try_map_collect(&multi, |s| self_bleu(&s.queries, spec))?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QdReport {
    pub dist_sim: f64,
    pub len_sim: f64,
    pub ce: f64,
    /// `None` when every set has a single query.
    pub self_bleu: Option<f64>,
    pub n_documents: usize,
    pub n_queries: usize,
    pub n_pairs: usize,
    pub ce_threshold: f64,
    pub backend: BackendId,
}

/// Computes all four metrics for a synthetic collection.
pub fn measure(
    sets: &[SyntheticQuerySet],
    human: &BTreeMap<String, String>,
    backend: &dyn ScorerBackend,
    spec: &TokenizerSpec,
    ce_threshold: f64,
) -> Result<QdReport, QdError> {
    let flat: Vec<(String, String)> = sets
        .iter()
        .flat_map(|s| s.queries.iter().map(|q| (s.doc_id.clone(), q.clone())))
        .collect();
    let dist = dist_sim(&flat, human, backend)?;
    let (ls, lh): (Vec<usize>, Vec<usize>) = flat
        .iter()
        .map(|(d, q)| (q.chars().count(), human[d].chars().count()))
        .unzip();
    let len = len_sim(&ls, &lh)?;
    let ce = ce_ratio(sets, ce_threshold, backend)?;
    let sb = match self_bleu_corpus(sets, spec) {
        Ok(v) => Some(v),
        Err(QdError::SelfBleuUndefined) => None,
        Err(e) => return Err(e),
    };
    Ok(QdReport {
        dist_sim: dist,
        len_sim: len,
        ce: ce.value,
        self_bleu: sb,
        n_documents: sets.len(),
        n_queries: flat.len(),
        n_pairs: ce.n_pairs,
        ce_threshold,
        backend: backend.id(),
    })
}
