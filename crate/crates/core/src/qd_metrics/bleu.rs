//! Sentence-level BLEU-4 against multiple references.
//!
//! Clipped n-gram precisions for n = 1..4 are floored at `1e-9` before the
//! log, combined by geometric mean and multiplied by the brevity penalty
//! `exp(1 - r/c)` when the candidate length `c` is shorter than the closest
//! reference length `r` (ties go to the shorter reference). Orders longer
//! than the candidate have no n-grams and are left out of the mean, so short
//! candidates identical to a reference still score 1.

use std::collections::HashMap;

use super::QdError;

pub const MAX_ORDER: usize = 4;
pub const PRECISION_FLOOR: f64 = 1e-9;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped precision `(matches, total)` for order `n`.
fn clipped(candidate: &[String], references: &[&[String]], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let total: usize = cand.values().sum();
    let mut max_ref: HashMap<&[String], usize> = HashMap::new();
    for r in references {
        for (g, c) in ngram_counts(r, n) {
            let e = max_ref.entry(g).or_insert(0);
            *e = (*e).max(c);
        }
    }
    let matches = cand
        .iter()
        .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
        .sum();
    (matches, total)
}

fn closest_ref_len(c: usize, references: &[&[String]]) -> usize {
    references
        .iter()
        .map(|r| r.len())
        .min_by_key(|&r| (r.abs_diff(c), r))
        .expect("at least one reference")
}

pub fn brevity_penalty(c: usize, r: usize) -> f64 {
    if c >= r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    }
}

pub fn bleu4(candidate: &[String], references: &[Vec<String>]) -> Result<f64, QdError> {
    if candidate.is_empty() {
        return Err(QdError::EmptyCandidate);
    }
    let refs: Vec<&[String]> = references
        .iter()
        .filter(|r| !r.is_empty())
        .map(Vec::as_slice)
        .collect();
    if refs.is_empty() {
        return Err(QdError::NoReference);
    }
    let orders = MAX_ORDER.min(candidate.len());
    let mut log_sum = 0.0;
    for n in 1..=orders {
        let (m, t) = clipped(candidate, &refs, n);
        let p = (m as f64 / t as f64).max(PRECISION_FLOOR);
        log_sum += p.ln();
    }
    let geo = (log_sum / orders as f64).exp();
    let bp = brevity_penalty(candidate.len(), closest_ref_len(candidate.len(), &refs));
    Ok((geo * bp).clamp(0.0, 1.0))
}
