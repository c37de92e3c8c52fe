//! Stable hashing used for cache keys, provenance hashes and feature hashing.

use std::hash::Hasher;

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Hex SHA-256 of raw bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Canonical JSON: object keys sorted, no insignificant whitespace.
///
/// Values are round-tripped through `serde_json::Value`, whose map type keeps
/// keys ordered.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<Vec<u8>> {
    let v = serde_json::to_value(value)?;
    serde_json::to_vec(&v)
}

/// Hex SHA-256 of the canonical JSON form of `value`.
pub fn canonical_hash<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    Ok(sha256_hex(&canonical_json(value)?))
}

/// 64-bit FNV-1a over the UTF-8 bytes of `s`. Pinned for feature hashing so
/// stub embeddings and encoder features are identical across platforms.
pub fn fnv1a64(s: &str) -> u64 {
    let mut h = fnv::FnvHasher::default();
    h.write(s.as_bytes());
    h.finish()
}

/// Signed feature hashing of token unigrams and bigrams into `buckets`
/// buckets. Returns `(bucket, signed count)` sorted by bucket, zero counts
/// dropped.
pub fn signed_ngram_features(tokens: &[String], buckets: usize) -> Vec<(usize, f64)> {
    assert!(buckets > 0, "bucket count must be positive");
    let mut raw: Vec<(usize, f64)> = Vec::with_capacity(tokens.len() * 2);
    let mut push = |feature: String| {
        let h = fnv1a64(&feature);
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        raw.push(((h % buckets as u64) as usize, sign));
    };
    for t in tokens {
        push(format!("1\u{1f}{t}"));
    }
    for w in tokens.windows(2) {
        push(format!("2\u{1f}{}\u{1f}{}", w[0], w[1]));
    }
    raw.sort_by_key(|&(b, _)| b);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(raw.len());
    for (b, c) in raw {
        match out.last_mut() {
            Some((lb, lc)) if *lb == b => *lc += c,
            _ => out.push((b, c)),
        }
    }
    out.retain(|&(_, c)| c != 0.0);
    out
}
