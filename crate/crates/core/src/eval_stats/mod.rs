//! Retrieval evaluation and the correlation toolkit.

pub mod cdp;
pub mod stats;

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;
use crate::par;
use crate::trainer::ToyEncoder;

pub use cdp::{analyze, load_points, CdpPoint, CdpReport, ConditionCorrelation, PointsError};
pub use stats::{
    fit_cw_threshold, pearson_r_p, positive_rate_buckets, BucketCount, CorrelationResult, StatsError, ThresholdFit,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no relevance judgments")]
    EmptyJudgments,
    #[error("judgments contain no positive relevance")]
    ZeroIdeal,
    #[error("doc id {0} appears twice in the ranking")]
    DuplicateInRanking(String),
    #[error("no evaluable queries (every query lacks positive judgments)")]
    NoQueries,
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed { path: String, line: usize, message: String },
}

/// Graded relevance for one query.
pub type QueryJudgments = BTreeMap<String, u32>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrelRecord {
    pub query_id: String,
    pub doc_id: String,
    pub rel: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RelevanceJudgments {
    by_query: BTreeMap<String, QueryJudgments>,
}

impl RelevanceJudgments {
    /// Later records for the same (query, doc) replace earlier ones.
    pub fn from_records(records: impl IntoIterator<Item = QrelRecord>) -> Self {
        let mut by_query: BTreeMap<String, QueryJudgments> = BTreeMap::new();
        for r in records {
            by_query.entry(r.query_id).or_default().insert(r.doc_id, r.rel);
        }
        Self { by_query }
    }

    pub fn get(&self, query_id: &str) -> Option<&QueryJudgments> {
        self.by_query.get(query_id)
    }

    pub fn len(&self) -> usize {
        self.by_query.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_query.is_empty()
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.by_query.keys().map(String::as_str)
    }
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, EvalError> {
    let io = |source| EvalError::Io {
        path: path.display().to_string(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| EvalError::Malformed {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Qrels as JSON-Lines `{"query_id", "doc_id", "rel"}`.
pub fn load_qrels(path: &Path) -> Result<RelevanceJudgments, EvalError> {
    Ok(RelevanceJudgments::from_records(read_jsonl::<QrelRecord>(path)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalQuery {
    pub query_id: String,
    pub text: String,
}

/// Evaluation queries as JSON-Lines `{"query_id", "text"}`.
pub fn load_eval_queries(path: &Path) -> Result<Vec<EvalQuery>, EvalError> {
    read_jsonl(path)
}

fn gain(rel: u32) -> f64 {
    2f64.powi(rel as i32) - 1.0
}

fn discount(rank0: usize) -> f64 {
    ((rank0 + 2) as f64).log2()
}

/// NDCG@k with gain `2^rel − 1` and discount `log2(i + 1)` for 1-based rank
/// `i`.
pub fn ndcg_at_k<S: AsRef<str>>(ranking: &[S], judgments: &QueryJudgments, k: usize) -> Result<f64, EvalError> {
    if judgments.is_empty() {
        return Err(EvalError::EmptyJudgments);
    }
    let mut seen = HashSet::with_capacity(ranking.len());
    for id in ranking {
        if !seen.insert(id.as_ref()) {
            return Err(EvalError::DuplicateInRanking(id.as_ref().to_string()));
        }
    }
    let mut ideal: Vec<u32> = judgments.values().copied().collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal.iter().take(k).enumerate().map(|(i, &r)| gain(r) / discount(i)).sum();
    if idcg == 0.0 {
        return Err(EvalError::ZeroIdeal);
    }
    let dcg: f64 = ranking
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, id)| gain(judgments.get(id.as_ref()).copied().unwrap_or(0)) / discount(i))
        .sum();
    Ok(dcg / idcg)
}

/// Precomputed unit document vectors.
#[derive(Debug, Clone)]
pub struct DocIndex {
    pub ids: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

impl DocIndex {
    pub fn build(encoder: &ToyEncoder, docs: &[Document]) -> Self {
        let texts: Vec<String> = docs.iter().map(|d| d.text.clone()).collect();
        Self {
            ids: docs.iter().map(|d| d.id.clone()).collect(),
            vectors: encoder.encode_batch(&texts),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Positions sorted by descending dot product with `query`; ties go to
    /// the smaller doc id.
    pub fn rank_vector(&self, query: &[f64]) -> Vec<usize> {
        let scores: Vec<f64> = self
            .vectors
            .iter()
            .map(|v| v.iter().zip(query).map(|(a, b)| a * b).sum())
            .collect();
        let mut order: Vec<usize> = (0..self.ids.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| self.ids[a].cmp(&self.ids[b])));
        order
    }
}

/// Every doc id in `index`, by descending cosine to `query`.
pub fn rank_corpus(query: &str, encoder: &ToyEncoder, index: &DocIndex) -> Vec<String> {
    let q = encoder.encode(query);
    index.rank_vector(&q).into_iter().map(|i| index.ids[i].clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryScore {
    pub query_id: String,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub mean_ndcg: f64,
    pub n_queries: usize,
    /// Queries without any positive judgment.
    pub n_skipped: usize,
    pub per_query: Vec<QueryScore>,
}

/// Mean NDCG@k over the queries that have positive judgments.
pub fn evaluate(
    encoder: &ToyEncoder,
    index: &DocIndex,
    queries: &[EvalQuery],
    judgments: &RelevanceJudgments,
    k: usize,
) -> Result<EvalReport, EvalError> {
    let scored: Vec<Option<QueryScore>> = par::try_map_collect(queries, |q| {
        let Some(j) = judgments.get(&q.query_id) else {
            return Ok(None);
        };
        if j.values().all(|&r| r == 0) {
            return Ok(None);
        }
        let ranking = rank_corpus(&q.text, encoder, index);
        let ndcg = ndcg_at_k(&ranking[..k.min(ranking.len())], j, k)?;
        Ok::<_, EvalError>(Some(QueryScore {
            query_id: q.query_id.clone(),
            ndcg,
        }))
    })?;
    let n_skipped = scored.iter().filter(|s| s.is_none()).count();
    let per_query: Vec<QueryScore> = scored.into_iter().flatten().collect();
    if per_query.is_empty() {
        return Err(EvalError::NoQueries);
    }
    let mean_ndcg = per_query.iter().map(|s| s.ndcg).sum::<f64>() / per_query.len() as f64;
    Ok(EvalReport {
        k,
        mean_ndcg,
        n_queries: per_query.len(),
        n_skipped,
        per_query,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::EncoderShape;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn judged(pairs: &[(&str, u32)]) -> QueryJudgments {
        pairs.iter().map(|(d, r)| (d.to_string(), *r)).collect()
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("d{i:02}")).collect()
    }

    #[test]
    fn ndcg_examples() {
        let j = judged(&[("d00", 1)]);
        let mut r = ids(20);
        assert_eq!(ndcg_at_k(&r, &j, 10).unwrap(), 1.0);
        r.swap(0, 1);
        assert!((ndcg_at_k(&r, &j, 10).unwrap() - 1.0 / 3f64.log2()).abs() < 1e-12);
        assert!((ndcg_at_k(&r, &j, 10).unwrap() - 0.6309).abs() < 1e-4);
        let mut late = ids(20);
        late.swap(0, 10);
        assert_eq!(ndcg_at_k(&late, &j, 10).unwrap(), 0.0);
    }

    #[test]
    fn ndcg_graded_hand_value() {
        // ranking d01 (rel 1), d00 (rel 2); ideal d00, d01
        let j = judged(&[("d00", 2), ("d01", 1)]);
        let got = ndcg_at_k(&["d01", "d00"], &j, 10).unwrap();
        let dcg = 1.0 + 3.0 / 3f64.log2();
        let idcg = 3.0 + 1.0 / 3f64.log2();
        assert!((got - dcg / idcg).abs() < 1e-12);
    }

    #[test]
    fn ndcg_errors() {
        assert!(matches!(ndcg_at_k(&["a"], &QueryJudgments::new(), 10), Err(EvalError::EmptyJudgments)));
        assert!(matches!(ndcg_at_k(&["a"], &judged(&[("a", 0)]), 10), Err(EvalError::ZeroIdeal)));
        assert!(matches!(
            ndcg_at_k(&["a", "a"], &judged(&[("a", 1)]), 10),
            Err(EvalError::DuplicateInRanking(_))
        ));
    }

    fn encoder() -> ToyEncoder {
        let shape = EncoderShape {
            hash_dim: 256,
            embed_dim: 16,
            scale: 20.0,
        };
        ToyEncoder::init(shape, &mut ChaCha8Rng::seed_from_u64(5))
    }

    fn docs() -> Vec<Document> {
        vec![
            Document::new("c", "rivers flow into the sea"),
            Document::new("a", "volcanic ash covers the valley"),
            Document::new("b", "volcanic ash covers the valley"),
            Document::new("d", "the committee approved the budget"),
        ]
    }

    #[test]
    fn ranking_self_match_ties_and_permutation() {
        let enc = encoder();
        let idx = DocIndex::build(&enc, &docs());
        let r = rank_corpus("the committee approved the budget", &enc, &idx);
        assert_eq!(r[0], "d");
        let r = rank_corpus("volcanic ash covers the valley", &enc, &idx);
        assert_eq!(&r[..2], &["a".to_string(), "b".to_string()]);
        let mut sorted = r.clone();
        sorted.sort();
        assert_eq!(sorted, vec!["a", "b", "c", "d"]);
    }

    #[test]
    fn evaluate_skips_unjudged_queries() {
        let enc = encoder();
        let idx = DocIndex::build(&enc, &docs());
        let queries = vec![
            EvalQuery {
                query_id: "q1".into(),
                text: "the committee approved the budget".into(),
            },
            EvalQuery {
                query_id: "q2".into(),
                text: "unjudged".into(),
            },
        ];
        let j = RelevanceJudgments::from_records([QrelRecord {
            query_id: "q1".into(),
            doc_id: "d".into(),
            rel: 1,
        }]);
        let rep = evaluate(&enc, &idx, &queries, &j, 10).unwrap();
        assert_eq!(rep.mean_ndcg, 1.0);
        assert_eq!((rep.n_queries, rep.n_skipped), (1, 1));
        let none = RelevanceJudgments::default();
        assert!(matches!(evaluate(&enc, &idx, &queries, &none, 10), Err(EvalError::NoQueries)));
    }

    proptest! {
        #[test]
        fn ndcg_in_unit_interval_and_relabel_invariant(
            rels in prop::collection::vec(0u32..4, 1..15),
            perm_seed in any::<u64>(),
        ) {
            prop_assume!(rels.iter().any(|&r| r > 0));
            let n = rels.len();
            let names = ids(n);
            let j: QueryJudgments = names.iter().cloned().zip(rels.iter().cloned()).collect();
            let mut ranking = names.clone();
            use rand::seq::SliceRandom;
            ranking.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
            let v = ndcg_at_k(&ranking, &j, 10).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
            let relabel = |s: &String| format!("x{s}");
            let j2: QueryJudgments = j.iter().map(|(k, r)| (relabel(k), *r)).collect();
            let r2: Vec<String> = ranking.iter().map(relabel).collect();
            prop_assert_eq!(v, ndcg_at_k(&r2, &j2, 10).unwrap());
            let mut ideal = names.clone();
            ideal.sort_by(|a, b| j[b].cmp(&j[a]));
            prop_assert!((ndcg_at_k(&ideal, &j, 10).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
