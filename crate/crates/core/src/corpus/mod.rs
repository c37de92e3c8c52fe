//! Documents, human and synthetic queries, weighted pairs, and their
//! JSON-Lines persistence.

mod cache;

pub use cache::{Cache, CacheEntry, CacheError};

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed record at line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("invalid record at line {line}: {reason}")]
    Invalid { line: usize, reason: String },
    #[error("duplicate id {id} (line {line})")]
    DuplicateId { id: String, line: usize },
    #[error("unknown doc {0}")]
    UnknownDoc(String),
}

fn default_language() -> String {
    "en".to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default = "default_language")]
    pub language: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_id: Option<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            language: default_language(),
            group_id: None,
        }
    }

    fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.text.trim().is_empty() {
            return Err(format!("document {} has empty text", self.id));
        }
        Ok(())
    }
}

/// Human-written reference query for a document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanQuery {
    pub doc_id: String,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryMode {
    Diverse,
    Paraphrase,
}

impl fmt::Display for QueryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueryMode::Diverse => "diverse",
            QueryMode::Paraphrase => "paraphrase",
        })
    }
}

impl std::str::FromStr for QueryMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "diverse" => Ok(QueryMode::Diverse),
            "paraphrase" => Ok(QueryMode::Paraphrase),
            other => Err(format!("unknown query mode {other:?}")),
        }
    }
}

/// The M queries generated for one document, in generation order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticQuerySet {
    pub doc_id: String,
    pub mode: QueryMode,
    pub queries: Vec<String>,
    pub generator_id: String,
    pub prompt_hash: String,
}

fn default_weight() -> f64 {
    1.0
}

/// One training unit: a query, its positive document and a sample weight.
///
/// `raw_cw` is the untruncated content-word count of `query`.
/// `reasoning_query` is the optional reasoning-augmented rewrite used by the
/// reasoning-index weighting schemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedPair {
    pub query: String,
    pub doc_id: String,
    #[serde(default = "default_weight")]
    pub weight: f64,
    #[serde(default)]
    pub raw_cw: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning_query: Option<String>,
}

impl WeightedPair {
    pub fn new(query: impl Into<String>, doc_id: impl Into<String>) -> Self {
        Self {
            query: query.into(),
            doc_id: doc_id.into(),
            weight: 1.0,
            raw_cw: 0,
            reasoning_query: None,
        }
    }
}

/// Documents with a by-id index.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    docs: Vec<Document>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(docs: Vec<Document>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(docs.len());
        for (i, d) in docs.iter().enumerate() {
            d.validate().map_err(|reason| CorpusError::Invalid { line: i + 1, reason })?;
            if index.insert(d.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId {
                    id: d.id.clone(),
                    line: i + 1,
                });
            }
        }
        Ok(Self { docs, index })
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.index.get(id).map(|&i| &self.docs[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn into_docs(self) -> Vec<Document> {
        self.docs
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Keep at most this many documents.
    pub limit: Option<usize>,
    /// With a limit, draw a seeded random subset (kept in file order)
    /// instead of the file-order prefix.
    pub sample_seed: Option<u64>,
}

fn open(path: &Path) -> Result<BufReader<File>, CorpusError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })
}

/// Reads a JSON-Lines file, skipping blank lines. Each record carries its
/// 1-based line number. Reading stops once `max` records are collected.
fn read_jsonl<T: DeserializeOwned>(
    path: &Path,
    max: Option<usize>,
) -> Result<Vec<(usize, T)>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        if max.is_some_and(|m| out.len() >= m) {
            break;
        }
        let line_no = i + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push((line_no, rec));
    }
    Ok(out)
}

fn write_jsonl<'a, T: Serialize + 'a>(
    path: &Path,
    records: impl IntoIterator<Item = &'a T>,
) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| io_err(e.into()))?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Loads `documents.jsonl`, keeping the first `limit` records in file order.
pub fn load_documents(path: &Path, limit: Option<usize>) -> Result<Vec<Document>, CorpusError> {
    load_documents_with(
        path,
        &LoadOptions {
            limit,
            sample_seed: None,
        },
    )
}

pub fn load_documents_with(path: &Path, opts: &LoadOptions) -> Result<Vec<Document>, CorpusError> {
    let prefix_only = opts.sample_seed.is_none();
    let records: Vec<(usize, Document)> =
        read_jsonl(path, if prefix_only { opts.limit } else { None })?;
    let mut seen = HashSet::with_capacity(records.len());
    for (line, d) in &records {
        d.validate()
            .map_err(|reason| CorpusError::Invalid { line: *line, reason })?;
        if !seen.insert(d.id.as_str()) {
            return Err(CorpusError::DuplicateId {
                id: d.id.clone(),
                line: *line,
            });
        }
    }
    let mut docs: Vec<Document> = records.into_iter().map(|(_, d)| d).collect();
    if let (Some(limit), Some(seed)) = (opts.limit, opts.sample_seed) {
        if limit < docs.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut keep = rand::seq::index::sample(&mut rng, docs.len(), limit).into_vec();
            keep.sort_unstable();
            let mut it = keep.into_iter().peekable();
            docs = docs
                .into_iter()
                .enumerate()
                .filter_map(|(i, d)| {
                    if it.peek() == Some(&i) {
                        it.next();
                        Some(d)
                    } else {
                        None
                    }
                })
                .collect();
        }
    }
    Ok(docs)
}

pub fn save_documents(docs: &[Document], path: &Path) -> Result<(), CorpusError> {
    write_jsonl(path, docs)
}

/// Loads `human_queries.jsonl`. When a corpus is given every `doc_id` must
/// resolve against it.
pub fn load_human_queries(
    path: &Path,
    corpus: Option<&Corpus>,
) -> Result<Vec<HumanQuery>, CorpusError> {
    let records: Vec<(usize, HumanQuery)> = read_jsonl(path, None)?;
    let mut out = Vec::with_capacity(records.len());
    for (_, q) in records {
        if let Some(c) = corpus {
            if !c.contains(&q.doc_id) {
                return Err(CorpusError::UnknownDoc(q.doc_id));
            }
        }
        out.push(q);
    }
    Ok(out)
}

/// doc_id → reference query. The first query listed for a document wins.
pub fn human_query_map(queries: &[HumanQuery]) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    for q in queries {
        map.entry(q.doc_id.clone()).or_insert_with(|| q.text.clone());
    }
    map
}

pub fn save_human_queries(queries: &[HumanQuery], path: &Path) -> Result<(), CorpusError> {
    write_jsonl(path, queries)
}

pub fn load_synthetic(path: &Path) -> Result<Vec<SyntheticQuerySet>, CorpusError> {
    let records: Vec<(usize, SyntheticQuerySet)> = read_jsonl(path, None)?;
    records
        .into_iter()
        .map(|(line, s)| {
            if s.queries.is_empty() || s.queries.iter().any(|q| q.trim().is_empty()) {
                Err(CorpusError::Invalid {
                    line,
                    reason: format!("query set for {} has empty queries", s.doc_id),
                })
            } else {
                Ok(s)
            }
        })
        .collect()
}

pub fn save_synthetic(sets: &[SyntheticQuerySet], path: &Path) -> Result<(), CorpusError> {
    write_jsonl(path, sets)
}

/// Writes pairs as JSON-Lines after checking every `doc_id` against `corpus`.
pub fn save_pairs(pairs: &[WeightedPair], path: &Path, corpus: &Corpus) -> Result<(), CorpusError> {
    if let Some(p) = pairs.iter().find(|p| !corpus.contains(&p.doc_id)) {
        return Err(CorpusError::UnknownDoc(p.doc_id.clone()));
    }
    write_jsonl(path, pairs)
}

pub fn load_pairs(path: &Path) -> Result<Vec<WeightedPair>, CorpusError> {
    Ok(read_jsonl(path, None)?.into_iter().map(|(_, p)| p).collect())
}

/// Expands query sets into one unit-weight pair per query, in set order.
pub fn pairs_from_sets(sets: &[SyntheticQuerySet]) -> Vec<WeightedPair> {
    sets.iter()
        .flat_map(|s| s.queries.iter().map(|q| WeightedPair::new(q.clone(), s.doc_id.clone())))
        .collect()
}
