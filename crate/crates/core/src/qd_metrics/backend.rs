use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::signed_ngram_features;
use crate::http::{join_url, HttpClient, HttpError};
use crate::tokenize::tokenize_unicode;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("stub embedding dimension must be at least 8, got {0}")]
    BadDimension(usize),
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error("sidecar {endpoint} returned status {status}: {body}")]
    Status {
        endpoint: String,
        status: u16,
        body: String,
    },
    #[error("sidecar {endpoint}: {message}")]
    Protocol { endpoint: String, message: String },
    #[error("sidecar model changed from {expected:?} to {got:?}; refusing to mix scores")]
    ModelMismatch { expected: String, got: String },
    #[error("invalid backend spec {0:?} (expected `stub` or `sidecar:<url>`)")]
    BadSpec(String),
}

/// Model identifiers behind a backend, recorded in every report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendId {
    pub embed_model: String,
    pub ce_model: String,
}

/// Embedding and pair-scoring provider for the quality/diversity metrics.
///
/// `embed` returns unit-norm vectors of a fixed dimension; `pair_score`
/// returns scores in `[0, 1]`, one per pair, in request order. Both must be
/// deterministic for fixed input.
pub trait ScorerBackend: Send + Sync {
    fn id(&self) -> BackendId;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError>;
    fn pair_score(&self, pairs: &[(String, String)]) -> Result<Vec<f64>, BackendError>;
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Signed feature hashing of unigrams and bigrams into `dim` buckets,
/// L2-normalized. Texts with no tokens map to the first basis vector.
pub fn stub_embed(texts: &[String], dim: usize) -> Vec<Vec<f64>> {
    assert!(dim >= 8, "stub embedding dimension must be at least 8");
    texts.iter().map(|t| stub_embed_one(t, dim)).collect()
}

fn stub_embed_one(text: &str, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    for (b, c) in signed_ngram_features(&tokenize_unicode(text), dim) {
        v[b] = c;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v[0] = 1.0;
    } else {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Deterministic model-free backend. Pair scores are the stub cosine
/// clipped to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct StubBackend {
    dim: usize,
}

impl Default for StubBackend {
    fn default() -> Self {
        Self { dim: 256 }
    }
}

impl StubBackend {
    pub fn new(dim: usize) -> Result<Self, BackendError> {
        if dim < 8 {
            return Err(BackendError::BadDimension(dim));
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl ScorerBackend for StubBackend {
    fn id(&self) -> BackendId {
        BackendId {
            embed_model: format!("stub-hash-{}", self.dim),
            ce_model: format!("stub-cosine-{}", self.dim),
        }
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        Ok(stub_embed(texts, self.dim))
    }

    fn pair_score(&self, pairs: &[(String, String)]) -> Result<Vec<f64>, BackendError> {
        Ok(pairs
            .iter()
            .map(|(a, b)| {
                let ea = stub_embed_one(a, self.dim);
                let eb = stub_embed_one(b, self.dim);
                cosine(&ea, &eb).clamp(0.0, 1.0)
            })
            .collect())
    }
}

#[derive(Debug, Deserialize)]
struct Health {
    #[serde(default)]
    status: String,
    embed_model: String,
    ce_model: String,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
    #[serde(default)]
    dim: Option<usize>,
    model: String,
}

#[derive(Serialize)]
struct PairRequest<'a> {
    pairs: Vec<[&'a str; 2]>,
}

#[derive(Deserialize)]
struct PairResponse {
    scores: Vec<f64>,
    model: String,
}

/// Client for the HTTP scorer sidecar (`/healthz`, `/embed`,
/// `/score-pairs`). Model ids are pinned from `/healthz` at connect time and
/// every response must report the same ids.
#[derive(Debug, Clone)]
pub struct SidecarBackend {
    base_url: String,
    client: HttpClient,
    batch_size: usize,
    id: BackendId,
}

impl SidecarBackend {
    pub const DEFAULT_BATCH: usize = 64;

    pub fn connect(base_url: impl Into<String>) -> Result<Self, BackendError> {
        let base_url = base_url.into();
        let client = HttpClient::default();
        let endpoint = join_url(&base_url, "healthz");
        let resp = client.get(&endpoint)?;
        if !resp.is_success() {
            return Err(BackendError::Status {
                endpoint,
                status: resp.status,
                body: resp.excerpt(),
            });
        }
        let health: Health = serde_json::from_slice(&resp.body).map_err(|e| BackendError::Protocol {
            endpoint: endpoint.clone(),
            message: e.to_string(),
        })?;
        if !health.status.is_empty() && health.status != "ok" {
            log::warn!("sidecar reports status {:?}", health.status);
        }
        Ok(Self {
            base_url,
            client,
            batch_size: Self::DEFAULT_BATCH,
            id: BackendId {
                embed_model: health.embed_model,
                ce_model: health.ce_model,
            },
        })
    }

    pub fn with_batch_size(mut self, n: usize) -> Self {
        self.batch_size = n.max(1);
        self
    }

    fn post<T: for<'de> Deserialize<'de>>(&self, path: &str, body: &[u8]) -> Result<T, BackendError> {
        let endpoint = join_url(&self.base_url, path);
        let resp = self.client.post_json(&endpoint, body, None)?;
        if !resp.is_success() {
            return Err(BackendError::Status {
                endpoint,
                status: resp.status,
                body: resp.excerpt(),
            });
        }
        serde_json::from_slice(&resp.body).map_err(|e| BackendError::Protocol {
            endpoint,
            message: e.to_string(),
        })
    }

    fn protocol(&self, path: &str, message: String) -> BackendError {
        BackendError::Protocol {
            endpoint: join_url(&self.base_url, path),
            message,
        }
    }
}

impl ScorerBackend for SidecarBackend {
    fn id(&self) -> BackendId {
        self.id.clone()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size) {
            let body = serde_json::to_vec(&EmbedRequest { texts: chunk }).expect("serializes");
            let resp: EmbedResponse = self.post("embed", &body)?;
            if resp.model != self.id.embed_model {
                return Err(BackendError::ModelMismatch {
                    expected: self.id.embed_model.clone(),
                    got: resp.model,
                });
            }
            if resp.vectors.len() != chunk.len() {
                return Err(self.protocol(
                    "embed",
                    format!("sent {} texts, got {} vectors", chunk.len(), resp.vectors.len()),
                ));
            }
            for v in &resp.vectors {
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > 1e-5 {
                    return Err(self.protocol("embed", format!("vector norm {norm} is not 1")));
                }
                if resp.dim.is_some_and(|d| d != v.len()) {
                    return Err(self.protocol("embed", "vector length differs from dim".into()));
                }
            }
            out.extend(resp.vectors);
        }
        Ok(out)
    }

    fn pair_score(&self, pairs: &[(String, String)]) -> Result<Vec<f64>, BackendError> {
        let mut out = Vec::with_capacity(pairs.len());
        for chunk in pairs.chunks(self.batch_size.max(190)) {
            let req = PairRequest {
                pairs: chunk.iter().map(|(a, b)| [a.as_str(), b.as_str()]).collect(),
            };
            let body = serde_json::to_vec(&req).expect("serializes");
            let resp: PairResponse = self.post("score-pairs", &body)?;
            if resp.model != self.id.ce_model {
                return Err(BackendError::ModelMismatch {
                    expected: self.id.ce_model.clone(),
                    got: resp.model,
                });
            }
            if resp.scores.len() != chunk.len() {
                return Err(self.protocol(
                    "score-pairs",
                    format!("sent {} pairs, got {} scores", chunk.len(), resp.scores.len()),
                ));
            }
            if let Some(s) = resp.scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
                return Err(self.protocol("score-pairs", format!("score {s} outside [0, 1]")));
            }
            out.extend(resp.scores);
        }
        Ok(out)
    }
}

/// Parses `stub`, `stub:<dim>` or `sidecar:<url>`.
pub fn backend_from_spec(spec: &str) -> Result<Box<dyn ScorerBackend>, BackendError> {
    if spec == "stub" {
        return Ok(Box::new(StubBackend::default()));
    }
    if let Some(dim) = spec.strip_prefix("stub:") {
        let dim = dim.parse().map_err(|_| BackendError::BadSpec(spec.to_string()))?;
        return Ok(Box::new(StubBackend::new(dim)?));
    }
    if let Some(url) = spec.strip_prefix("sidecar:") {
        if url.is_empty() {
            return Err(BackendError::BadSpec(spec.to_string()));
        }
        return Ok(Box::new(SidecarBackend::connect(url)?));
    }
    Err(BackendError::BadSpec(spec.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn s(x: &str) -> String {
        x.to_string()
    }

    #[test]
    fn deterministic_and_unit_norm() {
        let texts = vec![s("What is RBA?"), s("What is RBA?"), s(""), s("a b c d e f g")];
        let a = stub_embed(&texts, 256);
        let b = stub_embed(&texts, 256);
        assert_eq!(a, b);
        assert_eq!(a[0], a[1]);
        for v in &a {
            let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6);
        }
        assert_eq!(a[2][0], 1.0);
    }

    #[test]
    fn bad_dimension_rejected() {
        assert!(StubBackend::new(4).is_err());
        assert!(StubBackend::new(8).is_ok());
    }

    #[test]
    fn identical_pairs_score_one() {
        let b = StubBackend::default();
        let scores = b
            .pair_score(&[(s("how does rba work"), s("how does rba work"))])
            .unwrap();
        assert!((scores[0] - 1.0).abs() < 1e-12);
    }

    /// Bound for the disjoint-text cosine assertion, measured over 1000
    /// random token-disjoint pairs of 4-12 tokens before pinning 0.3.
    #[test]
    fn disjoint_texts_have_small_cosine() {
        let mut rng = ChaCha8Rng::seed_from_u64(20_240_611);
        let vocab: Vec<String> = (0..5000).map(|i| format!("tok{i}")).collect();
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let mut words: Vec<&String> = vocab.choose_multiple(&mut rng, 24).collect();
            words.shuffle(&mut rng);
            let la = rng.gen_range(4..=12);
            let lb = rng.gen_range(4..=12);
            let a = words[..la].iter().map(|w| w.as_str()).collect::<Vec<_>>().join(" ");
            let b = words[12..12 + lb].iter().map(|w| w.as_str()).collect::<Vec<_>>().join(" ");
            let e = stub_embed(&[a, b], 256);
            worst = worst.max(cosine(&e[0], &e[1]).abs());
        }
        assert!(worst < 0.3, "worst |cos| = {worst}");
    }

    #[test]
    fn backend_spec_parsing() {
        assert_eq!(backend_from_spec("stub").unwrap().id().embed_model, "stub-hash-256");
        assert_eq!(backend_from_spec("stub:64").unwrap().id().embed_model, "stub-hash-64");
        assert!(backend_from_spec("stub:2").is_err());
        assert!(backend_from_spec("sidecar:").is_err());
        assert!(backend_from_spec("bert").is_err());
    }
}
