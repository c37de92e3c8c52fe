use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::client::{ChatRequest, ChatTransport, HttpTransport, TokenBucket, TransportError};
use super::parse::parse_numbered_list;
use super::prompt::PromptTemplate;
use super::SynthError;
use crate::corpus::{Cache, CacheError, Document, SyntheticQuerySet};
use crate::hashing::canonical_json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub model: String,
    /// Queries kept per document.
    pub m: usize,
    /// Count written into the prompt; the first `m` items are kept. Defaults
    /// to `m`.
    pub request_m: Option<usize>,
    pub temperature: f64,
    /// Extra attempts after the first.
    pub max_retries: u32,
    pub endpoint_url: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub max_in_flight: usize,
    pub requests_per_second: Option<f64>,
    pub backoff_base_ms: u64,
    pub timeout_secs: u64,
    /// Largest tolerated fraction of failed documents in a dataset build.
    pub failure_ceiling: f64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            model: "gpt-4o-mini".into(),
            m: 5,
            request_m: None,
            temperature: 0.0,
            max_retries: 3,
            endpoint_url: "https://api.openai.com/v1".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            max_in_flight: 4,
            requests_per_second: None,
            backoff_base_ms: 500,
            timeout_secs: 120,
            failure_ceiling: 0.01,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        if self.m == 0 {
            return bad("M must be at least 1".into());
        }
        if let Some(r) = self.request_m {
            if r < self.m {
                return bad(format!("request_m {r} is smaller than M {}", self.m));
            }
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature must be nonnegative, got {}", self.temperature));
        }
        if self.max_in_flight == 0 {
            return bad("max_in_flight must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.failure_ceiling) {
            return bad(format!("failure_ceiling must be in [0, 1], got {}", self.failure_ceiling));
        }
        Ok(())
    }

    fn prompt_m(&self) -> usize {
        self.request_m.unwrap_or(self.m)
    }
}

enum AttemptError {
    Cache(CacheError),
    Transport(TransportError),
}

impl From<CacheError> for AttemptError {
    fn from(e: CacheError) -> Self {
        AttemptError::Cache(e)
    }
}

/// Single-call query generation with caching, retries and rate limiting.
pub struct Generator {
    cfg: GenerationConfig,
    transport: Arc<dyn ChatTransport>,
    cache: Option<Cache>,
    bucket: TokenBucket,
    requests: AtomicU64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DocFailure {
    pub doc_id: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct DatasetOutcome {
    /// In input order, failed documents omitted.
    pub sets: Vec<SyntheticQuerySet>,
    pub failures: Vec<DocFailure>,
}

impl Generator {
    pub fn new(cfg: GenerationConfig, transport: Arc<dyn ChatTransport>, cache: Option<Cache>) -> Result<Self, SynthError> {
        cfg.validate()?;
        let bucket = TokenBucket::new(cfg.requests_per_second, cfg.max_in_flight as u32);
        Ok(Self {
            cfg,
            transport,
            cache,
            bucket,
            requests: AtomicU64::new(0),
        })
    }

    /// HTTP transport to `cfg.endpoint_url`, API key from `cfg.api_key_env`
    /// when that variable is set.
    pub fn over_http(cfg: GenerationConfig, cache: Option<Cache>) -> Result<Self, SynthError> {
        let key = std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty());
        if key.is_none() {
            log::warn!("{} is not set; sending requests without authorization", cfg.api_key_env);
        }
        let t = HttpTransport::new(&cfg.endpoint_url, key, Duration::from_secs(cfg.timeout_secs));
        Self::new(cfg, Arc::new(t), cache)
    }

    pub fn config(&self) -> &GenerationConfig {
        &self.cfg
    }

    /// Network requests issued so far (cache hits excluded).
    pub fn request_count(&self) -> u64 {
        self.requests.load(Ordering::SeqCst)
    }

    fn call(&self, body: &[u8]) -> Result<Vec<u8>, AttemptError> {
        self.bucket.acquire();
        self.requests.fetch_add(1, Ordering::SeqCst);
        self.transport
            .complete(body)
            .map(String::into_bytes)
            .map_err(AttemptError::Transport)
    }

    fn backoff(&self, attempt: u32) {
        let ms = self.cfg.backoff_base_ms.saturating_mul(1u64 << attempt.min(16));
        if ms > 0 {
            std::thread::sleep(Duration::from_millis(ms));
        }
    }

    /// One chat request per attempt; the completion is cached under the
    /// canonical request body and dropped from the cache if it parses to
    /// fewer than M items.
    pub fn generate_query_set(&self, doc: &Document, template: &PromptTemplate) -> Result<SyntheticQuerySet, SynthError> {
        let prompt = template.render(self.cfg.prompt_m(), &doc.text)?;
        let request = ChatRequest::single_user(&self.cfg.model, prompt, self.cfg.temperature);
        let body = canonical_json(&request).expect("chat request serializes");
        let key = Cache::key_for(&body);
        let attempts = self.cfg.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                self.backoff(attempt - 1);
            }
            let raw = match &self.cache {
                Some(c) => c.get_or_call(&body, || self.call(&body)),
                None => self.call(&body),
            };
            let raw = match raw {
                Ok(r) => r,
                Err(AttemptError::Transport(e)) if e.is_retryable() => {
                    log::warn!("doc {}: attempt {} failed: {e}", doc.id, attempt + 1);
                    last = e.to_string();
                    continue;
                }
                Err(AttemptError::Transport(TransportError::Status { status, excerpt })) => {
                    return Err(SynthError::Http {
                        doc_id: doc.id.clone(),
                        status,
                        excerpt,
                    });
                }
                Err(AttemptError::Transport(e)) => {
                    return Err(SynthError::Exhausted {
                        doc_id: doc.id.clone(),
                        attempts: attempt + 1,
                        last: e.to_string(),
                    });
                }
                Err(AttemptError::Cache(e @ CacheError::Corrupt { .. })) => {
                    log::warn!("{e}; discarding entry");
                    if let Some(c) = &self.cache {
                        c.remove(&key)?;
                    }
                    last = e.to_string();
                    continue;
                }
                Err(AttemptError::Cache(e)) => return Err(e.into()),
            };
            let text = String::from_utf8_lossy(&raw);
            match parse_numbered_list(&text, self.cfg.m) {
                Ok(queries) => {
                    return Ok(SyntheticQuerySet {
                        doc_id: doc.id.clone(),
                        mode: template.mode,
                        queries,
                        generator_id: self.cfg.model.clone(),
                        prompt_hash: template.prompt_hash(),
                    })
                }
                Err(e) => {
                    log::warn!("doc {}: attempt {}: {e}", doc.id, attempt + 1);
                    if let Some(c) = &self.cache {
                        c.remove(&key)?;
                    }
                    last = e.to_string();
                }
            }
        }
        Err(SynthError::Exhausted {
            doc_id: doc.id.clone(),
            attempts,
            last,
        })
    }

    /// Generates for every document with at most `max_in_flight` requests
    /// outstanding. Results are in input order.
    pub fn generate_many(
        &self,
        docs: &[Document],
        template: &PromptTemplate,
    ) -> Vec<Result<SyntheticQuerySet, SynthError>> {
        let next = AtomicUsize::new(0);
        let workers = self.cfg.max_in_flight.min(docs.len()).max(1);
        let results: std::sync::Mutex<Vec<Option<Result<SyntheticQuerySet, SynthError>>>> =
            std::sync::Mutex::new((0..docs.len()).map(|_| None).collect());
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= docs.len() {
                        break;
                    }
                    let r = self.generate_query_set(&docs[i], template);
                    results.lock().expect("result lock")[i] = Some(r);
                });
            }
        });
        results
            .into_inner()
            .expect("result lock")
            .into_iter()
            .map(|r| r.expect("every slot filled"))
            .collect()
    }

    /// Full-scale generation. Fails if the share of failed documents exceeds
    /// the configured ceiling.
    pub fn build_dataset(&self, docs: &[Document], template: &PromptTemplate) -> Result<DatasetOutcome, SynthError> {
        let mut sets = Vec::with_capacity(docs.len());
        let mut failures = Vec::new();
        for (doc, r) in docs.iter().zip(self.generate_many(docs, template)) {
            match r {
                Ok(s) => sets.push(s),
                Err(e) => failures.push(DocFailure {
                    doc_id: doc.id.clone(),
                    error: e.to_string(),
                }),
            }
        }
        if !docs.is_empty() && failures.len() as f64 / docs.len() as f64 > self.cfg.failure_ceiling {
            return Err(SynthError::CeilingExceeded {
                failed: failures.len(),
                total: docs.len(),
                ceiling: self.cfg.failure_ceiling,
                docs: failures.iter().map(|f| format!("{} ({})", f.doc_id, f.error)).collect(),
            });
        }
        for f in &failures {
            log::warn!("skipping doc {}: {}", f.doc_id, f.error);
        }
        Ok(DatasetOutcome { sets, failures })
    }
}

/// Seeded sample of `n` documents without replacement, kept in input order.
pub fn sample_documents(docs: &[Document], n: usize, seed: u64) -> Vec<Document> {
    if n >= docs.len() {
        return docs.to_vec();
    }
    let mut idx = sample(&mut ChaCha8Rng::seed_from_u64(seed), docs.len(), n).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| docs[i].clone()).collect()
}
