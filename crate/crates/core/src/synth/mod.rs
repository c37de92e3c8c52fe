//! Multi-query generation: prompt rendering, the chat client, numbered-list
//! parsing and diversity-guided prompt selection.

mod client;
mod generate;
mod parse;
mod prompt;
mod tune;

use thiserror::Error;

use crate::corpus::CacheError;
use crate::qd_metrics::QdError;

pub use client::{
    completion_text, ChatMessage, ChatRequest, ChatTransport, HttpTransport, TokenBucket, TransportError,
};
pub use generate::{sample_documents, DatasetOutcome, DocFailure, GenerationConfig, Generator};
pub use parse::{parse_numbered_list, ParseError};
pub use prompt::{render_prompt, PromptTemplate, DIVERSE_TEMPLATE, PARAPHRASE_TEMPLATE};
pub use tune::{
    select_prompt, tune_prompt, CandidateMeasurement, DiversityProbe, PromptSelection, QdProbe, Target,
    DEFAULT_SAMPLE_SIZE, DIVERSITY_THRESHOLD,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid prompt template: {0}")]
    Template(String),
    #[error("unresolved placeholder {0} in prompt template")]
    UnresolvedPlaceholder(String),
    #[error("invalid generation config: {0}")]
    Config(String),
    #[error("doc {doc_id}: HTTP {status}: {excerpt}")]
    Http { doc_id: String, status: u16, excerpt: String },
    #[error("doc {doc_id}: gave up after {attempts} attempts: {last}")]
    Exhausted { doc_id: String, attempts: u32, last: String },
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("{failed} of {total} documents failed, above the {ceiling} ceiling: {}", docs.join(", "))]
    CeilingExceeded {
        failed: usize,
        total: usize,
        ceiling: f64,
        docs: Vec<String>,
    },
    #[error("no candidate prompt meets the {target} rule; measured {measurements}")]
    NoCandidate { target: Target, measurements: String },
    #[error(transparent)]
    Qd(#[from] QdError),
}
