use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::{join_url, HttpClient};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// OpenAI-compatible chat-completions request body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl ChatRequest {
    /// The whole prompt goes out as one user message.
    pub fn single_user(model: &str, prompt: String, temperature: f64) -> Self {
        Self {
            model: model.to_string(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content: prompt,
            }],
            temperature,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("HTTP {status}: {excerpt}")]
    Status { status: u16, excerpt: String },
    #[error("{0}")]
    Network(String),
    #[error("malformed completion response: {0}")]
    BadResponse(String),
}

impl TransportError {
    /// 5xx, 429 and network failures are worth retrying; other statuses are
    /// not.
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportError::Status { status, .. } => *status >= 500 || *status == 429,
            TransportError::Network(_) => true,
            TransportError::BadResponse(_) => false,
        }
    }
}

/// Sends one serialized chat request and returns the completion text.
pub trait ChatTransport: Send + Sync {
    fn complete(&self, body: &[u8]) -> Result<String, TransportError>;
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChatMessage,
}

pub fn completion_text(body: &[u8]) -> Result<String, TransportError> {
    let resp: CompletionResponse =
        serde_json::from_slice(body).map_err(|e| TransportError::BadResponse(e.to_string()))?;
    resp.choices
        .into_iter()
        .next()
        .map(|c| c.message.content)
        .ok_or_else(|| TransportError::BadResponse("no choices".into()))
}

/// POSTs to `<endpoint>/chat/completions`.
pub struct HttpTransport {
    client: HttpClient,
    url: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(endpoint: &str, api_key: Option<String>, timeout: Duration) -> Self {
        Self {
            client: HttpClient::new(timeout),
            url: join_url(endpoint, "chat/completions"),
            api_key,
        }
    }
}

impl ChatTransport for HttpTransport {
    fn complete(&self, body: &[u8]) -> Result<String, TransportError> {
        let resp = self
            .client
            .post_json(&self.url, body, self.api_key.as_deref())
            .map_err(|e| TransportError::Network(e.to_string()))?;
        if !resp.is_success() {
            return Err(TransportError::Status {
                status: resp.status,
                excerpt: resp.excerpt(),
            });
        }
        completion_text(&resp.body)
    }
}

/// Token bucket shared by all workers. `None` rate means unlimited.
#[derive(Debug)]
pub struct TokenBucket {
    rate: Option<f64>,
    capacity: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(rate_per_sec: Option<f64>, burst: u32) -> Self {
        let capacity = burst.max(1) as f64;
        Self {
            rate: rate_per_sec.filter(|r| *r > 0.0),
            capacity,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    pub fn unlimited() -> Self {
        Self::new(None, 1)
    }

    /// Blocks until a token is available.
    pub fn acquire(&self) {
        let Some(rate) = self.rate else { return };
        loop {
            let wait = {
                let mut s = self.state.lock().expect("token bucket lock");
                let now = Instant::now();
                let refill = now.duration_since(s.1).as_secs_f64() * rate;
                s.0 = (s.0 + refill).min(self.capacity);
                s.1 = now;
                if s.0 >= 1.0 {
                    s.0 -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - s.0) / rate)
            };
            std::thread::sleep(wait);
        }
    }
}
