//! In-process HTTP fixtures: a chat-completions server and a scorer sidecar.

#![allow(dead_code)]

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use regex::Regex;
use serde_json::{json, Value};
use synthq_core::qd_metrics::stub_embed;

#[derive(Debug, Clone)]
pub struct Recorded {
    pub method: String,
    pub url: String,
    pub body: Vec<u8>,
}

impl Recorded {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).expect("request body is JSON")
    }
}

type Handler = dyn Fn(&Recorded) -> (u16, String) + Send + Sync;

pub struct FixtureServer {
    pub url: String,
    pub requests: Arc<Mutex<Vec<Recorded>>>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl FixtureServer {
    pub fn start(handler: impl Fn(&Recorded) -> (u16, String) + Send + Sync + 'static) -> Self {
        let server = tiny_http::Server::http("127.0.0.1:0").expect("bind fixture server");
        let addr = server.server_addr().to_ip().expect("ip listener");
        let requests = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let handler: Arc<Handler> = Arc::new(handler);
        let handle = {
            let requests = requests.clone();
            let stop = stop.clone();
            std::thread::spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    let Ok(Some(mut req)) = server.recv_timeout(Duration::from_millis(20)) else {
                        continue;
                    };
                    let mut body = Vec::new();
                    req.as_reader().read_to_end(&mut body).ok();
                    let rec = Recorded {
                        method: req.method().to_string(),
                        url: req.url().to_string(),
                        body,
                    };
                    let (status, text) = handler(&rec);
                    requests.lock().unwrap().push(rec);
                    let header = tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
                    let resp = tiny_http::Response::from_string(text)
                        .with_status_code(status)
                        .with_header(header);
                    req.respond(resp).ok();
                }
            })
        };
        Self {
            url: format!("http://{addr}"),
            requests,
            stop,
            handle: Some(handle),
        }
    }

    pub fn count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }

    pub fn recorded(&self) -> Vec<Recorded> {
        self.requests.lock().unwrap().clone()
    }
}

impl Drop for FixtureServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.handle.take() {
            h.join().ok();
        }
    }
}

/// Queries the fixture LLM returns for a prompt: paraphrase prompts get
/// near-identical rewordings, diverse prompts get token-disjoint queries.
pub fn fixture_queries(prompt: &str) -> Vec<String> {
    let n: usize = Regex::new(r"Generate (\d+) queries: 1\.$")
        .unwrap()
        .captures(prompt)
        .map(|c| c[1].parse().unwrap())
        .unwrap_or(5);
    let doc = prompt
        .lines()
        .find_map(|l| l.strip_prefix("Document(s): "))
        .unwrap_or("")
        .to_string();
    let topic = doc.split_whitespace().next().unwrap_or("it").trim_matches('.').to_lowercase();
    if prompt.contains("paraphrase queries") {
        (1..=n)
            .map(|i| format!("what is the main finding about {topic} in this study version {i}"))
            .collect()
    } else {
        (1..=n)
            .map(|i| {
                let w = |k: &str| format!("{k}{i}{topic}");
                format!("{} {} {}", w("alpha"), w("beta"), w("gamma"))
            })
            .collect()
    }
}

/// Completion text in the shape models return after a prompt ending "1.":
/// the first item carries no marker.
pub fn numbered(queries: &[String]) -> String {
    queries
        .iter()
        .enumerate()
        .map(|(i, q)| if i == 0 { format!(" {q}") } else { format!("{}. {q}", i + 1) })
        .collect::<Vec<_>>()
        .join("\n")
}

fn completion(content: &str) -> String {
    json!({
        "id": "fixture",
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}]
    })
    .to_string()
}

/// Chat-completions fixture. Documents containing `FAIL500` always get a
/// 500, `FAIL401` a 401, and `SHORT` a one-item completion.
pub fn llm_server() -> FixtureServer {
    FixtureServer::start(|rec| {
        if rec.method != "POST" || !rec.url.ends_with("/chat/completions") {
            return (404, json!({"error": "not found"}).to_string());
        }
        let body = rec.json();
        let prompt = body["messages"][0]["content"].as_str().unwrap_or("").to_string();
        if prompt.contains("FAIL500") {
            return (500, json!({"error": "upstream"}).to_string());
        }
        if prompt.contains("FAIL401") {
            return (401, json!({"error": "invalid api key"}).to_string());
        }
        if prompt.contains("SHORT") {
            return (200, completion("just one query"));
        }
        (200, completion(&numbered(&fixture_queries(&prompt))))
    })
}

pub const EMBED_MODEL: &str = "fixture-embed";
pub const CE_MODEL: &str = "fixture-ce";

/// Scorer sidecar fixture backed by the stub hashing embedder. `model`
/// overrides the model id reported by `/embed` (to provoke mismatches).
pub fn sidecar_server(embed_model_in_responses: &'static str) -> FixtureServer {
    FixtureServer::start(move |rec| match (rec.method.as_str(), rec.url.as_str()) {
        ("GET", "/healthz") => (
            200,
            json!({"status": "ok", "embed_model": EMBED_MODEL, "ce_model": CE_MODEL}).to_string(),
        ),
        ("POST", "/embed") => {
            let texts: Vec<String> = serde_json::from_value(rec.json()["texts"].clone()).unwrap();
            let vectors = stub_embed(&texts, 32);
            (
                200,
                json!({"vectors": vectors, "dim": 32, "model": embed_model_in_responses}).to_string(),
            )
        }
        ("POST", "/score-pairs") => {
            let pairs: Vec<[String; 2]> = serde_json::from_value(rec.json()["pairs"].clone()).unwrap();
            let scores: Vec<f64> = pairs
                .iter()
                .map(|[a, b]| if a == b { 0.99 } else { 0.05 })
                .collect();
            (200, json!({"scores": scores, "model": CE_MODEL}).to_string())
        }
        ("POST", "/segment") => {
            let texts: Vec<String> = serde_json::from_value(rec.json()["texts"].clone()).unwrap();
            // two-character chunks stand in for a real segmenter
            let tokens: Vec<Vec<String>> = texts
                .iter()
                .map(|t| {
                    let chars: Vec<char> = t.chars().filter(|c| !c.is_whitespace()).collect();
                    chars.chunks(2).map(|c| c.iter().collect()).collect()
                })
                .collect();
            (200, json!({"tokens": tokens}).to_string())
        }
        _ => (404, json!({"error": "not found"}).to_string()),
    })
}
