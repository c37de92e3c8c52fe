//! Minimal blocking JSON-over-HTTP client shared by the LLM client and the
//! scorer/segmenter sidecar client.

use std::time::Duration;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HttpError {
    #[error("request to {url} failed: {message}")]
    Transport { url: String, message: String },
}

#[derive(Debug, Clone)]
pub struct HttpResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

impl HttpResponse {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    /// Short, single-line excerpt of the body for error messages.
    pub fn excerpt(&self) -> String {
        let s = String::from_utf8_lossy(&self.body);
        let s: String = s.chars().take(200).collect();
        s.replace('\n', " ")
    }
}

#[derive(Debug, Clone)]
pub struct HttpClient {
    agent: ureq::Agent,
}

impl Default for HttpClient {
    fn default() -> Self {
        Self::new(Duration::from_secs(120))
    }
}

impl HttpClient {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self { agent }
    }

    pub fn post_json(
        &self,
        url: &str,
        body: &[u8],
        bearer: Option<&str>,
    ) -> Result<HttpResponse, HttpError> {
        let mut req = self
            .agent
            .post(url)
            .header("Content-Type", "application/json");
        if let Some(token) = bearer {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let resp = req.send(body).map_err(|e| transport(url, e))?;
        Self::finish(url, resp)
    }

    pub fn get(&self, url: &str) -> Result<HttpResponse, HttpError> {
        let resp = self.agent.get(url).call().map_err(|e| transport(url, e))?;
        Self::finish(url, resp)
    }

    fn finish(url: &str, resp: ureq::http::Response<ureq::Body>) -> Result<HttpResponse, HttpError> {
        let status = resp.status().as_u16();
        let body = resp
            .into_body()
            .with_config()
            .limit(64 * 1024 * 1024)
            .read_to_vec()
            .map_err(|e| transport(url, e))?;
        Ok(HttpResponse { status, body })
    }
}

fn transport(url: &str, e: ureq::Error) -> HttpError {
    HttpError::Transport {
        url: url.to_string(),
        message: e.to_string(),
    }
}

/// Joins a base URL and a path with exactly one slash between them.
pub fn join_url(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path.trim_start_matches('/'))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn join_url_normalizes_slashes() {
        assert_eq!(join_url("http://h:1/v1/", "/embed"), "http://h:1/v1/embed");
        assert_eq!(join_url("http://h:1", "embed"), "http://h:1/embed");
    }
}
