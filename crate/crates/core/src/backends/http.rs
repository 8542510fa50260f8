//! Blocking HTTP transport with bounded retries.

use std::io::Read;
use std::time::Duration;

use serde_json::Value;

use super::protocol::WireRequest;
use super::{BackendError, Service};

const MAX_BODY: u64 = 32 * 1024 * 1024;

/// Talks to either the inference sidecar (base URL, fixed paths) or a
/// chat-completion endpoint (full URL).
pub struct HttpService {
    endpoint: String,
    agent: ureq::Agent,
    max_retries: u32,
    backoff: Duration,
    api_key: Option<String>,
}

impl HttpService {
    pub fn new(endpoint: &str, timeout: Duration, max_retries: u32, backoff: Duration, api_key: Option<String>) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        Self { endpoint: endpoint.trim_end_matches('/').to_string(), agent, max_retries, backoff, api_key }
    }

    fn url(&self, path: Option<&str>) -> String {
        match path {
            Some(p) => format!("{}{p}", self.endpoint),
            None => self.endpoint.clone(),
        }
    }

    fn once(&self, url: &str, body: Option<&Value>) -> Result<Value, Attempt> {
        let mut req = match body {
            Some(_) => self.agent.post(url),
            None => self.agent.get(url),
        };
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let result = match body {
            Some(b) => req.send_json(b),
            None => req.call(),
        };
        match result {
            Ok(resp) => {
                let mut buf = Vec::new();
                resp.into_reader()
                    .take(MAX_BODY)
                    .read_to_end(&mut buf)
                    .map_err(|e| Attempt::Retry(classify_io(url, &e)))?;
                serde_json::from_slice(&buf)
                    .map_err(|e| Attempt::Fatal(BackendError::Protocol(format!("{url}: invalid JSON body: {e}"))))
            }
            Err(ureq::Error::Status(code, resp)) => {
                let text = resp.into_string().unwrap_or_default();
                let msg = format!("{url}: HTTP {code}: {}", text.chars().take(200).collect::<String>());
                match code {
                    429 | 500 | 502 | 503 | 504 => Err(Attempt::Retry(BackendError::Unavailable(msg))),
                    501 => Err(Attempt::Fatal(BackendError::Unavailable(msg))),
                    _ => Err(Attempt::Fatal(BackendError::Protocol(msg))),
                }
            }
            Err(ureq::Error::Transport(t)) => {
                let msg = format!("{url}: {t}");
                let timed_out = msg.contains("timed out") || msg.contains("Timeout");
                Err(Attempt::Retry(if timed_out { BackendError::Timeout(msg) } else { BackendError::Unavailable(msg) }))
            }
        }
    }

    fn with_retries(&self, url: &str, body: Option<&Value>) -> Result<Value, BackendError> {
        let mut attempt = 0;
        loop {
            match self.once(url, body) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) => {
                    if attempt >= self.max_retries {
                        return Err(e);
                    }
                    let delay = self.backoff * 2u32.saturating_pow(attempt);
                    log::warn!("{e}; retrying in {delay:?} ({}/{})", attempt + 1, self.max_retries);
                    std::thread::sleep(delay);
                    attempt += 1;
                }
            }
        }
    }

    /// `GET /healthz` on a sidecar.
    pub fn health(&self) -> Result<Value, BackendError> {
        self.with_retries(&self.url(Some("/healthz")), None)
    }
}

enum Attempt {
    Retry(BackendError),
    Fatal(BackendError),
}

fn classify_io(url: &str, e: &std::io::Error) -> BackendError {
    match e.kind() {
        std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock => BackendError::Timeout(format!("{url}: {e}")),
        _ => BackendError::Unavailable(format!("{url}: {e}")),
    }
}

impl Service for HttpService {
    fn call(&self, request: &WireRequest) -> Result<Value, BackendError> {
        self.with_retries(&self.url(request.path()), Some(&request.body()))
    }
}
