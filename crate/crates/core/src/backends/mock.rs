//! Deterministic stand-ins for the sidecar and the LLMs, driven by lookup
//! tables. [`MockServer`] serves the same logic over HTTP.

use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::protocol::{chat_response_body, ChatMessage, ChatPurpose, ChatRequest, RoleFrame, WireRequest};
use super::{BackendError, Service};
use crate::corpus::Lang;
use crate::decompose::{DepNode, DependencyTree};

/// Canned responses. Keys are exact texts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockTables {
    /// question -> reference context
    pub contexts: BTreeMap<String, String>,
    /// Questions, texts or hypotheses whose requests fail as unavailable.
    pub unavailable: BTreeSet<String>,
    /// answer text -> SRL frames
    pub frames: BTreeMap<String, Vec<RoleFrame>>,
    /// answer text -> dependency parse
    pub trees: BTreeMap<String, DependencyTree>,
    /// hypothesis -> (entailment, neutral, contradiction)
    pub nli: BTreeMap<String, [f64; 3]>,
    /// chat model -> span -> verifier reply; model "*" applies to all
    pub judgments: BTreeMap<String, BTreeMap<String, String>>,
    /// Names reported by the health endpoint.
    pub models: Vec<String>,
}

impl MockTables {
    pub fn load(path: &Path) -> Result<Self, String> {
        let raw = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&raw).map_err(|e| format!("{}: {e}", path.display()))
    }

    fn judgment(&self, model: &str, span: &str) -> Option<&String> {
        self.judgments
            .get(model)
            .and_then(|t| t.get(span))
            .or_else(|| self.judgments.get("*").and_then(|t| t.get(span)))
    }
}

fn words(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Fallback NLI: a hypothesis contained in the premise is fully entailed;
/// otherwise the share of hypothesis words found in the premise goes to
/// entailment and the rest to neutral.
pub fn overlap_triple(premise: &str, hypothesis: &str) -> [f64; 3] {
    let p = premise.to_lowercase();
    let h = hypothesis.trim().to_lowercase();
    if !h.is_empty() && p.contains(&h) {
        return [1.0, 0.0, 0.0];
    }
    let hw = words(hypothesis);
    if hw.is_empty() {
        return [0.0, 1.0, 0.0];
    }
    let pw: BTreeSet<String> = words(premise).into_iter().collect();
    let r = hw.iter().filter(|w| pw.contains(*w)).count() as f64 / hw.len() as f64;
    [r, 1.0 - r, 0.0]
}

/// Flat parse used when no tree is recorded: first word is the root and has
/// no verbal tag, so the sentence reads as nominal.
fn flat_tree(text: &str) -> DependencyTree {
    let nodes = text
        .split_whitespace()
        .enumerate()
        .map(|(i, w)| DepNode {
            index: i + 1,
            form: w.to_string(),
            pos: "X".into(),
            head: if i == 0 { 0 } else { 1 },
            rel: if i == 0 { "root".into() } else { "dep".into() },
        })
        .collect();
    DependencyTree { nodes }
}

pub struct MockService {
    tables: MockTables,
}

impl MockService {
    pub fn new(tables: MockTables) -> Self {
        Self { tables }
    }

    pub fn tables(&self) -> &MockTables {
        &self.tables
    }

    fn check_available(&self, key: &str) -> Result<(), BackendError> {
        if self.tables.unavailable.contains(key) {
            Err(BackendError::Unavailable(format!("mock marks {key:?} unavailable")))
        } else {
            Ok(())
        }
    }

    fn chat(&self, req: &ChatRequest) -> Result<Value, BackendError> {
        let content = req.messages.iter().rev().find(|m| m.role == "user").map_or("", |m| m.content.as_str());
        let purpose = match &req.purpose {
            Some(p) => p.clone(),
            None => self.infer_purpose(&req.model, content),
        };
        let reply = match purpose {
            ChatPurpose::Retrieval { question, .. } => {
                self.check_available(&question)?;
                self.tables
                    .contexts
                    .get(&question)
                    .cloned()
                    .unwrap_or_else(|| format!("Reference notes for the question: {question}"))
            }
            ChatPurpose::Verification { question, span } => {
                self.check_available(&question)?;
                self.tables
                    .judgment(&req.model, &span)
                    .cloned()
                    .unwrap_or_else(|| "UNSURE: no recorded judgment for this span.".into())
            }
        };
        Ok(chat_response_body(&reply))
    }

    // Over HTTP the purpose is not transmitted; recover it from the prompt.
    fn infer_purpose(&self, model: &str, content: &str) -> ChatPurpose {
        let spans = [self.tables.judgments.get(model), self.tables.judgments.get("*")];
        let span = spans
            .iter()
            .flatten()
            .flat_map(|t| t.keys())
            .filter(|k| content.contains(&format!("\"{k}\"")))
            .max_by_key(|k| k.len());
        let question = self
            .tables
            .contexts
            .keys()
            .chain(self.tables.unavailable.iter())
            .filter(|q| content.contains(q.as_str()))
            .max_by_key(|q| q.len())
            .cloned()
            .unwrap_or_else(|| content.to_string());
        match span {
            Some(span) => ChatPurpose::Verification { question, span: span.clone() },
            None => ChatPurpose::Retrieval { question, lang: Lang::En },
        }
    }
}

impl Service for MockService {
    fn call(&self, request: &WireRequest) -> Result<Value, BackendError> {
        match request {
            WireRequest::Srl { text, .. } => {
                self.check_available(text)?;
                let frames = self.tables.frames.get(text).or_else(|| self.tables.frames.get(text.trim()));
                Ok(json!({ "frames": frames.cloned().unwrap_or_default() }))
            }
            WireRequest::DepParse { text, .. } => {
                self.check_available(text)?;
                let tree = self.tables.trees.get(text).cloned().unwrap_or_else(|| flat_tree(text));
                Ok(serde_json::to_value(tree).expect("trees serialize"))
            }
            WireRequest::Nli { premise, hypothesis } => {
                self.check_available(hypothesis)?;
                let [e, n, c] = self
                    .tables
                    .nli
                    .get(hypothesis)
                    .copied()
                    .unwrap_or_else(|| overlap_triple(premise, hypothesis));
                Ok(json!({ "entailment": e, "neutral": n, "contradiction": c }))
            }
            WireRequest::Chat(req) => self.chat(req),
        }
    }
}

/// Mock sidecar listening on a local port. Stops when dropped.
pub struct MockServer {
    addr: SocketAddr,
    server: Arc<tiny_http::Server>,
    requests: Arc<AtomicUsize>,
    worker: Option<JoinHandle<()>>,
}

#[derive(Deserialize)]
struct TextBody {
    text: String,
    #[serde(default = "default_lang")]
    lang: String,
}

fn default_lang() -> String {
    "EN".into()
}

#[derive(Deserialize)]
struct NliBody {
    premise: String,
    hypothesis: String,
}

#[derive(Deserialize)]
struct ChatBody {
    model: String,
    messages: Vec<ChatMessage>,
    #[serde(default)]
    temperature: f64,
}

fn route(service: &MockService, method: &str, path: &str, body: &[u8]) -> (u16, Value) {
    fn parse<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, (u16, Value)> {
        serde_json::from_slice(body).map_err(|e| (422, json!({ "error": e.to_string() })))
    }
    let request = match (method, path) {
        ("GET", "/healthz") => {
            return (200, json!({ "status": "ok", "models": service.tables().models }));
        }
        ("POST", "/v1/srl") | ("POST", "/v1/depparse") => match parse::<TextBody>(body) {
            Ok(b) => {
                let lang = match b.lang.parse::<Lang>() {
                    Ok(l) => l,
                    Err(e) => return (422, json!({ "error": e })),
                };
                if path == "/v1/srl" {
                    WireRequest::Srl { text: b.text, lang }
                } else {
                    WireRequest::DepParse { text: b.text, lang }
                }
            }
            Err(e) => return e,
        },
        ("POST", "/v1/nli") => match parse::<NliBody>(body) {
            Ok(b) => WireRequest::Nli { premise: b.premise, hypothesis: b.hypothesis },
            Err(e) => return e,
        },
        ("POST", "/v1/chat/completions") => match parse::<ChatBody>(body) {
            Ok(b) => WireRequest::Chat(ChatRequest {
                model: b.model,
                messages: b.messages,
                temperature: b.temperature,
                purpose: None,
            }),
            Err(e) => return e,
        },
        _ => return (404, json!({ "error": format!("no route for {method} {path}") })),
    };
    match service.call(&request) {
        Ok(v) => (200, v),
        Err(BackendError::Unavailable(m)) => (503, json!({ "error": m })),
        Err(e) => (422, json!({ "error": e.to_string() })),
    }
}

impl MockServer {
    /// Bind to `addr` (use port 0 for an ephemeral port) and serve in a
    /// background thread.
    pub fn start(addr: &str, tables: MockTables) -> std::io::Result<Self> {
        let server = tiny_http::Server::http(addr).map_err(std::io::Error::other)?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("mock server is not on an IP socket"))?;
        let server = Arc::new(server);
        let requests = Arc::new(AtomicUsize::new(0));
        let service = MockService::new(tables);
        let worker = {
            let server = server.clone();
            let requests = requests.clone();
            std::thread::spawn(move || {
                for mut req in server.incoming_requests() {
                    requests.fetch_add(1, Ordering::SeqCst);
                    let mut body = Vec::new();
                    let (status, value) = match req.as_reader().read_to_end(&mut body) {
                        Ok(_) => route(&service, req.method().as_str(), req.url(), &body),
                        Err(e) => (400, json!({ "error": e.to_string() })),
                    };
                    let header = tiny_http::Header::from_bytes("Content-Type", "application/json")
                        .expect("static header is valid");
                    let resp = tiny_http::Response::from_string(value.to_string())
                        .with_status_code(status)
                        .with_header(header);
                    if let Err(e) = req.respond(resp) {
                        log::warn!("mock server could not respond: {e}");
                    }
                }
            })
        };
        Ok(Self { addr, server, requests, worker: Some(worker) })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Requests received so far.
    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    /// Block until the server thread exits (it only does when unblocked).
    pub fn wait(mut self) {
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}
