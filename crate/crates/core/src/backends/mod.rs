//! Clients for every model-dependent service: context retrieval, NLI,
//! SRL and dependency parsing, and fact-check verifiers.
//!
//! Each client is an [`Endpoint`]: a [`Service`] (HTTP, or the in-process
//! mock) behind a [`ResponseCache`]. Typed operations build a wire request,
//! key it, and go through the cache, so a warm cache or a fixture directory
//! replays a session without any service at all.

pub mod cache;
pub mod conformance;
pub mod http;
pub mod mock;
pub mod protocol;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub use cache::{cache_key, sha256_hex, ResponseCache};
pub use protocol::{ChatMessage, ChatPurpose, ChatRequest, RoleArgument, RoleFrame, WireRequest};

use crate::corpus::Lang;
use crate::decompose::{DependencySource, DependencyTree, SrlSource};
use cache::Lookup;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("backend timed out: {0}")]
    Timeout(String),
    #[error("backend protocol error: {0}")]
    Protocol(String),
    #[error("retrieval returned an empty context for {0:?}")]
    EmptyContext(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
}

/// Anything that answers wire requests with JSON bodies.
pub trait Service: Send + Sync {
    fn call(&self, request: &WireRequest) -> Result<Value, BackendError>;
}

/// Placeholder for an HTTP backend without an endpoint; every call fails.
pub struct Unconfigured(pub String);

impl Service for Unconfigured {
    fn call(&self, _: &WireRequest) -> Result<Value, BackendError> {
        Err(BackendError::Unavailable(format!("no endpoint configured for {}", self.0)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntailmentLabel {
    Entailment,
    Neutral,
    Contradiction,
}

/// NLI output as fractions summing to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntailmentVerdict {
    pub p_entail: f64,
    pub p_neutral: f64,
    pub p_contra: f64,
    pub label: EntailmentLabel,
}

impl EntailmentVerdict {
    /// Build a verdict from raw class scores.
    ///
    /// A triple summing to more than 1.5 is read as percentages. A triple
    /// whose sum is off by more than 1e-6 is renormalized; otherwise the
    /// values are kept as given. Ties in the argmax go to entailment, then
    /// neutral.
    pub fn from_triple(e: f64, n: f64, c: f64) -> Result<Self, BackendError> {
        if [e, n, c].iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(BackendError::Protocol(format!("invalid NLI triple ({e}, {n}, {c})")));
        }
        let mut t = [e, n, c];
        let mut sum: f64 = t.iter().sum();
        if sum <= 0.0 {
            return Err(BackendError::Protocol("NLI triple sums to zero".into()));
        }
        if sum > 1.5 {
            t.iter_mut().for_each(|x| *x /= 100.0);
            sum /= 100.0;
        }
        if (sum - 1.0).abs() > 1e-6 {
            t.iter_mut().for_each(|x| *x /= sum);
        }
        let label = if t[0] >= t[1] && t[0] >= t[2] {
            EntailmentLabel::Entailment
        } else if t[1] >= t[2] {
            EntailmentLabel::Neutral
        } else {
            EntailmentLabel::Contradiction
        };
        Ok(Self { p_entail: t[0], p_neutral: t[1], p_contra: t[2], label })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextDocument {
    pub question_id: String,
    pub text: String,
    pub source: String,
    /// Unix seconds of the original fetch; unknown for bare fixtures.
    pub retrieved_at: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Judgment {
    ConfirmedHallucination,
    Refuted,
    Unsure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationVerdict {
    pub verifier: String,
    pub span_text: String,
    pub judgment: Judgment,
    pub rationale: String,
    /// False when the reply had no recognizable keyword.
    pub parsed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Http,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Sidecar base URL, or full chat-completion URL for LLM backends.
    pub endpoint: Option<String>,
    pub model_name: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    /// Base delay between retries; doubled after each attempt.
    pub backoff_ms: u64,
    pub cache_dir: Option<std::path::PathBuf>,
    /// Sampling temperature for retrieval and verifier LLMs.
    pub temperature: f64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Http,
            endpoint: None,
            model_name: String::new(),
            timeout_secs: 60.0,
            max_retries: 3,
            backoff_ms: 500,
            cache_dir: None,
            temperature: 0.0,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.timeout_secs.is_nan() || self.timeout_secs <= 0.0 {
            return Err(format!("timeout_secs must be positive, got {}", self.timeout_secs));
        }
        Ok(())
    }

    pub fn timeout(&self) -> std::time::Duration {
        std::time::Duration::from_secs_f64(self.timeout_secs)
    }
}

/// Versioned prompt text with `{placeholder}` slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub version: String,
    pub template: String,
}

impl PromptTemplate {
    pub fn retrieval_default() -> Self {
        Self {
            version: "retrieval-v1".into(),
            template: "Provide a concise factual reference passage, with key facts, that answers: {question}. \
                       Answer in {language}."
                .into(),
        }
    }

    pub fn verifier_default() -> Self {
        Self {
            version: "verifier-v1".into(),
            template: "You are a careful fact-checker.\n\
                       Question: {question}\n\
                       Reference context: {context}\n\
                       Flagged span from an answer to the question: \"{span}\"\n\
                       Is the flagged span a hallucination, i.e. unsupported by or contradicting the facts? \
                       Start your reply with exactly one keyword, HALLUCINATION, SUPPORTED or UNSURE, \
                       then give a one-sentence rationale."
                .into(),
        }
    }

    pub fn render(&self, slots: &[(&str, &str)]) -> String {
        slots
            .iter()
            .fold(self.template.clone(), |acc, (name, value)| acc.replace(&format!("{{{name}}}"), value))
    }
}

/// Per-endpoint counters for the run report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendStats {
    pub name: String,
    pub model_name: String,
    pub requests: usize,
    pub service_calls: usize,
    pub cache_hits: usize,
    pub failures: usize,
    pub hit_rate: f64,
}

/// One service behind one cache.
pub struct Endpoint {
    name: String,
    model_name: String,
    service: Arc<dyn Service>,
    cache: ResponseCache,
    offline: bool,
    requests: AtomicUsize,
    service_calls: AtomicUsize,
    cache_hits: AtomicUsize,
    failures: AtomicUsize,
}

impl Endpoint {
    /// `offline` endpoints answer from the cache only; a miss is reported as
    /// an unavailable backend.
    pub fn new(name: &str, model_name: &str, service: Arc<dyn Service>, cache: ResponseCache, offline: bool) -> Self {
        Self {
            name: name.to_string(),
            model_name: model_name.to_string(),
            service,
            cache,
            offline,
            requests: AtomicUsize::new(0),
            service_calls: AtomicUsize::new(0),
            cache_hits: AtomicUsize::new(0),
            failures: AtomicUsize::new(0),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    fn request(&self, op: &str, key_inputs: &Value, req: &WireRequest) -> Result<cache::CachedResponse, BackendError> {
        self.requests.fetch_add(1, Ordering::Relaxed);
        let canonical = serde_json::to_vec(key_inputs).expect("JSON values always serialize");
        let key = cache_key(op, &canonical);
        let result = self.cache.get_or_fetch(&key, op, &req.body(), || {
            if self.offline {
                return Err(BackendError::Unavailable(format!("{}: no fixture for {op} request {key}", self.name)));
            }
            self.service_calls.fetch_add(1, Ordering::Relaxed);
            self.service.call(req)
        });
        match result {
            Ok((resp, lookup)) => {
                if lookup == Lookup::Hit {
                    self.cache_hits.fetch_add(1, Ordering::Relaxed);
                }
                Ok(resp)
            }
            Err(e) => {
                self.failures.fetch_add(1, Ordering::Relaxed);
                Err(e)
            }
        }
    }

    pub fn stats(&self) -> BackendStats {
        let requests = self.requests.load(Ordering::Relaxed);
        let cache_hits = self.cache_hits.load(Ordering::Relaxed);
        BackendStats {
            name: self.name.clone(),
            model_name: self.model_name.clone(),
            requests,
            service_calls: self.service_calls.load(Ordering::Relaxed),
            cache_hits,
            failures: self.failures.load(Ordering::Relaxed),
            hit_rate: if requests == 0 { 0.0 } else { cache_hits as f64 / requests as f64 },
        }
    }
}

/// The services one detection run needs.
pub struct Backends {
    pub retrieval: Endpoint,
    pub nli: Endpoint,
    pub parser: Endpoint,
    pub retrieval_prompt: PromptTemplate,
    pub retrieval_temperature: f64,
}

impl Backends {
    /// Reference context for a question, from one chat completion.
    pub fn retrieve_context(&self, question_id: &str, question: &str, lang: Lang) -> Result<ContextDocument, BackendError> {
        let model = self.retrieval.model_name().to_string();
        let prompt = self.retrieval_prompt.render(&[("question", question), ("language", lang.name())]);
        let req = WireRequest::Chat(ChatRequest {
            model: model.clone(),
            messages: vec![ChatMessage { role: "user".into(), content: prompt }],
            temperature: self.retrieval_temperature,
            purpose: Some(ChatPurpose::Retrieval { question: question.to_string(), lang }),
        });
        let key = json!({
            "question": question,
            "lang": lang.code(),
            "model": model,
            "prompt_version": self.retrieval_prompt.version,
        });
        let resp = self.retrieval.request("retrieve", &key, &req)?;
        let text = protocol::parse_chat_response(&resp.body)?;
        if text.trim().is_empty() {
            return Err(BackendError::EmptyContext(question.to_string()));
        }
        Ok(ContextDocument {
            question_id: question_id.to_string(),
            text,
            source: format!("{}:{}", self.retrieval.name(), model),
            retrieved_at: resp.fetched_at,
        })
    }

    pub fn entail(&self, premise: &str, hypothesis: &str) -> Result<EntailmentVerdict, BackendError> {
        if hypothesis.trim().is_empty() {
            return Err(BackendError::Precondition("empty NLI hypothesis".into()));
        }
        let req = WireRequest::Nli { premise: premise.to_string(), hypothesis: hypothesis.to_string() };
        let key = json!({
            "premise_sha256": sha256_hex(premise.as_bytes()),
            "hypothesis": hypothesis,
            "model": self.nli.model_name(),
        });
        let resp = self.nli.request("nli", &key, &req)?;
        protocol::parse_nli_response(&resp.body)
    }

    pub fn srl_parse(&self, text: &str, lang: Lang) -> Result<Vec<RoleFrame>, BackendError> {
        if text.trim().is_empty() {
            return Ok(Vec::new());
        }
        let req = WireRequest::Srl { text: text.to_string(), lang };
        let key = json!({ "text": text, "lang": lang.code(), "model": self.parser.model_name() });
        let resp = self.parser.request("srl", &key, &req)?;
        protocol::parse_srl_response(&resp.body)
    }

    pub fn dep_parse(&self, text: &str, lang: Lang) -> Result<DependencyTree, BackendError> {
        if text.trim().is_empty() {
            return Ok(DependencyTree::default());
        }
        let req = WireRequest::DepParse { text: text.to_string(), lang };
        let key = json!({ "text": text, "lang": lang.code(), "model": self.parser.model_name() });
        let resp = self.parser.request("depparse", &key, &req)?;
        protocol::parse_depparse_response(&resp.body)
    }

    pub fn stats(&self) -> Vec<BackendStats> {
        vec![self.retrieval.stats(), self.nli.stats(), self.parser.stats()]
    }
}

impl SrlSource for Backends {
    fn srl_frames(&self, text: &str, lang: Lang) -> Result<Vec<RoleFrame>, BackendError> {
        self.srl_parse(text, lang)
    }
}

impl DependencySource for Backends {
    fn dependency_tree(&self, text: &str, lang: Lang) -> Result<DependencyTree, BackendError> {
        self.dep_parse(text, lang)
    }
}

/// A fact-checking LLM.
pub struct Verifier {
    pub id: String,
    pub endpoint: Endpoint,
    pub prompt: PromptTemplate,
    pub temperature: f64,
}

impl Verifier {
    /// Ask the verifier whether `span_text` is a hallucination. Replies
    /// without a recognizable keyword come back as unsure, with the raw
    /// reply as rationale.
    pub fn verify_span(&self, question: &str, context: &str, span_text: &str) -> Result<VerificationVerdict, BackendError> {
        if span_text.trim().is_empty() {
            return Err(BackendError::Precondition("empty span to verify".into()));
        }
        let model = self.endpoint.model_name().to_string();
        let prompt = self.prompt.render(&[("question", question), ("context", context), ("span", span_text)]);
        let req = WireRequest::Chat(ChatRequest {
            model: model.clone(),
            messages: vec![ChatMessage { role: "user".into(), content: prompt }],
            temperature: self.temperature,
            purpose: Some(ChatPurpose::Verification { question: question.to_string(), span: span_text.to_string() }),
        });
        let key = json!({
            "verifier": self.id,
            "model": model,
            "question": question,
            "span": span_text,
            "context_sha256": sha256_hex(context.as_bytes()),
            "prompt_version": self.prompt.version,
        });
        let resp = self.endpoint.request("verify", &key, &req)?;
        let reply = protocol::parse_chat_response(&resp.body)?;
        let (judgment, parsed) = protocol::parse_judgment(&reply);
        Ok(VerificationVerdict {
            verifier: self.id.clone(),
            span_text: span_text.to_string(),
            judgment,
            rationale: reply.trim().to_string(),
            parsed,
        })
    }

    pub fn stats(&self) -> BackendStats {
        self.endpoint.stats()
    }
}
