//! Wire formats shared by the inference sidecar, the mock service, and the
//! chat-completion LLM endpoints.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendError, EntailmentVerdict, Judgment};
use crate::corpus::Lang;
use crate::decompose::DependencyTree;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleArgument {
    pub role: String,
    pub text: String,
}

/// One predicate with its arguments, as returned by `POST /v1/srl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleFrame {
    pub predicate: String,
    #[serde(default)]
    pub arguments: Vec<RoleArgument>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// What a chat request is for. Never sent over the wire; mock services use
/// it to answer without parsing prompts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChatPurpose {
    Retrieval { question: String, lang: Lang },
    Verification { question: String, span: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub purpose: Option<ChatPurpose>,
}

/// A request in wire terms.
#[derive(Debug, Clone, PartialEq)]
pub enum WireRequest {
    Srl { text: String, lang: Lang },
    DepParse { text: String, lang: Lang },
    Nli { premise: String, hypothesis: String },
    Chat(ChatRequest),
}

impl WireRequest {
    /// URL path relative to the service base, or `None` for chat requests,
    /// which go to the configured endpoint as is.
    pub fn path(&self) -> Option<&'static str> {
        match self {
            WireRequest::Srl { .. } => Some("/v1/srl"),
            WireRequest::DepParse { .. } => Some("/v1/depparse"),
            WireRequest::Nli { .. } => Some("/v1/nli"),
            WireRequest::Chat(_) => None,
        }
    }

    pub fn body(&self) -> Value {
        match self {
            WireRequest::Srl { text, lang } | WireRequest::DepParse { text, lang } => {
                json!({ "text": text, "lang": lang.code() })
            }
            WireRequest::Nli { premise, hypothesis } => json!({ "premise": premise, "hypothesis": hypothesis }),
            WireRequest::Chat(c) => json!({
                "model": c.model,
                "messages": c.messages,
                "temperature": c.temperature,
            }),
        }
    }
}

fn protocol(msg: impl Into<String>) -> BackendError {
    BackendError::Protocol(msg.into())
}

pub fn parse_srl_response(body: &Value) -> Result<Vec<RoleFrame>, BackendError> {
    let frames = body.get("frames").ok_or_else(|| protocol("srl response lacks \"frames\""))?;
    Vec::<RoleFrame>::deserialize(frames).map_err(|e| protocol(format!("srl frames: {e}")))
}

pub fn parse_depparse_response(body: &Value) -> Result<DependencyTree, BackendError> {
    DependencyTree::deserialize(body).map_err(|e| protocol(format!("dependency parse: {e}")))
}

/// Read an `{entailment, neutral, contradiction}` triple. Percentages are
/// converted to fractions and the triple is renormalized when needed.
pub fn parse_nli_response(body: &Value) -> Result<EntailmentVerdict, BackendError> {
    let get = |name: &str| {
        body.get(name)
            .and_then(Value::as_f64)
            .ok_or_else(|| protocol(format!("nli response lacks numeric {name:?}")))
    };
    EntailmentVerdict::from_triple(get("entailment")?, get("neutral")?, get("contradiction")?)
}

/// Text of the first choice of a chat-completion response.
pub fn parse_chat_response(body: &Value) -> Result<String, BackendError> {
    body.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| protocol("chat response lacks choices[0].message.content"))
}

pub fn chat_response_body(content: &str) -> Value {
    json!({ "choices": [{ "index": 0, "message": { "role": "assistant", "content": content } }] })
}

/// Map a verifier reply onto a judgment by its leading keyword. The flag is
/// false when no keyword matched and the reply was read as unsure.
pub fn parse_judgment(reply: &str) -> (Judgment, bool) {
    let head: String = reply
        .trim_start_matches(|c: char| !c.is_alphabetic())
        .chars()
        .take_while(|c| c.is_alphabetic() || *c == '-' || *c == '_')
        .collect::<String>()
        .to_ascii_uppercase();
    match head.as_str() {
        "HALLUCINATION" | "HALLUCINATED" => (Judgment::ConfirmedHallucination, true),
        "SUPPORTED" => (Judgment::Refuted, true),
        "UNSURE" => (Judgment::Unsure, true),
        _ => (Judgment::Unsure, false),
    }
}
