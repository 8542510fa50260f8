//! Protocol checks shared by the mock service and a live sidecar.

use std::collections::BTreeMap;

use serde_json::Value;

use super::http::HttpService;
use super::mock::MockTables;
use super::protocol::{parse_depparse_response, parse_nli_response, parse_srl_response, RoleArgument, RoleFrame};
use super::{Service, WireRequest};
use crate::corpus::Lang;
use crate::decompose::{srl_from_dependencies, DepNode, DependencyTree};
use crate::spans::align_tokens;

pub const PETRA_SENTENCE: &str =
    "Petra van Staveren won a silver medal in the men's 10 km walk at the 2008 Summer Olympics";
pub const PETRA_CONTEXT: &str = "Petra van Staveren is a Dutch former swimmer. At the 1984 Summer Olympics in Los \
     Angeles she won the gold medal in the women's 100 metre breaststroke. She did not compete at the 2008 \
     Summer Olympics in Beijing, China.";
pub const PETRA_HYPOTHESIS: &str = "in the 2008 Summer Olympics in Beijing, China";
pub const ARABIC_SENTENCE: &str = "تأسست جامعة القاهرة في عام 1908.";

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, result: Result<(), String>) -> Check {
    match result {
        Ok(()) => Check { name, passed: true, detail: String::new() },
        Err(detail) => Check { name, passed: false, detail },
    }
}

/// Tables that satisfy every check, for running the suite against mocks.
pub fn reference_tables() -> MockTables {
    let arg = |role: &str, text: &str| RoleArgument { role: role.into(), text: text.into() };
    let node = |index, form: &str, pos: &str, head, rel: &str| DepNode {
        index,
        form: form.into(),
        pos: pos.into(),
        head,
        rel: rel.into(),
    };
    MockTables {
        frames: BTreeMap::from([(
            PETRA_SENTENCE.to_string(),
            vec![RoleFrame {
                predicate: "won".into(),
                arguments: vec![
                    arg("ARG0", "Petra van Staveren"),
                    arg("V", "won"),
                    arg("ARG1", "a silver medal in the men's 10 km walk"),
                    arg("ARGM-TMP", "at the 2008 Summer Olympics"),
                ],
            }],
        )]),
        trees: BTreeMap::from([(
            ARABIC_SENTENCE.to_string(),
            DependencyTree {
                nodes: vec![
                    node(1, "تأسست", "VERB", 0, "root"),
                    node(2, "جامعة", "NOUN", 1, "nsubj"),
                    node(3, "القاهرة", "PROPN", 2, "nmod"),
                    node(4, "في", "ADP", 5, "case"),
                    node(5, "عام", "NOUN", 1, "obl"),
                    node(6, "1908", "NUM", 5, "nummod"),
                    node(7, ".", "PUNCT", 1, "punct"),
                ],
            },
        )]),
        nli: BTreeMap::from([(PETRA_HYPOTHESIS.to_string(), [0.011, 0.087, 0.902])]),
        models: vec!["mock-srl".into(), "mock-depparse".into(), "mock-nli".into()],
        ..MockTables::default()
    }
}

fn srl_petra(service: &dyn Service) -> Result<(), String> {
    let body = service
        .call(&WireRequest::Srl { text: PETRA_SENTENCE.into(), lang: Lang::En })
        .map_err(|e| e.to_string())?;
    let frames = parse_srl_response(&body).map_err(|e| e.to_string())?;
    let won = frames
        .iter()
        .find(|f| f.predicate == "won")
        .ok_or_else(|| format!("no frame for \"won\" in {frames:?}"))?;
    for role in ["ARG0", "ARG1"] {
        if !won.arguments.iter().any(|a| a.role == role) {
            return Err(format!("frame lacks {role}: {won:?}"));
        }
    }
    Ok(())
}

fn srl_blank(service: &dyn Service) -> Result<(), String> {
    let body = service
        .call(&WireRequest::Srl { text: "   ".into(), lang: Lang::En })
        .map_err(|e| e.to_string())?;
    let frames = parse_srl_response(&body).map_err(|e| e.to_string())?;
    if frames.is_empty() {
        Ok(())
    } else {
        Err(format!("expected no frames, got {frames:?}"))
    }
}

fn nli_triple(service: &dyn Service) -> Result<(), String> {
    let body = service
        .call(&WireRequest::Nli { premise: PETRA_CONTEXT.into(), hypothesis: PETRA_HYPOTHESIS.into() })
        .map_err(|e| e.to_string())?;
    let raw: Vec<f64> = ["entailment", "neutral", "contradiction"]
        .iter()
        .map(|k| body.get(*k).and_then(Value::as_f64).ok_or(format!("missing {k}")))
        .collect::<Result<_, _>>()?;
    let sum: f64 = raw.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(format!("triple sums to {sum}, not 1"));
    }
    let v = parse_nli_response(&body).map_err(|e| e.to_string())?;
    if v.p_contra > 0.5 {
        Ok(())
    } else {
        Err(format!("expected contradiction-dominant triple, got {v:?}"))
    }
}

fn depparse_valid(service: &dyn Service) -> Result<(), String> {
    let body = service
        .call(&WireRequest::DepParse { text: ARABIC_SENTENCE.into(), lang: Lang::Ar })
        .map_err(|e| e.to_string())?;
    let tree = parse_depparse_response(&body).map_err(|e| e.to_string())?;
    if tree.nodes.is_empty() {
        return Err("empty parse".into());
    }
    srl_from_dependencies(&tree, ARABIC_SENTENCE, &align_tokens(ARABIC_SENTENCE, &[]))
        .map(|_| ())
        .map_err(|e| e.to_string())
}

/// Run every protocol check against `service`.
pub fn run_protocol_suite(service: &dyn Service) -> Vec<Check> {
    vec![
        check("srl-petra-frame", srl_petra(service)),
        check("srl-blank-text", srl_blank(service)),
        check("nli-normalized-contradiction", nli_triple(service)),
        check("depparse-valid-tree", depparse_valid(service)),
    ]
}

/// `GET /healthz` must report status "ok" and a model list.
pub fn check_health(http: &HttpService) -> Check {
    let result = http.health().map_err(|e| e.to_string()).and_then(|body| {
        if body.get("status").and_then(Value::as_str) != Some("ok") {
            return Err(format!("status is not \"ok\": {body}"));
        }
        if !body.get("models").is_some_and(Value::is_array) {
            return Err(format!("models is not a list: {body}"));
        }
        Ok(())
    });
    check("healthz", result)
}
