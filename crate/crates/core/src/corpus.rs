//! Question/answer records in the line-delimited shared-task format.
//!
//! One JSON object per line. Character offsets in gold labels count Unicode
//! scalar values of the answer text, never bytes.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

/// Answer language. Only English and Arabic are supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Lang {
    #[serde(rename = "EN")]
    En,
    #[serde(rename = "AR")]
    Ar,
}

impl Lang {
    pub fn code(self) -> &'static str {
        match self {
            Lang::En => "EN",
            Lang::Ar => "AR",
        }
    }

    /// Human-readable name, used in prompts.
    pub fn name(self) -> &'static str {
        match self {
            Lang::En => "English",
            Lang::Ar => "Arabic",
        }
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Lang {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "EN" => Ok(Lang::En),
            "AR" => Ok(Lang::Ar),
            other => Err(format!("unsupported language {other:?}")),
        }
    }
}

/// Half-open character span `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
}

impl CharSpan {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &CharSpan) -> bool {
        self.start < other.end && other.start < self.end
    }
}

// Serialized as a `[start, end]` pair, matching the hard-label format.
impl Serialize for CharSpan {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.start, self.end].serialize(s)
    }
}

impl<'de> Deserialize<'de> for CharSpan {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [start, end] = <[usize; 2]>::deserialize(d)?;
        Ok(CharSpan { start, end })
    }
}

/// Gold (or predicted) span with a hallucination probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftSpan {
    pub start: usize,
    pub prob: f64,
    pub end: usize,
}

impl SoftSpan {
    pub fn span(&self) -> CharSpan {
        CharSpan::new(self.start, self.end)
    }
}

/// One dataset row.
#[derive(Debug, Clone, PartialEq)]
pub struct AnswerRecord {
    pub id: String,
    pub lang: Lang,
    pub question: String,
    pub answer: String,
    pub model_id: String,
    pub tokens: Vec<String>,
    pub logits: Vec<f64>,
    /// `None` when the line carried no soft labels at all (unlabeled data).
    pub soft_labels: Option<Vec<SoftSpan>>,
    pub hard_labels: Option<Vec<CharSpan>>,
    /// Fields this crate does not interpret, kept for round-tripping.
    pub extra: Map<String, Value>,
}

impl AnswerRecord {
    /// Answer length in Unicode scalar values.
    pub fn answer_len(&self) -> usize {
        self.answer.chars().count()
    }

    pub fn has_gold(&self) -> bool {
        self.soft_labels.is_some() && self.hard_labels.is_some()
    }

    pub fn to_json(&self) -> Value {
        let mut obj = self.extra.clone();
        obj.insert("id".into(), Value::from(self.id.clone()));
        obj.insert("lang".into(), Value::from(self.lang.code()));
        obj.insert("question".into(), Value::from(self.question.clone()));
        obj.insert("model_output_text".into(), Value::from(self.answer.clone()));
        obj.insert("model_id".into(), Value::from(self.model_id.clone()));
        obj.insert("model_output_tokens".into(), serde_json::json!(self.tokens));
        obj.insert("model_output_logits".into(), serde_json::json!(self.logits));
        if let Some(soft) = &self.soft_labels {
            obj.insert("soft_labels".into(), serde_json::json!(soft));
        }
        if let Some(hard) = &self.hard_labels {
            obj.insert("hard_labels".into(), serde_json::json!(hard));
        }
        Value::Object(obj)
    }

    /// Serialize to a single line (no trailing newline).
    pub fn to_line(&self) -> String {
        self.to_json().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecordError {
    #[error("malformed record: {0}")]
    MalformedRecord(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("offset out of range: {0}")]
    OffsetOutOfRange(String),
}

#[derive(Debug, Error)]
#[error("cannot read corpus {path}: {source}")]
pub struct FileUnreadable {
    pub path: String,
    #[source]
    pub source: std::io::Error,
}

/// Error attached to a 1-based line number of a corpus file.
#[derive(Debug, Clone, PartialEq)]
pub struct LineError {
    pub line: usize,
    pub error: RecordError,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.error)
    }
}

/// A broken record invariant. Produced by [`validate_record`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TokenLogitMismatch { tokens: usize, logits: usize },
    OffsetOutOfRange { field: &'static str, start: usize, end: usize, len: usize },
    EmptySpan { field: &'static str, start: usize, end: usize },
    ProbOutOfRange { start: usize, end: usize, prob: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TokenLogitMismatch { tokens, logits } => {
                write!(f, "{tokens} tokens but {logits} logits")
            }
            Violation::OffsetOutOfRange { field, start, end, len } => {
                write!(f, "{field} span [{start}, {end}) exceeds answer length {len}")
            }
            Violation::EmptySpan { field, start, end } => {
                write!(f, "{field} span [{start}, {end}) is empty or reversed")
            }
            Violation::ProbOutOfRange { start, end, prob } => {
                write!(f, "soft span [{start}, {end}) has probability {prob} outside [0, 1]")
            }
        }
    }
}

impl Violation {
    fn into_error(self) -> RecordError {
        match self {
            Violation::OffsetOutOfRange { .. } => RecordError::OffsetOutOfRange(self.to_string()),
            _ => RecordError::SchemaViolation(self.to_string()),
        }
    }
}

/// Check every record invariant; an empty result means the record is valid.
pub fn validate_record(r: &AnswerRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    if r.tokens.len() != r.logits.len() {
        out.push(Violation::TokenLogitMismatch { tokens: r.tokens.len(), logits: r.logits.len() });
    }
    let len = r.answer_len();
    let check_span = |field: &'static str, start: usize, end: usize, out: &mut Vec<Violation>| {
        if start >= end {
            out.push(Violation::EmptySpan { field, start, end });
        } else if end > len {
            out.push(Violation::OffsetOutOfRange { field, start, end, len });
        }
    };
    for s in r.soft_labels.iter().flatten() {
        check_span("soft_labels", s.start, s.end, &mut out);
        if !(0.0..=1.0).contains(&s.prob) {
            out.push(Violation::ProbOutOfRange { start: s.start, end: s.end, prob: s.prob });
        }
    }
    for s in r.hard_labels.iter().flatten() {
        check_span("hard_labels", s.start, s.end, &mut out);
    }
    out
}

fn take_string(obj: &Map<String, Value>, names: &[&str], required: bool) -> Result<String, RecordError> {
    for name in names {
        match obj.get(*name) {
            Some(Value::String(s)) => return Ok(s.clone()),
            Some(Value::Null) | None => continue,
            Some(other) => {
                return Err(RecordError::SchemaViolation(format!(
                    "field {name:?} must be a string, got {}",
                    kind_of(other)
                )))
            }
        }
    }
    if required {
        Err(RecordError::SchemaViolation(format!("missing required field {:?}", names[0])))
    } else {
        Ok(String::new())
    }
}

fn kind_of(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn field<T: serde::de::DeserializeOwned>(obj: &Map<String, Value>, name: &str) -> Result<Option<T>, RecordError> {
    match obj.get(name) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => T::deserialize(v)
            .map(Some)
            .map_err(|e| RecordError::SchemaViolation(format!("field {name:?}: {e}"))),
    }
}

const KNOWN_FIELDS: &[&str] = &[
    "id",
    "lang",
    "question",
    "model_input",
    "model_output_text",
    "answer",
    "model_id",
    "model_output_tokens",
    "model_output_logits",
    "soft_labels",
    "hard_labels",
];

/// Parse one line of the corpus.
///
/// `model_input` is accepted as an alias of `question` and `answer` as an
/// alias of `model_output_text`. Never panics, whatever the input.
pub fn parse_record(raw_line: &str) -> Result<AnswerRecord, RecordError> {
    let value: Value =
        serde_json::from_str(raw_line).map_err(|e| RecordError::MalformedRecord(e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(RecordError::MalformedRecord(format!("expected an object, got {}", kind_of(&value))));
    };

    let id = take_string(&obj, &["id"], true)?;
    let lang_raw = take_string(&obj, &["lang"], true)?;
    let lang = lang_raw.parse::<Lang>().map_err(RecordError::SchemaViolation)?;
    let question = take_string(&obj, &["question", "model_input"], true)?;
    let answer = take_string(&obj, &["model_output_text", "answer"], true)?;
    let model_id = take_string(&obj, &["model_id"], false)?;
    let tokens: Vec<String> = field(&obj, "model_output_tokens")?
        .ok_or_else(|| RecordError::SchemaViolation("missing required field \"model_output_tokens\"".into()))?;
    let logits: Vec<f64> = field(&obj, "model_output_logits")?
        .ok_or_else(|| RecordError::SchemaViolation("missing required field \"model_output_logits\"".into()))?;
    let soft_labels: Option<Vec<SoftSpan>> = field(&obj, "soft_labels")?;
    let hard_labels: Option<Vec<CharSpan>> = field(&obj, "hard_labels")?;

    let extra = obj
        .into_iter()
        .filter(|(k, _)| !KNOWN_FIELDS.contains(&k.as_str()))
        .collect();

    let record = AnswerRecord {
        id,
        lang,
        question,
        answer,
        model_id,
        tokens,
        logits,
        soft_labels,
        hard_labels,
        extra,
    };
    match validate_record(&record).into_iter().next() {
        Some(v) => Err(v.into_error()),
        None => Ok(record),
    }
}

/// Parse every line of `text`. Blank lines are skipped; bad lines are
/// collected rather than aborting the whole load.
pub fn parse_corpus(text: &str) -> (Vec<AnswerRecord>, Vec<LineError>) {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_record(line) {
            Ok(r) => records.push(r),
            Err(error) => errors.push(LineError { line: i + 1, error }),
        }
    }
    (records, errors)
}

/// Load a corpus file. Invalid UTF-8 is replaced rather than rejected so that
/// one damaged line only costs that line.
pub fn load_corpus(path: &Path) -> Result<(Vec<AnswerRecord>, Vec<LineError>), FileUnreadable> {
    let bytes = fs::read(path).map_err(|source| FileUnreadable { path: path.display().to_string(), source })?;
    Ok(parse_corpus(&String::from_utf8_lossy(&bytes)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(tokens: &str, logits: &str) -> String {
        format!(
            r#"{{"id":"val-en-1","lang":"EN","question":"q?","model_output_text":"ab","model_id":"m","model_output_tokens":{tokens},"model_output_logits":{logits}}}"#
        )
    }

    #[test]
    fn parses_minimal_record() {
        let r = parse_record(&line(r#"["a","b"]"#, "[0.5, 1.5]")).unwrap();
        assert_eq!(r.id, "val-en-1");
        assert_eq!(r.tokens.len(), 2);
        assert_eq!(r.logits, vec![0.5, 1.5]);
        assert_eq!(r.soft_labels, None);
        assert_eq!(r.hard_labels, None);
    }

    #[test]
    fn empty_token_arrays_are_valid() {
        let r = parse_record(&line("[]", "[]")).unwrap();
        assert!(r.tokens.is_empty() && r.logits.is_empty());
    }

    #[test]
    fn length_mismatch_is_schema_violation() {
        let err = parse_record(&line(r#"["a","b","c"]"#, "[1,2]")).unwrap_err();
        assert!(matches!(err, RecordError::SchemaViolation(_)), "{err:?}");
    }

    #[test]
    fn bad_syntax_is_malformed() {
        assert!(matches!(parse_record("{\"id\": "), Err(RecordError::MalformedRecord(_))));
        assert!(matches!(parse_record("[1,2]"), Err(RecordError::MalformedRecord(_))));
    }

    #[test]
    fn missing_field_and_bad_lang() {
        let err = parse_record(r#"{"id":"x","lang":"EN"}"#).unwrap_err();
        assert!(matches!(err, RecordError::SchemaViolation(_)));
        let err = parse_record(&line("[]", "[]").replace("\"EN\"", "\"ES\"")).unwrap_err();
        assert!(matches!(err, RecordError::SchemaViolation(_)));
    }

    #[test]
    fn out_of_range_span_is_rejected() {
        let raw = line("[]", "[]").replace("}", r#","hard_labels":[[0,3]]}"#);
        assert!(matches!(parse_record(&raw), Err(RecordError::OffsetOutOfRange(_))));
    }

    #[test]
    fn arabic_offsets_count_scalars() {
        // 5 scalars, 10 bytes
        let answer = "مرحلة";
        let raw = format!(
            r#"{{"id":"a","lang":"AR","question":"q","model_output_text":"{answer}","model_output_tokens":[],"model_output_logits":[],"hard_labels":[[0,5]],"soft_labels":[{{"start":0,"prob":1.0,"end":5}}]}}"#
        );
        let r = parse_record(&raw).unwrap();
        assert_eq!(r.answer_len(), 5);
        let too_far = raw.replace("[[0,5]]", "[[0,6]]");
        assert!(matches!(parse_record(&too_far), Err(RecordError::OffsetOutOfRange(_))));
    }

    #[test]
    fn unknown_fields_and_aliases() {
        let raw = r#"{"id":"x","lang":"ar","model_input":"q","model_output_text":"t","model_output_tokens":["t"],"model_output_logits":[1],"annotator":{"n":3}}"#;
        let r = parse_record(raw).unwrap();
        assert_eq!(r.question, "q");
        assert_eq!(r.lang, Lang::Ar);
        assert_eq!(r.extra.get("annotator"), Some(&serde_json::json!({"n": 3})));
        assert_eq!(parse_record(&r.to_line()).unwrap(), r);
    }

    #[test]
    fn validate_examples() {
        let mut r = parse_record(&line(r#"["a","b"]"#, "[0,0]")).unwrap();
        assert!(validate_record(&r).is_empty());

        r.soft_labels = Some(vec![SoftSpan { start: 0, prob: 0.5, end: 3 }]);
        assert!(matches!(validate_record(&r).as_slice(), [Violation::OffsetOutOfRange { .. }]));

        r.soft_labels = Some(vec![SoftSpan { start: 0, prob: 1.3, end: 2 }]);
        assert!(matches!(validate_record(&r).as_slice(), [Violation::ProbOutOfRange { .. }]));
    }

    #[test]
    fn partial_failure_in_corpus() {
        let good = line("[]", "[]");
        let text = format!("{good}\nnot json\n{}\n\n", good.replace("val-en-1", "val-en-2"));
        let (records, errors) = parse_corpus(&text);
        assert_eq!(records.len(), 2);
        assert_eq!(errors.len(), 1);
        assert_eq!(errors[0].line, 2);
        assert!(matches!(errors[0].error, RecordError::MalformedRecord(_)));
    }

    #[test]
    fn empty_text_gives_nothing() {
        assert_eq!(parse_corpus(""), (vec![], vec![]));
    }
}
