//! Cross-checking predicted spans with independent verifier LLMs.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{Backends, Judgment, Verifier};
use crate::corpus::{AnswerRecord, CharSpan};
use crate::detect::SpanPrediction;
use crate::text::char_slice;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("prediction {0} has no matching input record")]
    UnknownRecord(String),
    #[error("prediction {id} span [{}, {}) exceeds the answer", span.start, span.end)]
    SpanOutOfRange { id: String, span: CharSpan },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanJudgment {
    pub record_id: String,
    pub span: CharSpan,
    pub span_text: String,
    pub judgment: Judgment,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub verifier: String,
    pub n_spans: usize,
    pub n_confirmed: usize,
    pub n_refuted: usize,
    pub n_unsure: usize,
    /// Confirmed spans over all spans; 0 when there are none.
    pub match_rate: f64,
    pub spans: Vec<SpanJudgment>,
}

impl VerificationReport {
    pub fn from_judgments(verifier: &str, spans: Vec<SpanJudgment>) -> Self {
        let count = |j: Judgment| spans.iter().filter(|s| s.judgment == j).count();
        let n_confirmed = count(Judgment::ConfirmedHallucination);
        Self {
            verifier: verifier.to_string(),
            n_spans: spans.len(),
            n_confirmed,
            n_refuted: count(Judgment::Refuted),
            n_unsure: count(Judgment::Unsure),
            match_rate: n_confirmed as f64 / spans.len().max(1) as f64,
            spans,
        }
    }
}

struct Job<'a> {
    record: &'a AnswerRecord,
    span: CharSpan,
    text: String,
}

/// Ask every verifier about every hard span. Contexts come from the
/// retrieval backend when one is given (an empty context if retrieval
/// fails); verifier failures count as unsure.
pub fn verify_predictions(
    predictions: &[SpanPrediction],
    records: &[AnswerRecord],
    verifiers: &[Verifier],
    retrieval: Option<&Backends>,
    parallelism: usize,
) -> Result<Vec<VerificationReport>, VerifyError> {
    let by_id: HashMap<&str, &AnswerRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut jobs = Vec::new();
    for p in predictions {
        let record = *by_id.get(p.record_id.as_str()).ok_or_else(|| VerifyError::UnknownRecord(p.record_id.clone()))?;
        for &span in &p.hard_spans {
            if span.end > record.answer_len() {
                return Err(VerifyError::SpanOutOfRange { id: p.record_id.clone(), span });
            }
            jobs.push(Job { record, span, text: char_slice(&record.answer, span).to_string() });
        }
    }

    let mut contexts: HashMap<&str, String> = HashMap::new();
    for job in &jobs {
        if contexts.contains_key(job.record.id.as_str()) {
            continue;
        }
        let text = match retrieval {
            Some(b) => b.retrieve_context(&job.record.id, &job.record.question, job.record.lang).map(|c| c.text).unwrap_or_else(|e| {
                log::warn!("no context for {}: {e}", job.record.id);
                String::new()
            }),
            None => String::new(),
        };
        contexts.insert(job.record.id.as_str(), text);
    }

    let judge = |verifier: &Verifier, job: &Job| -> SpanJudgment {
        let context = &contexts[job.record.id.as_str()];
        let (judgment, rationale) = match verifier.verify_span(&job.record.question, context, &job.text) {
            Ok(v) => (v.judgment, v.rationale),
            Err(e) => (Judgment::Unsure, format!("verifier error: {e}")),
        };
        SpanJudgment { record_id: job.record.id.clone(), span: job.span, span_text: job.text.clone(), judgment, rationale }
    };
    let run = || {
        verifiers
            .iter()
            .map(|v| VerificationReport::from_judgments(&v.id, jobs.par_iter().map(|j| judge(v, j)).collect()))
            .collect::<Vec<_>>()
    };
    Ok(match rayon::ThreadPoolBuilder::new().num_threads(parallelism.max(1)).build() {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    })
}

pub fn render_table(reports: &[VerificationReport]) -> String {
    let mut out = format!("{:<20}{:>8}{:>11}{:>9}{:>8}{:>8}\n", "verifier", "spans", "confirmed", "refuted", "unsure", "match");
    for r in reports {
        let _ = writeln!(
            out,
            "{:<20}{:>8}{:>11}{:>9}{:>8}{:>8.4}",
            r.verifier, r.n_spans, r.n_confirmed, r.n_refuted, r.n_unsure, r.match_rate
        );
    }
    out
}
