//! Scoring predictions against gold annotations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnswerRecord, Lang};
use crate::detect::{expand_soft_spans, SpanPrediction};
use crate::spans::{iou, soft_correlation, SpanError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("gold record {0} has no labels")]
    MissingGold(String),
    #[error("prediction ids do not match gold ids (missing predictions: {missing:?}; unknown predictions: {unknown:?})")]
    IdMismatch { missing: Vec<String>, unknown: Vec<String> },
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("evaluate takes one language, got {0:?}")]
    MixedLanguages(Vec<Lang>),
    #[error("record {id}: {error}")]
    Span { id: String, error: SpanError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordScore {
    pub id: String,
    pub iou: f64,
    pub cor: f64,
    /// One of the two probability vectors was constant.
    pub cor_degenerate: bool,
    /// Zero-length answers are reported but left out of the means.
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub lang: Lang,
    /// Records that enter the means.
    pub n: usize,
    pub n_excluded: usize,
    pub mean_iou: f64,
    pub mean_cor: f64,
    pub per_record: Vec<RecordScore>,
}

fn index_unique<T>(items: &[T], id: impl Fn(&T) -> &str) -> Result<BTreeMap<&str, &T>, EvalError> {
    let mut map = BTreeMap::new();
    for item in items {
        let key = id(item);
        if map.insert(key, item).is_some() {
            return Err(EvalError::DuplicateId(key.to_string()));
        }
    }
    Ok(map)
}

fn score_record(pred: &SpanPrediction, gold: &AnswerRecord) -> Result<RecordScore, EvalError> {
    let span_err = |error| EvalError::Span { id: gold.id.clone(), error };
    let (Some(gold_hard), Some(gold_soft)) = (&gold.hard_labels, &gold.soft_labels) else {
        return Err(EvalError::MissingGold(gold.id.clone()));
    };
    let len = gold.answer_len();
    if pred.soft_probs.len() != len {
        return Err(span_err(SpanError::LengthMismatch { left: pred.soft_probs.len(), right: len }));
    }
    let iou = iou(&pred.hard_spans, gold_hard, len).map_err(span_err)?;
    let gold_probs = expand_soft_spans(gold_soft, len).map_err(span_err)?;
    let cor = soft_correlation(&pred.soft_probs, &gold_probs).map_err(span_err)?;
    Ok(RecordScore { id: gold.id.clone(), iou, cor: cor.value, cor_degenerate: cor.degenerate, excluded: len == 0 })
}

/// Score one language's predictions. Prediction and gold ids must match
/// one-to-one; per-record rows follow gold order.
pub fn evaluate(predictions: &[SpanPrediction], gold: &[AnswerRecord]) -> Result<EvaluationReport, EvalError> {
    let langs: BTreeSet<Lang> = gold.iter().map(|g| g.lang).collect();
    if langs.len() > 1 {
        return Err(EvalError::MixedLanguages(langs.into_iter().collect()));
    }
    let lang = langs.into_iter().next().unwrap_or(Lang::En);
    let preds = index_unique(predictions, |p| p.record_id.as_str())?;
    let golds = index_unique(gold, |g| g.id.as_str())?;
    let missing: Vec<String> = golds.keys().filter(|k| !preds.contains_key(*k)).map(|k| k.to_string()).collect();
    let unknown: Vec<String> = preds.keys().filter(|k| !golds.contains_key(*k)).map(|k| k.to_string()).collect();
    if !missing.is_empty() || !unknown.is_empty() {
        return Err(EvalError::IdMismatch { missing, unknown });
    }

    let per_record = gold.iter().map(|g| score_record(preds[g.id.as_str()], g)).collect::<Result<Vec<_>, _>>()?;
    let scored: Vec<&RecordScore> = per_record.iter().filter(|r| !r.excluded).collect();
    let n = scored.len();
    let mean = |f: fn(&RecordScore) -> f64| if n == 0 { 0.0 } else { scored.iter().map(|r| f(r)).sum::<f64>() / n as f64 };
    Ok(EvaluationReport {
        lang,
        n,
        n_excluded: per_record.len() - n,
        mean_iou: mean(|r| r.iou),
        mean_cor: mean(|r| r.cor),
        per_record,
    })
}

/// Split by gold language and evaluate each part.
pub fn evaluate_all(predictions: &[SpanPrediction], gold: &[AnswerRecord]) -> Result<Vec<EvaluationReport>, EvalError> {
    let gold_ids: BTreeSet<&str> = gold.iter().map(|g| g.id.as_str()).collect();
    let unknown: Vec<String> =
        predictions.iter().filter(|p| !gold_ids.contains(p.record_id.as_str())).map(|p| p.record_id.clone()).collect();
    if !unknown.is_empty() {
        return Err(EvalError::IdMismatch { missing: Vec::new(), unknown });
    }
    let mut by_lang: BTreeMap<Lang, Vec<AnswerRecord>> = BTreeMap::new();
    for g in gold {
        by_lang.entry(g.lang).or_default().push(g.clone());
    }
    by_lang
        .values()
        .map(|golds| {
            let ids: BTreeSet<&str> = golds.iter().map(|g| g.id.as_str()).collect();
            let preds: Vec<SpanPrediction> =
                predictions.iter().filter(|p| ids.contains(p.record_id.as_str())).cloned().collect();
            evaluate(&preds, golds)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub lang: Lang,
    pub n: usize,
    pub mean_iou: f64,
    pub mean_cor: f64,
}

/// One row per language; reports for the same language are pooled with
/// weights equal to their record counts.
pub fn aggregate(reports: &[EvaluationReport]) -> Vec<SummaryRow> {
    let mut acc: BTreeMap<Lang, (usize, f64, f64)> = BTreeMap::new();
    for r in reports {
        let e = acc.entry(r.lang).or_insert((0, 0.0, 0.0));
        e.0 += r.n;
        e.1 += r.mean_iou * r.n as f64;
        e.2 += r.mean_cor * r.n as f64;
    }
    acc.into_iter()
        .map(|(lang, (n, iou, cor))| {
            let d = if n == 0 { 1.0 } else { n as f64 };
            SummaryRow { lang, n, mean_iou: iou / d, mean_cor: cor / d }
        })
        .collect()
}

pub fn render_table(rows: &[SummaryRow]) -> String {
    let mut out = format!("{:<6}{:>6}{:>10}{:>10}\n", "lang", "n", "IoU", "Cor");
    for r in rows {
        let _ = writeln!(out, "{:<6}{:>6}{:>10.4}{:>10.4}", r.lang.code(), r.n, r.mean_iou, r.mean_cor);
    }
    out
}

/// The machine-readable evaluation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationOutput {
    pub per_record: Vec<RecordScore>,
    pub summary: Vec<SummaryRow>,
}

impl EvaluationOutput {
    pub fn new(reports: &[EvaluationReport]) -> Self {
        Self { per_record: reports.iter().flat_map(|r| r.per_record.iter().cloned()).collect(), summary: aggregate(reports) }
    }
}
