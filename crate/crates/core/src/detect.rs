//! Per-record orchestration: decompose, retrieve, entail, score, and turn
//! unit verdicts into character-level predictions.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, BackendStats, Backends, ContextDocument};
use crate::corpus::{AnswerRecord, CharSpan, Lang, SoftSpan};
use crate::decompose::{decompose_dependencies, decompose_srl, DecomposeError, Decomposition, Role};
use crate::scoring::{logit_confidence, Normalization, ScoringConfig, UnitAssessment};
use crate::spans::{align_tokens, merge_spans, SpanError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ArabicDecomposition {
    /// SRL backend directly.
    Srl,
    /// Dependency parse, then the rule table.
    #[default]
    Dependency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub scoring: ScoringConfig,
    /// Flagged spans at most this many characters apart are merged.
    pub merge_gap: usize,
    pub parallelism: usize,
    /// Answer from recorded responses only.
    pub fixture_mode: bool,
    /// Whether predicate units are scored alongside arguments.
    pub score_verbs: bool,
    pub arabic_decomposition: ArabicDecomposition,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            scoring: ScoringConfig::default(),
            merge_gap: 1,
            parallelism: 4,
            fixture_mode: false,
            score_verbs: true,
            arabic_decomposition: ArabicDecomposition::Dependency,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.scoring.validate().map_err(|e| e.to_string())?;
        if self.parallelism == 0 {
            return Err("parallelism must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Decompose(DecomposeError),
}

impl From<DecomposeError> for DetectError {
    fn from(e: DecomposeError) -> Self {
        match e {
            DecomposeError::Backend(b) => DetectError::Backend(b),
            other => DetectError::Decompose(other),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub frames: usize,
    pub units: usize,
    pub dropped_units: usize,
    pub clipped_units: usize,
    pub unaligned_tokens: usize,
    /// Units without aligned tokens that used the answer-wide confidence.
    pub fallback_confidence_units: usize,
    pub nominal_sentence: bool,
    /// Why the record could not be assessed, if it could not.
    pub degraded: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordAssessment {
    pub assessments: Vec<UnitAssessment>,
    pub context: Option<ContextDocument>,
    pub diagnostics: Diagnostics,
}

/// Predicted hallucinations for one answer.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanPrediction {
    pub record_id: String,
    pub hard_spans: Vec<CharSpan>,
    /// One probability per answer character.
    pub soft_probs: Vec<f64>,
    pub diagnostics: Diagnostics,
}

impl SpanPrediction {
    pub fn empty(record: &AnswerRecord, diagnostics: Diagnostics) -> Self {
        Self {
            record_id: record.id.clone(),
            hard_spans: Vec::new(),
            soft_probs: vec![0.0; record.answer_len()],
            diagnostics,
        }
    }

    /// Maximal runs of equal non-zero probability.
    pub fn soft_spans(&self) -> Vec<SoftSpan> {
        let mut out: Vec<SoftSpan> = Vec::new();
        for (i, &p) in self.soft_probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            match out.last_mut() {
                Some(last) if last.end == i && last.prob == p => last.end = i + 1,
                _ => out.push(SoftSpan { start: i, prob: p, end: i + 1 }),
            }
        }
        out
    }

    pub fn to_line(&self) -> PredictionLine {
        PredictionLine { id: self.record_id.clone(), hard_labels: self.hard_spans.clone(), soft_labels: self.soft_spans() }
    }
}

/// One line of a prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionLine {
    pub id: String,
    pub hard_labels: Vec<CharSpan>,
    pub soft_labels: Vec<SoftSpan>,
}

impl PredictionLine {
    /// Expand to per-character probabilities for an answer of `text_len`
    /// characters. Overlapping soft spans keep the larger probability.
    pub fn to_prediction(&self, text_len: usize) -> Result<SpanPrediction, SpanError> {
        let soft_probs = expand_soft_spans(&self.soft_labels, text_len)?;
        for s in &self.hard_labels {
            if s.end > text_len {
                return Err(SpanError::OffsetOutOfRange { start: s.start, end: s.end, len: text_len });
            }
        }
        Ok(SpanPrediction {
            record_id: self.id.clone(),
            hard_spans: self.hard_labels.clone(),
            soft_probs,
            diagnostics: Diagnostics::default(),
        })
    }
}

/// Per-character vector from soft spans; 0 outside every span, max where
/// spans overlap.
pub fn expand_soft_spans(spans: &[SoftSpan], text_len: usize) -> Result<Vec<f64>, SpanError> {
    let mut out = vec![0.0; text_len];
    for s in spans {
        if s.end > text_len || s.start > s.end {
            return Err(SpanError::OffsetOutOfRange { start: s.start, end: s.end, len: text_len });
        }
        for p in &mut out[s.start..s.end] {
            *p = f64::max(*p, s.prob);
        }
    }
    Ok(out)
}

pub fn write_predictions(predictions: &[SpanPrediction]) -> String {
    let mut out = String::new();
    for p in predictions {
        out.push_str(&serde_json::to_string(&p.to_line()).expect("prediction lines serialize"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionParseError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for PredictionParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "prediction line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for PredictionParseError {}

pub fn parse_predictions(text: &str) -> Result<Vec<PredictionLine>, PredictionParseError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| PredictionParseError { line: i + 1, message: e.to_string() }))
        .collect()
}

/// Build the prediction for one record from its unit assessments.
///
/// Hard spans are the merged spans of hallucinated units. Each character's
/// soft probability is the largest `1 - refined_score` among units covering
/// it. Characters bridged by merging take the smallest flagged probability
/// inside their merged span, so every character of a hard span sits above
/// `1 - threshold`.
pub fn emit_prediction(record: &AnswerRecord, assessments: &[UnitAssessment], cfg: &PipelineConfig) -> SpanPrediction {
    let len = record.answer_len();
    let mut soft = vec![0.0f64; len];
    for a in assessments {
        let p = (1.0 - a.refined_score).clamp(0.0, 1.0);
        let end = a.unit.span.end.min(len);
        for x in soft.iter_mut().take(end).skip(a.unit.span.start) {
            *x = x.max(p);
        }
    }
    let flagged: Vec<&UnitAssessment> = assessments.iter().filter(|a| a.hallucinated).collect();
    let spans: Vec<CharSpan> = flagged.iter().map(|a| a.unit.span).collect();
    let hard = merge_spans(&spans, cfg.merge_gap);
    for h in &hard {
        let floor = flagged
            .iter()
            .filter(|a| h.start <= a.unit.span.start && a.unit.span.end <= h.end)
            .map(|a| (1.0 - a.refined_score).clamp(0.0, 1.0))
            .fold(f64::INFINITY, f64::min);
        if floor.is_finite() {
            for x in soft.iter_mut().take(h.end.min(len)).skip(h.start) {
                *x = x.max(floor);
            }
        }
    }
    SpanPrediction { record_id: record.id.clone(), hard_spans: hard, soft_probs: soft, diagnostics: Diagnostics::default() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradedRecord {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTotals {
    pub units: usize,
    pub hallucinated_units: usize,
    pub dropped_units: usize,
    pub clipped_units: usize,
    pub unaligned_tokens: usize,
    pub fallback_confidence_units: usize,
    pub zero_unit_records: usize,
    pub nominal_sentences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub records: usize,
    pub degraded: Vec<DegradedRecord>,
    pub totals: RunTotals,
    pub backends: Vec<BackendStats>,
}

/// Everything one run produced, in input order.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub predictions: Vec<SpanPrediction>,
    pub assessments: Vec<RecordAssessment>,
    pub report: RunReport,
}

pub struct Pipeline {
    pub backends: Backends,
    pub config: PipelineConfig,
}

impl Pipeline {
    pub fn new(backends: Backends, config: PipelineConfig) -> Self {
        Self { backends, config }
    }

    fn decompose(&self, record: &AnswerRecord, alignment: &crate::spans::TokenAlignment) -> Result<Decomposition, DecomposeError> {
        match (record.lang, self.config.arabic_decomposition) {
            (Lang::Ar, ArabicDecomposition::Dependency) => {
                decompose_dependencies(&record.answer, record.lang, alignment, &self.backends)
            }
            _ => decompose_srl(&record.answer, record.lang, alignment, &self.backends),
        }
    }

    /// Assess every atomic unit of one record. The context is retrieved
    /// once, and only when there is at least one unit to check.
    pub fn assess_record(&self, record: &AnswerRecord) -> Result<RecordAssessment, DetectError> {
        let mut diagnostics = Diagnostics::default();
        if record.answer.trim().is_empty() {
            return Ok(RecordAssessment { assessments: Vec::new(), context: None, diagnostics });
        }
        let alignment = align_tokens(&record.answer, &record.tokens);
        diagnostics.unaligned_tokens = alignment.unaligned_count();
        let decomposition = self.decompose(record, &alignment)?;
        diagnostics.frames = decomposition.frames;
        diagnostics.dropped_units = decomposition.dropped_units;
        diagnostics.clipped_units = decomposition.clipped_units;
        diagnostics.nominal_sentence = decomposition.nominal_sentence;

        let units: Vec<_> = decomposition
            .units
            .into_iter()
            .filter(|u| self.config.score_verbs || u.role != Role::Verb)
            .collect();
        diagnostics.units = units.len();
        if units.is_empty() {
            return Ok(RecordAssessment { assessments: Vec::new(), context: None, diagnostics });
        }

        let context = self.backends.retrieve_context(&record.id, &record.question, record.lang)?;
        let scoring = &self.config.scoring;
        let mut assessments = Vec::with_capacity(units.len());
        for unit in units {
            let verdict = self.backends.entail(&context.text, &unit.text)?;
            let unit_logits: Vec<f64> = unit.token_indices.iter().map(|&i| record.logits[i]).collect();
            let confidence = match logit_confidence(&unit_logits, &record.logits, scoring.normalization) {
                Ok(c) => c,
                Err(_) => {
                    diagnostics.fallback_confidence_units += 1;
                    answer_wide_confidence(&record.logits)
                }
            };
            assessments.push(UnitAssessment::new(unit, verdict, confidence, scoring));
        }
        Ok(RecordAssessment { assessments, context: Some(context), diagnostics })
    }

    fn process(&self, record: &AnswerRecord) -> (SpanPrediction, RecordAssessment) {
        match self.assess_record(record) {
            Ok(assessed) => {
                let mut prediction = emit_prediction(record, &assessed.assessments, &self.config);
                prediction.diagnostics = assessed.diagnostics.clone();
                (prediction, assessed)
            }
            Err(e) => {
                log::warn!("record {} degraded: {e}", record.id);
                let diagnostics = Diagnostics { degraded: Some(e.to_string()), ..Diagnostics::default() };
                let assessed =
                    RecordAssessment { assessments: Vec::new(), context: None, diagnostics: diagnostics.clone() };
                (SpanPrediction::empty(record, diagnostics), assessed)
            }
        }
    }

    /// Run every record; failures degrade single records, never the run.
    pub fn run(&self, records: &[AnswerRecord]) -> RunOutput {
        let work = || records.par_iter().map(|r| self.process(r)).collect::<Vec<_>>();
        let results = match rayon::ThreadPoolBuilder::new().num_threads(self.config.parallelism.max(1)).build() {
            Ok(pool) => pool.install(work),
            Err(e) => {
                log::warn!("could not build thread pool ({e}); running sequentially");
                records.iter().map(|r| self.process(r)).collect()
            }
        };
        let (predictions, assessments): (Vec<_>, Vec<_>) = results.into_iter().unzip();

        let mut totals = RunTotals::default();
        let mut degraded = Vec::new();
        for (p, a) in predictions.iter().zip(&assessments) {
            let d = &p.diagnostics;
            if let Some(reason) = &d.degraded {
                degraded.push(DegradedRecord { id: p.record_id.clone(), reason: reason.clone() });
                continue;
            }
            totals.units += a.assessments.len();
            totals.hallucinated_units += a.assessments.iter().filter(|u| u.hallucinated).count();
            totals.dropped_units += d.dropped_units;
            totals.clipped_units += d.clipped_units;
            totals.unaligned_tokens += d.unaligned_tokens;
            totals.fallback_confidence_units += d.fallback_confidence_units;
            totals.zero_unit_records += usize::from(d.units == 0);
            totals.nominal_sentences += usize::from(d.nominal_sentence);
        }
        let report = RunReport { records: records.len(), degraded, totals, backends: self.backends.stats() };
        RunOutput { predictions, assessments, report }
    }
}

/// Confidence for units with no aligned tokens: mean softmax probability
/// over the whole answer, or 0.5 when the record carries no logits.
pub fn answer_wide_confidence(logits: &[f64]) -> f64 {
    logit_confidence(logits, logits, Normalization::WholeAnswer).unwrap_or(0.5)
}
