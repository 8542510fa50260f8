//! Token-to-character alignment, span set operations, and the two
//! character-level metrics (IoU and rank correlation).

use thiserror::Error;

use crate::corpus::CharSpan;
use crate::text::{nfc_chars, NormalizedText};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpanError {
    #[error("span [{start}, {end}) out of range for text of length {len}")]
    OffsetOutOfRange { start: usize, end: usize, len: usize },
    #[error("vector lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

/// Character span of each generator token within the answer.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenAlignment {
    /// One entry per token; `None` for tokens that could not be located.
    pub spans: Vec<Option<CharSpan>>,
    pub coverage: f64,
}

impl TokenAlignment {
    pub fn unaligned_count(&self) -> usize {
        self.spans.iter().filter(|s| s.is_none()).count()
    }

    /// Indices of aligned tokens whose spans overlap `span`.
    pub fn tokens_overlapping(&self, span: CharSpan) -> Vec<usize> {
        self.spans
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.filter(|s| s.overlaps(&span)).map(|_| i))
            .collect()
    }
}

const MARKERS: &[char] = &['\u{2581}', '\u{120}', '\u{10A}'];

/// Token text with subword / whitespace markers removed.
pub fn strip_token_markers(token: &str) -> &str {
    let t = token.trim_matches(|c: char| c.is_whitespace() || MARKERS.contains(&c));
    let t = t.strip_prefix("##").unwrap_or(t);
    t.trim_matches(|c: char| c.is_whitespace() || MARKERS.contains(&c))
}

/// Greedy left-to-right alignment of tokens to the answer.
///
/// Each token is searched for at or after the end of the previous match.
/// Tokens that are empty after marker stripping, or that cannot be found,
/// are left unaligned and lower `coverage`.
pub fn align_tokens(answer: &str, tokens: &[String]) -> TokenAlignment {
    let norm = NormalizedText::new(answer);
    let mut cursor = 0;
    let mut spans = Vec::with_capacity(tokens.len());
    for token in tokens {
        let needle = nfc_chars(strip_token_markers(token));
        match norm.find(&needle, cursor) {
            Some(at) => {
                cursor = at + needle.len();
                spans.push(Some(norm.original_span(at, cursor)));
            }
            None => spans.push(None),
        }
    }
    let coverage = if tokens.is_empty() {
        1.0
    } else {
        spans.iter().filter(|s| s.is_some()).count() as f64 / tokens.len() as f64
    };
    TokenAlignment { spans, coverage }
}

/// Union of `spans`, with neighbours at most `gap` characters apart joined.
/// The output is sorted and every pair is separated by more than `gap`.
pub fn merge_spans(spans: &[CharSpan], gap: usize) -> Vec<CharSpan> {
    let mut sorted: Vec<CharSpan> = spans.iter().copied().filter(|s| !s.is_empty()).collect();
    sorted.sort_unstable();
    let mut out: Vec<CharSpan> = Vec::with_capacity(sorted.len());
    for s in sorted {
        match out.last_mut() {
            Some(last) if s.start <= last.end + gap => last.end = last.end.max(s.end),
            _ => out.push(s),
        }
    }
    out
}

/// Per-character coverage flags for one answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharMask {
    pub flags: Vec<bool>,
}

impl CharMask {
    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn is_subset_of(&self, other: &CharMask) -> bool {
        self.flags.len() == other.flags.len() && self.flags.iter().zip(&other.flags).all(|(&a, &b)| !a || b)
    }
}

pub fn char_mask(spans: &[CharSpan], text_len: usize) -> Result<CharMask, SpanError> {
    let mut flags = vec![false; text_len];
    for s in spans {
        if s.end > text_len || s.start > text_len {
            return Err(SpanError::OffsetOutOfRange { start: s.start, end: s.end, len: text_len });
        }
        for f in flags.iter_mut().take(s.end).skip(s.start) {
            *f = true;
        }
    }
    Ok(CharMask { flags })
}

/// Character-level intersection over union. Both empty counts as perfect
/// agreement (1.0); exactly one empty scores 0.0.
pub fn iou(pred: &[CharSpan], gold: &[CharSpan], text_len: usize) -> Result<f64, SpanError> {
    let p = char_mask(pred, text_len)?;
    let g = char_mask(gold, text_len)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in p.flags.iter().zip(&g.flags) {
        inter += usize::from(a && b);
        union += usize::from(a || b);
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub value: f64,
    /// Set when either input is constant and the value was defined as 0.0.
    pub degenerate: bool,
}

/// 1-based ranks with ties sharing their mean rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j
        let rank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        None
    } else {
        Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
    }
}

/// Spearman rank correlation between per-character hallucination
/// probabilities.
pub fn soft_correlation(pred_probs: &[f64], gold_probs: &[f64]) -> Result<Correlation, SpanError> {
    if pred_probs.len() != gold_probs.len() {
        return Err(SpanError::LengthMismatch { left: pred_probs.len(), right: gold_probs.len() });
    }
    if pred_probs.is_empty() {
        return Ok(Correlation { value: 0.0, degenerate: true });
    }
    let rp = midranks(pred_probs);
    let rg = midranks(gold_probs);
    Ok(match pearson(&rp, &rg) {
        Some(value) => Correlation { value, degenerate: false },
        None => Correlation { value: 0.0, degenerate: true },
    })
}
