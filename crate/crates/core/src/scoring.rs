//! Unit scoring: token-logit confidence, fusion with the entailment
//! probability, and threshold classification.
//!
//! Confidence is the mean softmax probability of a unit's tokens. With
//! [`Normalization::WithinUnit`] the softmax is taken over the unit's own
//! logits, so the mean is always exactly `1/n` whatever the logit values.
//! That degenerate reading is the default because it reproduces published
//! reference outputs; [`Normalization::WholeAnswer`] normalizes over every
//! token of the answer and actually responds to the logits.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::EntailmentVerdict;
use crate::decompose::AtomicUnit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    #[default]
    WithinUnit,
    WholeAnswer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    /// Weight of the entailment probability; `1 - alpha` goes to confidence.
    pub alpha: f64,
    pub threshold: f64,
    pub normalization: Normalization,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self { alpha: 0.6, threshold: 0.5, normalization: Normalization::WithinUnit }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoringError {
    #[error("unit has no aligned tokens")]
    EmptyUnit,
    #[error("{name} must lie in [0, 1], got {value}")]
    OutOfRange { name: &'static str, value: f64 },
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<(), ScoringError> {
        for (name, value) in [("alpha", self.alpha), ("threshold", self.threshold)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ScoringError::OutOfRange { name, value });
            }
        }
        Ok(())
    }
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Mean softmax probability of `unit_logits`.
///
/// In whole-answer mode `unit_logits` must be drawn from `all_logits`; the
/// normalizer is the sum over all of them. Logits are shifted by their
/// maximum before exponentiation.
pub fn logit_confidence(unit_logits: &[f64], all_logits: &[f64], mode: Normalization) -> Result<f64, ScoringError> {
    if unit_logits.is_empty() {
        return Err(ScoringError::EmptyUnit);
    }
    let n = unit_logits.len() as f64;
    let (shift, normalizer) = match mode {
        Normalization::WithinUnit => {
            let m = max_of(unit_logits);
            (m, unit_logits.iter().map(|l| (l - m).exp()).sum::<f64>())
        }
        Normalization::WholeAnswer => {
            let m = max_of(all_logits).max(max_of(unit_logits));
            (m, all_logits.iter().map(|l| (l - m).exp()).sum::<f64>())
        }
    };
    let mean = unit_logits.iter().map(|l| (l - shift).exp() / normalizer).sum::<f64>() / n;
    Ok(mean.clamp(0.0, 1.0))
}

/// Convex combination of the entailment probability and the confidence.
pub fn refined_score(verdict: &EntailmentVerdict, confidence: f64, alpha: f64) -> f64 {
    alpha * verdict.p_entail + (1.0 - alpha) * confidence
}

/// A unit is hallucinated when its refined score is strictly below the
/// threshold.
pub fn classify_unit(refined: f64, threshold: f64) -> bool {
    refined < threshold
}

/// Everything computed for one atomic unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitAssessment {
    pub unit: AtomicUnit,
    pub verdict: EntailmentVerdict,
    pub logit_score: f64,
    pub refined_score: f64,
    pub hallucinated: bool,
}

impl UnitAssessment {
    pub fn new(unit: AtomicUnit, verdict: EntailmentVerdict, logit_score: f64, cfg: &ScoringConfig) -> Self {
        let refined = refined_score(&verdict, logit_score, cfg.alpha);
        Self { unit, verdict, logit_score, refined_score: refined, hallucinated: classify_unit(refined, cfg.threshold) }
    }

    /// Report form keyed by role: hypothesis, predicted label, percentages,
    /// and the two scores.
    pub fn to_listing(&self) -> serde_json::Value {
        serde_json::json!({
            "hypothesis": self.unit.text,
            "predicted_label": self.verdict.label,
            "entailment_probabilities": {
                "entailment": self.verdict.p_entail * 100.0,
                "neutral": self.verdict.p_neutral * 100.0,
                "contradiction": self.verdict.p_contra * 100.0,
            },
            "logit_score": self.logit_score,
            "refined_score": self.refined_score,
            "hallucinated": self.hallucinated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn verdict(e: f64, n: f64, c: f64) -> EntailmentVerdict {
        EntailmentVerdict::from_triple(e, n, c).unwrap()
    }

    #[test]
    fn within_unit_is_one_over_n() {
        let c3 = logit_confidence(&[-2.0, 0.5, 7.25], &[], Normalization::WithinUnit).unwrap();
        assert!((c3 - 1.0 / 3.0).abs() < 1e-12);
        let nine: Vec<f64> = (0..9).map(|i| i as f64 * 1.7 - 4.0).collect();
        let c9 = logit_confidence(&nine, &[], Normalization::WithinUnit).unwrap();
        assert!((c9 - 1.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn whole_answer_examples() {
        let uniform = [0.3; 4];
        let c = logit_confidence(&uniform, &uniform, Normalization::WholeAnswer).unwrap();
        assert!((c - 0.25).abs() < 1e-12);

        // two strong unit tokens, the rest effectively zero probability
        let all = [2.0, 2.0, -1e4, -1e4, -1e4];
        let c = logit_confidence(&[2.0, 2.0], &all, Normalization::WholeAnswer).unwrap();
        assert!((c - 0.5).abs() < 1e-9);
    }

    #[test]
    fn empty_unit_is_an_error() {
        assert_eq!(logit_confidence(&[], &[1.0], Normalization::WholeAnswer), Err(ScoringError::EmptyUnit));
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let all = [1e4, -1e4, 0.0, 1e4];
        let c = logit_confidence(&[1e4, -1e4], &all, Normalization::WholeAnswer).unwrap();
        // exact: (0.5 + e^-20000/2) / 2
        assert!((c - 0.25).abs() < 1e-9);
        let w = logit_confidence(&[1e4, -1e4, 3.0], &[], Normalization::WithinUnit).unwrap();
        assert!((w - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn refined_score_examples() {
        // 0.6 * 0.007 + 0.4 / 3 and 0.6 * 0.011 + 0.4 / 9
        let a = refined_score(&verdict(0.007, 0.754, 0.239), 1.0 / 3.0, 0.6);
        assert!((a - 0.1375).abs() < 5e-4);
        let b = refined_score(&verdict(0.011, 0.087, 0.902), 1.0 / 9.0, 0.6);
        assert!((b - 0.0510).abs() < 5e-4);
        let v = verdict(0.3, 0.5, 0.2);
        assert_eq!(refined_score(&v, 0.9, 1.0), 0.3);
        assert_eq!(refined_score(&v, 0.9, 0.0), 0.9);
    }

    #[test]
    fn strict_threshold() {
        assert!(classify_unit(0.1375, 0.5));
        assert!(!classify_unit(0.5, 0.5));
        assert!(!classify_unit(0.9, 0.5));
    }

    #[test]
    fn config_bounds() {
        assert!(ScoringConfig::default().validate().is_ok());
        let bad = ScoringConfig { alpha: 1.2, ..Default::default() };
        assert!(matches!(bad.validate(), Err(ScoringError::OutOfRange { name: "alpha", .. })));
    }

    proptest! {
        #[test]
        fn whole_answer_probabilities_sum_to_one(all in prop::collection::vec(-50.0f64..50.0, 1..40)) {
            let n = all.len() as f64;
            // mean over all tokens times n is the total probability mass
            let mass = logit_confidence(&all, &all, Normalization::WholeAnswer).unwrap() * n;
            prop_assert!((mass - 1.0).abs() < 1e-9);
        }

        #[test]
        fn refined_is_monotone(e1 in 0.0f64..1.0, e2 in 0.0f64..1.0, c in 0.0f64..1.0, alpha in 0.0f64..=1.0) {
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let vlo = EntailmentVerdict { p_entail: lo, ..verdict(1.0, 0.0, 0.0) };
            let vhi = EntailmentVerdict { p_entail: hi, ..verdict(1.0, 0.0, 0.0) };
            prop_assert!(refined_score(&vlo, c, alpha) <= refined_score(&vhi, c, alpha) + 1e-15);
            prop_assert!(refined_score(&vlo, c * 0.5, alpha) <= refined_score(&vlo, c, alpha) + 1e-15);
        }

        #[test]
        fn classification_is_antitone(r1 in 0.0f64..1.0, r2 in 0.0f64..1.0, t in 0.0f64..1.0) {
            let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            prop_assert!(classify_unit(hi, t) <= classify_unit(lo, t));
            prop_assert!(classify_unit(lo, t * 0.5) <= classify_unit(lo, t));
        }
    }
}
