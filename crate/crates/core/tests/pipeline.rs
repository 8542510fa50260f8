mod common;

use common::{corpus, mock_backends, tables};
use span_sleuth::corpus::{CharSpan, Lang};
use span_sleuth::decompose::Role;
use span_sleuth::detect::{write_predictions, ArabicDecomposition, Pipeline, PipelineConfig};
use span_sleuth::spans::char_mask;

fn run(cfg: PipelineConfig) -> span_sleuth::detect::RunOutput {
    Pipeline::new(mock_backends(tables()), cfg).run(&corpus())
}

#[test]
fn one_dead_backend_degrades_one_record() {
    let records = corpus();
    let mut t = tables();
    t.unavailable.insert(records[2].question.clone());
    // the same question is asked by val-en-4
    let shared: Vec<_> = records.iter().filter(|r| r.question == records[2].question).map(|r| r.id.clone()).collect();
    let out = Pipeline::new(mock_backends(t), PipelineConfig::default()).run(&records);
    let degraded: Vec<_> = out.report.degraded.iter().map(|d| d.id.clone()).collect();
    assert_eq!(degraded, shared);
    for p in &out.predictions {
        if shared.contains(&p.record_id) {
            assert!(p.hard_spans.is_empty());
            assert!(p.soft_probs.iter().all(|&x| x == 0.0));
            assert!(p.diagnostics.degraded.is_some());
        }
    }
    let healthy = run(PipelineConfig::default());
    for (a, b) in out.predictions.iter().zip(&healthy.predictions) {
        if !shared.contains(&a.record_id) {
            assert_eq!(a, b);
        }
    }
}

#[test]
fn output_is_independent_of_parallelism() {
    let one = run(PipelineConfig { parallelism: 1, ..Default::default() });
    let many = run(PipelineConfig { parallelism: 8, ..Default::default() });
    assert_eq!(write_predictions(&one.predictions), write_predictions(&many.predictions));
}

#[test]
fn retrieval_is_deduplicated() {
    let out = run(PipelineConfig::default());
    let retrieval = &out.report.backends[0];
    assert_eq!(retrieval.name, "retrieval");
    // one request per record with units; the repeated question is served from cache
    let with_units = out.assessments.iter().filter(|a| !a.assessments.is_empty()).count();
    assert_eq!(retrieval.requests, with_units);
    assert!(retrieval.service_calls <= 10);
    assert_eq!(retrieval.service_calls, with_units - 1);
}

#[test]
fn records_without_units_skip_retrieval() {
    let out = run(PipelineConfig::default());
    let records = corpus();
    for (r, a) in records.iter().zip(&out.assessments) {
        if a.assessments.is_empty() {
            assert!(a.context.is_none(), "{}", r.id);
        }
    }
    let by_id = |id: &str| out.predictions.iter().position(|p| p.record_id == id).unwrap();
    // no SRL frames for a bare "Yes."
    assert_eq!(out.assessments[by_id("val-en-5")].diagnostics.frames, 0);
    // empty answer
    assert!(out.predictions[by_id("val-en-7")].soft_probs.is_empty());
    // verbless Arabic sentence
    assert!(out.assessments[by_id("val-ar-2")].diagnostics.nominal_sentence);
    assert_eq!(out.report.totals.nominal_sentences, 1);
}

#[test]
fn prediction_invariants_hold() {
    for gap in [0, 1, 3] {
        let cfg = PipelineConfig { merge_gap: gap, ..Default::default() };
        let threshold = cfg.scoring.threshold;
        let out = run(cfg);
        for (p, r) in out.predictions.iter().zip(corpus()) {
            assert_eq!(p.soft_probs.len(), r.answer_len());
            assert!(p.soft_probs.iter().all(|x| (0.0..=1.0).contains(x)));
            let mask = char_mask(&p.hard_spans, r.answer_len()).unwrap();
            for (i, &flag) in mask.flags.iter().enumerate() {
                if flag {
                    assert!(p.soft_probs[i] >= 1.0 - threshold, "{} char {i}", r.id);
                }
            }
        }
    }
}

#[test]
fn arabic_through_srl_backend() {
    let cfg = PipelineConfig { arabic_decomposition: ArabicDecomposition::Srl, ..Default::default() };
    let out = run(cfg);
    let records = corpus();
    for (r, a) in records.iter().zip(&out.assessments) {
        if r.lang == Lang::Ar {
            // the mock has no Arabic SRL frames
            assert!(a.assessments.is_empty());
        }
    }
}

#[test]
fn arabic_dependency_units() {
    let out = run(PipelineConfig::default());
    let i = corpus().iter().position(|r| r.id == "val-ar-1").unwrap();
    let units: Vec<_> = out.assessments[i].assessments.iter().map(|a| (a.unit.role, a.unit.text.as_str())).collect();
    assert!(units.contains(&(Role::Verb, "تأسست")));
    assert!(units.contains(&(Role::Arg0, "جامعة القاهرة")));
    assert!(units.contains(&(Role::ArgmTmp, "في عام 1925")));
    assert_eq!(out.predictions[i].hard_spans, vec![CharSpan::new(20, 31)]);
}

#[test]
fn verbs_can_be_left_unscored() {
    let out = run(PipelineConfig { score_verbs: false, ..Default::default() });
    assert!(out.assessments.iter().flat_map(|a| &a.assessments).all(|a| a.unit.role != Role::Verb));
    let with_verbs = run(PipelineConfig::default());
    assert!(out.report.totals.units < with_verbs.report.totals.units);
}
