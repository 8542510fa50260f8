mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{bin, fixtures};

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).env_remove("SPAN_SLEUTH_CACHE_DIR").env_remove("SPAN_SLEUTH_LLM_ENDPOINT").output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn detect_evaluate_verify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures();
    let pred = dir.path().join("pred.jsonl");
    let out = run(&["detect", "--input", s(&fx.join("corpus.jsonl")), "--config", s(&fx.join("mock.toml")), "--fixtures", s(&fx.join("cache")), "--out", s(&pred)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(pred.exists());
    assert!(dir.path().join("pred.jsonl.manifest.json").exists());
    assert!(dir.path().join("pred.jsonl.report.json").exists());

    let report = dir.path().join("eval.json");
    let out = run(&["evaluate", "--pred", s(&pred), "--gold", s(&fx.join("corpus.jsonl")), "--out", s(&report)]);
    assert_eq!(out.status.code(), Some(0));
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.lines().any(|l| l.starts_with("EN")) && table.lines().any(|l| l.starts_with("AR")));
    let parsed: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(parsed["summary"].as_array().unwrap().len(), 2);
    assert_eq!(parsed["per_record"].as_array().unwrap().len(), 10);

    let vout = dir.path().join("verify.json");
    let out = run(&["verify", "--pred", s(&pred), "--input", s(&fx.join("corpus.jsonl")), "--config", s(&fx.join("mock.toml")), "--fixtures", s(&fx.join("cache")), "--out", s(&vout)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let parsed: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&vout).unwrap()).unwrap();
    assert_eq!(parsed["reports"].as_array().unwrap().len(), 2);
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(run(&["detect", "--config", "x.toml"]).status.code(), Some(64));
    assert_eq!(run(&[]).status.code(), Some(64));
    assert_eq!(run(&["evaluate", "--pred", "p"]).status.code(), Some(64));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn verify_without_verifiers_exits_64() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "").unwrap();
    let pred = dir.path().join("p.jsonl");
    std::fs::write(&pred, "").unwrap();
    let fx = fixtures();
    let out = run(&["verify", "--pred", s(&pred), "--input", s(&fx.join("corpus.jsonl")), "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn verify_with_no_spans_reports_zero() {
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("p.jsonl");
    std::fs::write(&pred, "{\"id\":\"val-en-4\",\"hard_labels\":[],\"soft_labels\":[]}\n").unwrap();
    let fx = fixtures();
    let out = run(&["verify", "--pred", s(&pred), "--input", s(&fx.join("corpus.jsonl")), "--config", s(&fx.join("mock.toml"))]);
    assert_eq!(out.status.code(), Some(0));
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.lines().skip(1).all(|l| l.split_whitespace().nth(1) == Some("0")), "{table}");
}

#[test]
fn evaluate_rejects_mismatched_ids() {
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("p.jsonl");
    std::fs::write(&pred, "{\"id\":\"nope\",\"hard_labels\":[],\"soft_labels\":[]}\n").unwrap();
    let out = run(&["evaluate", "--pred", s(&pred), "--gold", s(&fixtures().join("corpus.jsonl"))]);
    assert_eq!(out.status.code(), Some(1));
    std::fs::write(&pred, "{\"id\":\"val-en-4\",\"hard_labels\":[],\"soft_labels\":[]}\n").unwrap();
    let out = run(&["evaluate", "--pred", s(&pred), "--gold", s(&fixtures().join("corpus.jsonl"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn evaluate_requires_gold_labels() {
    let dir = tempfile::tempdir().unwrap();
    let gold = dir.path().join("g.jsonl");
    std::fs::write(&gold, "{\"id\":\"a\",\"lang\":\"EN\",\"model_input\":\"q\",\"model_output_text\":\"ab\",\"model_output_tokens\":[],\"model_output_logits\":[]}\n").unwrap();
    let pred = dir.path().join("p.jsonl");
    std::fs::write(&pred, "{\"id\":\"a\",\"hard_labels\":[],\"soft_labels\":[]}\n").unwrap();
    let out = run(&["evaluate", "--pred", s(&pred), "--gold", s(&gold)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no labels"));
}

#[test]
fn malformed_input_lines_degrade_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures();
    let input = dir.path().join("in.jsonl");
    let mut text = std::fs::read_to_string(fx.join("corpus.jsonl")).unwrap();
    text.push_str("{not json\n");
    std::fs::write(&input, text).unwrap();
    let pred = dir.path().join("pred.jsonl");
    let out = run(&["detect", "--input", s(&input), "--config", s(&fx.join("mock.toml")), "--out", s(&pred)]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(std::fs::read_to_string(&pred).unwrap().lines().count(), 10);
}

#[test]
fn missing_fixture_is_a_degraded_record() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures();
    let input = dir.path().join("in.jsonl");
    let mut text = std::fs::read_to_string(fx.join("corpus.jsonl")).unwrap();
    text.push_str(&text.lines().next().unwrap().replace("val-en-1", "val-en-99").replace("gold medal", "bronze medal"));
    text.push('\n');
    std::fs::write(&input, text).unwrap();
    let pred = dir.path().join("pred.jsonl");
    let out = run(&["detect", "--input", s(&input), "--config", s(&fx.join("mock.toml")), "--fixtures", s(&fx.join("cache")), "--out", s(&pred)]);
    assert_eq!(out.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("pred.jsonl.report.json")).unwrap()).unwrap();
    let degraded = report["run"]["degraded"].as_array().unwrap();
    assert_eq!(degraded.len(), 1);
    assert_eq!(degraded[0]["id"], "val-en-99");
}

#[test]
fn conformance_command_against_mock_server() {
    let server = span_sleuth::backends::mock::MockServer::start("127.0.0.1:0", span_sleuth::backends::conformance::reference_tables()).unwrap();
    let out = run(&["conformance", "--endpoint", &server.url()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let out = run(&["conformance", "--endpoint", "http://127.0.0.1:1", "--timeout-secs", "1"]);
    assert_eq!(out.status.code(), Some(1));
}
