//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 fatal error, 2 finished with degraded records,
//! 64 usage error.

use std::collections::HashMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::backends::conformance::{check_health, reference_tables, run_protocol_suite, Check};
use crate::backends::http::HttpService;
use crate::backends::mock::{MockServer, MockService, MockTables};
use crate::config::Config;
use crate::corpus::{load_corpus, AnswerRecord};
use crate::detect::{parse_predictions, write_predictions, Pipeline, SpanPrediction};
use crate::eval::{evaluate_all, render_table, EvaluationOutput};
use crate::manifest::RunManifest;
use crate::verify::verify_predictions;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FATAL: i32 = 1;
pub const EXIT_DEGRADED: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "span-sleuth", version, about = "Span-level hallucination detection for LLM answers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Predict hallucinated spans for every record of a corpus.
    Detect {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Answer every backend request from this directory of recorded responses.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        /// Prediction file; the manifest and run report are written beside it.
        #[arg(long, default_value = "predictions.jsonl")]
        out: PathBuf,
        /// Also write per-unit assessments to this file.
        #[arg(long)]
        units: Option<PathBuf>,
    },
    /// Score a prediction file against gold labels.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ask the configured verifiers about every predicted span.
    Verify {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        fixtures: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve mock backends over HTTP until killed.
    ServeMock {
        #[arg(long, default_value = "127.0.0.1:8799")]
        addr: String,
        /// Mock tables (JSON); the conformance reference tables if omitted.
        #[arg(long)]
        tables: Option<PathBuf>,
    },
    /// Run the protocol checks against a sidecar, or the in-process mock.
    Conformance {
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long, default_value_t = 60.0)]
        timeout_secs: f64,
    },
}

struct Failure {
    code: i32,
    message: String,
}

fn fatal(message: impl std::fmt::Display) -> Failure {
    Failure { code: EXIT_FATAL, message: message.to_string() }
}

fn usage(message: impl std::fmt::Display) -> Failure {
    Failure { code: EXIT_USAGE, message: message.to_string() }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| fatal(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| fatal(format!("{}: {e}", path.display())))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn pretty(value: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn load_config(path: &Path) -> Result<Config, Failure> {
    Config::load(path).map_err(fatal)
}

/// Records of a corpus file; malformed lines are returned as messages.
fn load_records(path: &Path) -> Result<(Vec<AnswerRecord>, Vec<String>), Failure> {
    let (records, errors) = load_corpus(path).map_err(fatal)?;
    Ok((records, errors.iter().map(|e| e.to_string()).collect()))
}

fn load_predictions(path: &Path, records: &[AnswerRecord]) -> Result<Vec<SpanPrediction>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| fatal(format!("{}: {e}", path.display())))?;
    let lines = parse_predictions(&text).map_err(fatal)?;
    let lengths: HashMap<&str, usize> = records.iter().map(|r| (r.id.as_str(), r.answer_len())).collect();
    lines
        .iter()
        .map(|l| {
            let len = *lengths.get(l.id.as_str()).ok_or_else(|| fatal(format!("prediction {} has no matching record", l.id)))?;
            l.to_prediction(len).map_err(|e| fatal(format!("prediction {}: {e}", l.id)))
        })
        .collect()
}

fn cmd_detect(
    input: &Path,
    config_path: &Path,
    fixtures: Option<&Path>,
    out: &Path,
    units: Option<&Path>,
) -> Result<i32, Failure> {
    let config = load_config(config_path)?;
    let (records, malformed) = load_records(input)?;
    for m in &malformed {
        log::warn!("skipping {m}");
    }
    let backends = config.build_backends(fixtures).map_err(fatal)?;
    let pipeline = Pipeline::new(backends, config.pipeline_config(fixtures.is_some()));
    let output = pipeline.run(&records);

    write_file(out, &write_predictions(&output.predictions))?;
    let manifest = RunManifest::new("detect", &config, Some(config_path), &[input], fixtures).map_err(fatal)?;
    write_file(&sibling(out, ".manifest.json"), &manifest.to_json_pretty())?;
    let report = json!({ "run": output.report, "malformed_lines": malformed });
    write_file(&sibling(out, ".report.json"), &pretty(&report))?;
    if let Some(path) = units {
        let mut text = String::new();
        for (record, assessed) in records.iter().zip(&output.assessments) {
            let listing: Vec<_> = assessed
                .assessments
                .iter()
                .map(|a| json!({ "role": a.unit.role, "frame": a.unit.frame_id, "span": a.unit.span, "assessment": a.to_listing() }))
                .collect();
            text.push_str(&serde_json::to_string(&json!({ "id": record.id, "units": listing })).expect("units serialize"));
            text.push('\n');
        }
        write_file(path, &text)?;
    }

    let degraded = output.report.degraded.len() + malformed.len();
    eprintln!(
        "{} records, {} units, {} flagged, {} degraded",
        output.report.records, output.report.totals.units, output.report.totals.hallucinated_units, degraded
    );
    Ok(if degraded > 0 { EXIT_DEGRADED } else { EXIT_OK })
}

fn cmd_evaluate(pred: &Path, gold: &Path, out: Option<&Path>) -> Result<i32, Failure> {
    let (records, malformed) = load_records(gold)?;
    if let Some(first) = malformed.first() {
        return Err(fatal(format!("gold file {}: {first}", gold.display())));
    }
    let predictions = load_predictions(pred, &records)?;
    let reports = evaluate_all(&predictions, &records).map_err(fatal)?;
    let output = EvaluationOutput::new(&reports);
    print!("{}", render_table(&output.summary));
    if let Some(path) = out {
        write_file(path, &pretty(&output))?;
    }
    Ok(EXIT_OK)
}

fn cmd_verify(
    pred: &Path,
    input: &Path,
    config_path: &Path,
    fixtures: Option<&Path>,
    out: Option<&Path>,
) -> Result<i32, Failure> {
    let config = load_config(config_path)?;
    if config.verifiers.is_empty() {
        return Err(usage(format!("{} configures no verifiers", config_path.display())));
    }
    let (records, malformed) = load_records(input)?;
    if let Some(first) = malformed.first() {
        return Err(fatal(format!("input file {}: {first}", input.display())));
    }
    let predictions = load_predictions(pred, &records)?;
    let backends = config.build_backends(fixtures).map_err(fatal)?;
    let verifiers = config.build_verifiers(fixtures).map_err(fatal)?;
    let reports = verify_predictions(&predictions, &records, &verifiers, Some(&backends), config.pipeline.parallelism)
        .map_err(fatal)?;
    print!("{}", crate::verify::render_table(&reports));
    if let Some(path) = out {
        write_file(path, &pretty(&json!({ "reports": reports })))?;
        let manifest = RunManifest::new("verify", &config, Some(config_path), &[pred, input], fixtures).map_err(fatal)?;
        write_file(&sibling(path, ".manifest.json"), &manifest.to_json_pretty())?;
    }
    Ok(EXIT_OK)
}

fn cmd_serve_mock(addr: &str, tables: Option<&Path>) -> Result<i32, Failure> {
    let tables = match tables {
        Some(p) => MockTables::load(p).map_err(fatal)?,
        None => reference_tables(),
    };
    let server = MockServer::start(addr, tables).map_err(|e| fatal(format!("{addr}: {e}")))?;
    eprintln!("mock backends listening on {}", server.url());
    server.wait();
    Ok(EXIT_OK)
}

fn print_checks(checks: &[Check]) -> i32 {
    for c in checks {
        if c.passed {
            println!("PASS {}", c.name);
        } else {
            println!("FAIL {}: {}", c.name, c.detail);
        }
    }
    if checks.iter().all(|c| c.passed) {
        EXIT_OK
    } else {
        EXIT_FATAL
    }
}

fn cmd_conformance(endpoint: Option<&str>, timeout_secs: f64) -> Result<i32, Failure> {
    if timeout_secs.is_nan() || timeout_secs <= 0.0 {
        return Err(usage("--timeout-secs must be positive"));
    }
    let checks = match endpoint {
        Some(url) => {
            let http = HttpService::new(url, std::time::Duration::from_secs_f64(timeout_secs), 0, Default::default(), None);
            let mut checks = vec![check_health(&http)];
            checks.extend(run_protocol_suite(&http));
            checks
        }
        None => run_protocol_suite(&MockService::new(reference_tables())),
    };
    Ok(print_checks(&checks))
}

/// Parse `args` (program name first) and run the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Detect { input, config, fixtures, out, units } => {
            cmd_detect(input, config, fixtures.as_deref(), out, units.as_deref())
        }
        Command::Evaluate { pred, gold, out } => cmd_evaluate(pred, gold, out.as_deref()),
        Command::Verify { pred, input, config, fixtures, out } => {
            cmd_verify(pred, input, config, fixtures.as_deref(), out.as_deref())
        }
        Command::ServeMock { addr, tables } => cmd_serve_mock(addr, tables.as_deref()),
        Command::Conformance { endpoint, timeout_secs } => cmd_conformance(endpoint.as_deref(), *timeout_secs),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
