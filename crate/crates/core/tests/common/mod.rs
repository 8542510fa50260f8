#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use span_sleuth::backends::mock::{MockService, MockTables};
use span_sleuth::backends::{Backends, Endpoint, PromptTemplate, ResponseCache, Service};
use span_sleuth::corpus::{load_corpus, AnswerRecord};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn corpus() -> Vec<AnswerRecord> {
    let (records, errors) = load_corpus(&fixtures().join("corpus.jsonl")).unwrap();
    assert!(errors.is_empty(), "{errors:?}");
    records
}

pub fn tables() -> MockTables {
    MockTables::load(&fixtures().join("mock_tables.json")).unwrap()
}

pub fn mock_backends(tables: MockTables) -> Backends {
    let service: Arc<dyn Service> = Arc::new(MockService::new(tables));
    let ep = |name: &str, model: &str| Endpoint::new(name, model, service.clone(), ResponseCache::memory(), false);
    Backends {
        retrieval: ep("retrieval", "gpt-4"),
        nli: ep("nli", "mock-nli"),
        parser: ep("parser", "mock-srl"),
        retrieval_prompt: PromptTemplate::retrieval_default(),
        retrieval_temperature: 0.0,
    }
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_span-sleuth")
}
