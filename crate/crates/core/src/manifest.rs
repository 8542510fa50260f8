//! Provenance record written next to every output.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backends::sha256_hex;
use crate::config::Config;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub config: Option<InputDigest>,
    pub inputs: Vec<InputDigest>,
    pub fixtures: Option<String>,
    pub prompt_versions: BTreeMap<String, String>,
    pub models: BTreeMap<String, String>,
    /// Unix seconds. Left out of runs that never touch the network, so
    /// replayed runs produce identical manifests.
    pub timestamp: Option<u64>,
}

pub fn digest_file(path: &Path) -> std::io::Result<InputDigest> {
    let bytes = std::fs::read(path)?;
    Ok(InputDigest { path: path.display().to_string(), sha256: sha256_hex(&bytes) })
}

/// `SOURCE_DATE_EPOCH` when set, else the wall clock.
pub fn run_timestamp() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| {
            std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
        })
}

impl RunManifest {
    pub fn new(command: &str, config: &Config, config_path: Option<&Path>, inputs: &[&Path], fixtures: Option<&Path>) -> std::io::Result<Self> {
        let mut prompt_versions = BTreeMap::from([("retrieval".to_string(), config.retrieval_prompt.version.clone())]);
        let mut models = BTreeMap::from([
            ("retrieval".to_string(), config.backends.retrieval.model_name.clone()),
            ("nli".to_string(), config.backends.nli.model_name.clone()),
            ("parser".to_string(), config.backends.parser.model_name.clone()),
        ]);
        for v in &config.verifiers {
            prompt_versions.insert(format!("verifier:{}", v.id), v.prompt.version.clone());
            models.insert(format!("verifier:{}", v.id), v.backend.model_name.clone());
        }
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: config_path.map(digest_file).transpose()?,
            inputs: inputs.iter().map(|p| digest_file(p)).collect::<Result<_, _>>()?,
            fixtures: fixtures.map(|p| p.display().to_string()),
            prompt_versions,
            models,
            timestamp: if config.is_offline(fixtures) { None } else { Some(run_timestamp()) },
        })
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}
