//! Run configuration file (TOML) and backend construction.
//!
//! ```toml
//! mock_tables = "mock_tables.json"
//!
//! [scoring]
//! alpha = 0.6
//! threshold = 0.5
//! normalization = "within-unit"
//!
//! [pipeline]
//! merge_gap = 1
//! parallelism = 4
//!
//! [backends.retrieval]
//! kind = "http"
//! endpoint = "https://llm.example/v1/chat/completions"
//! model_name = "gpt-4"
//!
//! [[verifiers]]
//! id = "gpt-4"
//! [verifiers.backend]
//! kind = "mock"
//! model_name = "gpt-4"
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::http::HttpService;
use crate::backends::mock::{MockService, MockTables};
use crate::backends::{BackendConfig, BackendKind, Backends, Endpoint, PromptTemplate, ResponseCache, Service, Unconfigured, Verifier};
use crate::detect::{ArabicDecomposition, PipelineConfig};
use crate::scoring::ScoringConfig;

pub const ENV_LLM_ENDPOINT: &str = "SPAN_SLEUTH_LLM_ENDPOINT";
pub const ENV_LLM_KEY: &str = "SPAN_SLEUTH_LLM_KEY";
pub const ENV_CACHE_DIR: &str = "SPAN_SLEUTH_CACHE_DIR";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Unreadable { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub merge_gap: usize,
    pub parallelism: usize,
    pub score_verbs: bool,
    pub arabic_decomposition: ArabicDecomposition,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let d = PipelineConfig::default();
        Self {
            merge_gap: d.merge_gap,
            parallelism: d.parallelism,
            score_verbs: d.score_verbs,
            arabic_decomposition: d.arabic_decomposition,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSet {
    pub retrieval: BackendConfig,
    pub nli: BackendConfig,
    pub parser: BackendConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifierConfig {
    pub id: String,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default = "PromptTemplate::verifier_default")]
    pub prompt: PromptTemplate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub scoring: ScoringConfig,
    pub pipeline: PipelineSection,
    pub backends: BackendSet,
    /// Tables for every backend of kind "mock".
    pub mock_tables: Option<PathBuf>,
    pub retrieval_prompt: PromptTemplate,
    pub verifiers: Vec<VerifierConfig>,
    /// Credential for LLM endpoints; only ever taken from the environment.
    #[serde(skip)]
    pub llm_key: Option<String>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            scoring: ScoringConfig::default(),
            pipeline: PipelineSection::default(),
            backends: BackendSet::default(),
            mock_tables: None,
            retrieval_prompt: PromptTemplate::retrieval_default(),
            verifiers: Vec::new(),
            llm_key: None,
        }
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl Config {
    /// Parse `text`; relative paths are taken relative to `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        resolve(base_dir, &mut cfg.mock_tables);
        for b in cfg.backend_configs_mut() {
            resolve(base_dir, &mut b.cache_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a config file and apply the environment.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Unreadable { path: path.to_path_buf(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::from_toml_str(&text, base)?;
        cfg.apply_env(|k| std::env::var(k).ok().filter(|v| !v.is_empty()));
        Ok(cfg)
    }

    fn backend_configs_mut(&mut self) -> impl Iterator<Item = &mut BackendConfig> {
        [&mut self.backends.retrieval, &mut self.backends.nli, &mut self.backends.parser]
            .into_iter()
            .chain(self.verifiers.iter_mut().map(|v| &mut v.backend))
    }

    /// The LLM endpoint variable fills in retrieval and verifier endpoints
    /// left unset; the cache variable fills in unset cache directories.
    /// Neither replaces a value written in the file.
    pub fn apply_env(&mut self, env: impl Fn(&str) -> Option<String>) {
        if let Some(endpoint) = env(ENV_LLM_ENDPOINT) {
            let llms = std::iter::once(&mut self.backends.retrieval).chain(self.verifiers.iter_mut().map(|v| &mut v.backend));
            for b in llms {
                if b.endpoint.is_none() {
                    b.endpoint = Some(endpoint.clone());
                }
            }
        }
        if let Some(dir) = env(ENV_CACHE_DIR) {
            for b in self.backend_configs_mut() {
                if b.cache_dir.is_none() {
                    b.cache_dir = Some(PathBuf::from(&dir));
                }
            }
        }
        self.llm_key = env(ENV_LLM_KEY);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: String| ConfigError::Invalid(e);
        self.scoring.validate().map_err(|e| invalid(e.to_string()))?;
        if self.pipeline.parallelism == 0 {
            return Err(invalid("pipeline.parallelism must be at least 1".into()));
        }
        let named = [("retrieval", &self.backends.retrieval), ("nli", &self.backends.nli), ("parser", &self.backends.parser)];
        for (name, b) in named {
            b.validate().map_err(|e| invalid(format!("backends.{name}: {e}")))?;
        }
        let mut ids = std::collections::BTreeSet::new();
        for v in &self.verifiers {
            v.backend.validate().map_err(|e| invalid(format!("verifier {}: {e}", v.id)))?;
            if !ids.insert(v.id.as_str()) {
                return Err(invalid(format!("duplicate verifier id {}", v.id)));
            }
        }
        Ok(())
    }

    pub fn pipeline_config(&self, fixture_mode: bool) -> PipelineConfig {
        PipelineConfig {
            scoring: self.scoring,
            merge_gap: self.pipeline.merge_gap,
            parallelism: self.pipeline.parallelism,
            fixture_mode,
            score_verbs: self.pipeline.score_verbs,
            arabic_decomposition: self.pipeline.arabic_decomposition,
        }
    }

    /// True when no configured backend can reach the network.
    pub fn is_offline(&self, fixtures: Option<&Path>) -> bool {
        fixtures.is_some()
            || [&self.backends.retrieval, &self.backends.nli, &self.backends.parser]
                .into_iter()
                .chain(self.verifiers.iter().map(|v| &v.backend))
                .all(|b| b.kind == BackendKind::Mock)
    }

    fn mock_service(&self) -> Result<Arc<MockService>, ConfigError> {
        let tables = match &self.mock_tables {
            Some(p) => MockTables::load(p).map_err(ConfigError::Invalid)?,
            None => MockTables::default(),
        };
        Ok(Arc::new(MockService::new(tables)))
    }

    fn endpoint(
        &self,
        name: &str,
        b: &BackendConfig,
        llm: bool,
        fixtures: Option<&Path>,
        mock: &mut Option<Arc<MockService>>,
    ) -> Result<Endpoint, ConfigError> {
        let service: Arc<dyn Service> = match b.kind {
            BackendKind::Mock => {
                if mock.is_none() {
                    *mock = Some(self.mock_service()?);
                }
                mock.clone().expect("mock service just built")
            }
            BackendKind::Http => match &b.endpoint {
                Some(url) => Arc::new(HttpService::new(
                    url,
                    b.timeout(),
                    b.max_retries,
                    Duration::from_millis(b.backoff_ms),
                    if llm { self.llm_key.clone() } else { None },
                )),
                None => Arc::new(Unconfigured(name.to_string())),
            },
        };
        let (cache, offline) = match (fixtures, &b.cache_dir) {
            (Some(dir), _) => (ResponseCache::on_disk(dir, true), true),
            (None, Some(dir)) => (ResponseCache::on_disk(dir, false), false),
            (None, None) => (ResponseCache::memory(), false),
        };
        Ok(Endpoint::new(name, &b.model_name, service, cache, offline))
    }

    /// Clients for detection. With a fixture directory every client answers
    /// from recorded responses only.
    pub fn build_backends(&self, fixtures: Option<&Path>) -> Result<Backends, ConfigError> {
        let mut mock = None;
        Ok(Backends {
            retrieval: self.endpoint("retrieval", &self.backends.retrieval, true, fixtures, &mut mock)?,
            nli: self.endpoint("nli", &self.backends.nli, false, fixtures, &mut mock)?,
            parser: self.endpoint("parser", &self.backends.parser, false, fixtures, &mut mock)?,
            retrieval_prompt: self.retrieval_prompt.clone(),
            retrieval_temperature: self.backends.retrieval.temperature,
        })
    }

    pub fn build_verifiers(&self, fixtures: Option<&Path>) -> Result<Vec<Verifier>, ConfigError> {
        let mut mock = None;
        self.verifiers
            .iter()
            .map(|v| {
                Ok(Verifier {
                    id: v.id.clone(),
                    endpoint: self.endpoint(&format!("verifier:{}", v.id), &v.backend, true, fixtures, &mut mock)?,
                    prompt: v.prompt.clone(),
                    temperature: v.backend.temperature,
                })
            })
            .collect()
    }
}
