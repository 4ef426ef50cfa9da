//! Declarative run configuration (TOML). Every tunable constant has a
//! default here and is overridable; the parsed configuration is recorded in
//! the run manifest.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoding::Encoding;
use crate::eval::{DEFAULT_BOOTSTRAP_RESAMPLES, DEFAULT_REPETITION_THRESHOLD};
use crate::fit::FitOptions;
use crate::runner::mock::MockModel;
use crate::runner::{RetryPolicy, RunSettings};
use crate::tasks::corpus::{CommonConnectionConfig, EdgeExistenceConfig, SimilarityConfig};
use crate::tasks::TaskKind;
use crate::tokens::{ThresholdTable, DEFAULT_TOKENIZER};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_tokenizer")]
    pub tokenizer: String,
    #[serde(default = "all_encodings")]
    pub encodings: Vec<Encoding>,
    /// Permits a nonzero decoding temperature.
    #[serde(default)]
    pub non_paper_mode: bool,
    #[serde(default)]
    pub thresholds: ThresholdTable,
    pub tasks: TaskConfigs,
    pub backend: BackendConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub fit: FitConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfigs {
    pub edge_existence: Option<EdgeExistenceConfig>,
    pub common_connection: Option<CommonConnectionConfig>,
    pub similarity: Option<SimilarityConfig>,
}

impl TaskConfigs {
    pub fn enabled(&self) -> Vec<TaskKind> {
        let mut out = Vec::new();
        if self.edge_existence.is_some() {
            out.push(TaskKind::EdgeExistence);
        }
        if self.common_connection.is_some() {
            out.push(TaskKind::CommonConnection);
        }
        if self.similarity.is_some() {
            out.push(TaskKind::Similarity);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Mock,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    /// Overrides the per-task output limit when set.
    #[serde(default)]
    pub max_tokens: Option<u32>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub requests_per_minute: Option<u32>,
    #[serde(default)]
    pub burst: Option<u32>,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub mock: Option<MockModel>,
}

impl BackendConfig {
    pub fn run_settings(&self) -> RunSettings {
        RunSettings {
            model: self.model.clone(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            parallelism: self.parallelism,
            retry: self.retry,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub repetition_threshold: usize,
    pub bootstrap_resamples: usize,
    pub bootstrap_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            repetition_threshold: DEFAULT_REPETITION_THRESHOLD,
            bootstrap_resamples: DEFAULT_BOOTSTRAP_RESAMPLES,
            bootstrap_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub split_seed: u64,
    pub ratio_floor: f64,
    pub min_cells_per_class: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        let options = FitOptions::default();
        Self {
            split_seed: 0,
            ratio_floor: options.ratio_floor,
            min_cells_per_class: options.min_cells_per_class,
        }
    }
}

impl FitConfig {
    pub fn options(&self) -> FitOptions {
        FitOptions {
            ratio_floor: self.ratio_floor,
            min_cells_per_class: self.min_cells_per_class,
        }
    }
}

fn default_tokenizer() -> String {
    DEFAULT_TOKENIZER.to_string()
}

fn all_encodings() -> Vec<Encoding> {
    Encoding::ALL.to_vec()
}

fn default_parallelism() -> usize {
    4
}

fn default_timeout() -> u64 {
    120
}

/// One offending key and what is wrong with it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub key: String,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config does not parse: {0}")]
    Syntax(String),
    #[error("invalid config:\n{}", format_issues(.0))]
    Invalid(Vec<Issue>),
}

fn format_issues(issues: &[Issue]) -> String {
    issues.iter().map(|i| format!("  {}: {}", i.key, i.message)).collect::<Vec<_>>().join("\n")
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

impl ConfigError {
    /// Keys named by the error, empty for I/O failures.
    pub fn keys(&self) -> Vec<String> {
        match self {
            ConfigError::Invalid(issues) => issues.iter().map(|i| i.key.clone()).collect(),
            _ => Vec::new(),
        }
    }
}

const SECRET_KEYS: [&str; 4] = ["api_key", "key", "token", "secret"];

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Parses and validates; every semantic problem is reported at once.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        if let Some(toml::Value::Table(backend)) = raw.get("backend") {
            let secrets: Vec<Issue> = SECRET_KEYS
                .iter()
                .filter(|k| backend.contains_key(**k))
                .map(|k| Issue {
                    key: format!("backend.{k}"),
                    message: "secrets are never read from config files; name the environment variable in backend.api_key_env".into(),
                })
                .collect();
            if !secrets.is_empty() {
                return Err(ConfigError::Invalid(secrets));
            }
        }
        let config: Config = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        let issues = config.validate();
        if issues.is_empty() {
            Ok(config)
        } else {
            Err(ConfigError::Invalid(issues))
        }
    }

    pub fn validate(&self) -> Vec<Issue> {
        let mut issues = Vec::new();
        let mut issue = |key: &str, message: String| issues.push(Issue { key: key.into(), message });
        if self.encodings.is_empty() {
            issue("encodings", "at least one encoding is required".into());
        }
        let mut seen = self.encodings.clone();
        seen.sort_unstable_by_key(|e| e.as_str());
        seen.dedup();
        if seen.len() != self.encodings.len() {
            issue("encodings", "encodings must not repeat".into());
        }
        for enc in Encoding::ALL {
            let t = self.thresholds.for_encoding(enc);
            if t.small >= t.medium {
                issue(
                    &format!("thresholds.{enc}"),
                    format!("small ({}) must be below medium ({})", t.small, t.medium),
                );
            }
        }
        if self.tasks.enabled().is_empty() {
            issue("tasks", "at least one of edge_existence, common_connection, similarity is required".into());
        }
        let mut graphs = |prefix: &str, g: &crate::tasks::corpus::GraphSource, min_nodes: usize| {
            if g.node_count < min_nodes {
                issue(&format!("{prefix}.graphs.node_count"), format!("must be at least {min_nodes}"));
            }
            if !(0.0..=1.0).contains(&g.density) {
                issue(&format!("{prefix}.graphs.density"), format!("{} outside [0, 1]", g.density));
            }
            if g.samples_per_graph == 0 {
                issue(&format!("{prefix}.graphs.samples_per_graph"), "must be at least 1".into());
            }
        };
        if let Some(ee) = &self.tasks.edge_existence {
            graphs("tasks.edge_existence", &ee.graphs, ee.noise_count + 2);
        }
        if let Some(cc) = &self.tasks.common_connection {
            graphs("tasks.common_connection", &cc.graphs, 3);
        }
        if let Some(sim) = &self.tasks.similarity {
            graphs("tasks.similarity", &sim.graphs, 3);
        }
        if let Some(ee) = &self.tasks.edge_existence {
            if ee.samples == 0 {
                issue("tasks.edge_existence.samples", "must be at least 1".into());
            }
        }
        if let Some(cc) = &self.tasks.common_connection {
            if cc.samples == 0 {
                issue("tasks.common_connection.samples", "must be at least 1".into());
            }
        }
        if let Some(sim) = &self.tasks.similarity {
            if sim.quota == 0 || sim.quota % 2 != 0 {
                issue("tasks.similarity.quota", format!("{} must be a positive even number", sim.quota));
            }
        }

        let b = &self.backend;
        if b.model.trim().is_empty() {
            issue("backend.model", "must not be empty".into());
        }
        if b.temperature != 0.0 && !self.non_paper_mode {
            issue(
                "backend.temperature",
                format!("{} requires non_paper_mode = true; evaluation runs decode at temperature 0", b.temperature),
            );
        }
        if !(0.0..=2.0).contains(&b.temperature) {
            issue("backend.temperature", format!("{} outside [0, 2]", b.temperature));
        }
        if b.parallelism == 0 {
            issue("backend.parallelism", "must be at least 1".into());
        }
        if b.max_tokens == Some(0) {
            issue("backend.max_tokens", "must be at least 1".into());
        }
        if b.requests_per_minute == Some(0) {
            issue("backend.requests_per_minute", "must be at least 1".into());
        }
        if b.burst.is_some() && b.requests_per_minute.is_none() {
            issue("backend.burst", "requires backend.requests_per_minute".into());
        }
        if b.retry.max_attempts == 0 {
            issue("backend.retry.max_attempts", "must be at least 1".into());
        }
        match b.kind {
            BackendKind::Mock => match &b.mock {
                None => issue("backend.mock", "required when backend.kind = \"mock\"".into()),
                Some(m) => {
                    if let Err(e) = m.validate() {
                        issue("backend.mock", e);
                    }
                }
            },
            BackendKind::Live => {
                if b.endpoint.as_deref().is_none_or(|e| e.trim().is_empty()) {
                    issue("backend.endpoint", "required when backend.kind = \"live\"".into());
                }
                match b.api_key_env.as_deref() {
                    None | Some("") => issue("backend.api_key_env", "required when backend.kind = \"live\"".into()),
                    Some(name) if !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') => issue(
                        "backend.api_key_env",
                        format!("{name:?} is not an environment variable name"),
                    ),
                    Some(_) => {}
                }
                if b.timeout_secs == 0 {
                    issue("backend.timeout_secs", "must be at least 1".into());
                }
            }
        }

        if self.eval.repetition_threshold < 2 {
            issue("eval.repetition_threshold", "must be at least 2".into());
        }
        if self.eval.bootstrap_resamples == 0 {
            issue("eval.bootstrap_resamples", "must be at least 1".into());
        }
        if !(self.fit.ratio_floor >= 0.0) {
            issue("fit.ratio_floor", "must be non-negative".into());
        }
        if self.fit.min_cells_per_class == 0 {
            issue("fit.min_cells_per_class", "must be at least 1".into());
        }
        issues
    }
}
