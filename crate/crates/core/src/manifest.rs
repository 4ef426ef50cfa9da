//! Run manifest: format versions, configuration, seed schedule, tokenizer
//! identity and the content hash of every artifact, keyed by stage. Paths
//! are relative to the run directory and nothing time-dependent is
//! recorded, so identical configurations yield identical manifests.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{BackendKind, Config};
use crate::prng::sha256_hex;

pub const MANIFEST_FORMAT: &str = "lidbench-manifest";
pub const MANIFEST_FORMAT_VERSION: &str = "manifest-v1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REDACTED: &str = "<redacted>";

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageRecord {
    /// Hashes of the upstream files the stage read.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: String,
    pub tool_version: String,
    pub formats: BTreeMap<String, String>,
    pub config_file: String,
    pub config_hash: String,
    /// Parsed configuration with every secret-bearing field redacted.
    pub config: Value,
    pub seeds: BTreeMap<String, u64>,
    pub tokenizer: String,
    pub vocab_hash: String,
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    pub fn new(config: &Config, config_file: &str, config_bytes: &[u8], vocab_hash: &str) -> Self {
        let mut formats = BTreeMap::new();
        for (k, v) in [
            ("encoding", crate::encoding::ENCODING_FORMAT_VERSION),
            ("prompt", crate::tasks::prompt::PROMPT_FORMAT_VERSION),
            ("corpus", crate::tasks::corpus::CORPUS_FORMAT_VERSION),
            ("report", crate::eval::report::REPORT_FORMAT_VERSION),
            ("fit", crate::pipeline::FIT_FORMAT_VERSION),
            ("manifest", MANIFEST_FORMAT_VERSION),
            ("prng", crate::prng::PRNG_ID),
        ] {
            formats.insert(k.to_string(), v.to_string());
        }
        Self {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_FORMAT_VERSION.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            formats,
            config_file: config_file.into(),
            config_hash: sha256_hex(config_bytes),
            config: redacted_config(config),
            seeds: seed_schedule(config),
            tokenizer: config.tokenizer.clone(),
            vocab_hash: vocab_hash.into(),
            stages: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| format!("{} is not a manifest: {e}", path.display()))?;
        if manifest.format != MANIFEST_FORMAT || manifest.version != MANIFEST_FORMAT_VERSION {
            return Err(format!(
                "{} has format {} {}, expected {MANIFEST_FORMAT} {MANIFEST_FORMAT_VERSION}",
                path.display(),
                manifest.format,
                manifest.version
            ));
        }
        Ok(manifest)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    /// Hash of `path` as recorded by any stage's outputs.
    pub fn recorded_hash(&self, path: &str) -> Option<&str> {
        self.stages.values().find_map(|s| s.outputs.get(path)).map(String::as_str)
    }
}

/// Seeds that drive every random draw of the run, by purpose.
pub fn seed_schedule(config: &Config) -> BTreeMap<String, u64> {
    let mut seeds = BTreeMap::new();
    if let Some(t) = &config.tasks.edge_existence {
        seeds.insert("edge_existence.graphs".into(), t.graphs.seed);
    }
    if let Some(t) = &config.tasks.common_connection {
        seeds.insert("common_connection.graphs".into(), t.graphs.seed);
    }
    if let Some(t) = &config.tasks.similarity {
        seeds.insert("similarity.graphs".into(), t.graphs.seed);
    }
    if let Some(m) = &config.backend.mock {
        seeds.insert("backend.mock".into(), m.seed);
    }
    seeds.insert("eval.bootstrap".into(), config.eval.bootstrap_seed);
    seeds.insert("fit.split".into(), config.fit.split_seed);
    seeds
}

fn redacted_config(config: &Config) -> Value {
    let mut value = serde_json::to_value(config).expect("config serializes");
    if config.backend.kind == BackendKind::Live {
        if let Some(backend) = value.get_mut("backend").and_then(Value::as_object_mut) {
            backend.insert("api_key".into(), Value::String(REDACTED.into()));
        }
    }
    value
}
