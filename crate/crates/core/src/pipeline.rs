//! Stage orchestration over a run directory:
//!
//! ```text
//! <run-dir>/config.toml            copy of the configuration
//! <run-dir>/corpus/<task>-<enc>.jsonl
//! <run-dir>/responses/<task>-<enc>.jsonl
//! <run-dir>/scores/{outcomes.jsonl, cells.csv, cells.jsonl, failed.txt}
//! <run-dir>/fit/{fit-<enc>.json, curves-<enc>.svg, summary.csv}
//! <run-dir>/report/...
//! <run-dir>/cache/                 live responses keyed by request hash
//! <run-dir>/manifest.json
//! ```
//!
//! Every stage checks that the files it reads still hash to the values the
//! manifest recorded, then records its own inputs and outputs. No stage
//! writes outside the run directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use log::{info, warn};

use crate::config::{BackendKind, Config, ConfigError};
use crate::encoding::Encoding;
use crate::eval::report::{cells_csv, cells_jsonl, emit_report, ReportError};
use crate::eval::{self, AccuracyCell, Outcome};
use crate::fit::{self, CellSamples, FitError, FitResult, GHat, PositionAccuracy};
use crate::manifest::{Manifest, StageRecord, MANIFEST_FILE};
use crate::prng::sha256_hex;
use crate::runner::cache::ResponseCache;
use crate::runner::live::LiveBackend;
use crate::runner::mock::MockBackend;
use crate::runner::{ChatBackend, ModelResponse, RateLimiter, RunError, Runner};
use crate::tasks::corpus::{self, CorpusHeader};
use crate::tasks::{BuildContext, TaskError, TaskInstance, TaskKind};
use crate::tokens::{TokenError, Tokenizer};

pub const FIT_FORMAT_VERSION: &str = "fit-v1";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Generate,
    Run,
    Score,
    Fit,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Self::Generate, Self::Run, Self::Score, Self::Fit, Self::Report];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Run => "run",
            Stage::Score => "score",
            Stage::Fit => "fit",
            Stage::Report => "report",
        }
    }
}

/// A file whose bytes no longer match the manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mismatch {
    pub path: String,
    pub expected: String,
    /// `None` when the file is missing.
    pub actual: Option<String>,
}

impl std::fmt::Display for Mismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.actual {
            Some(a) => write!(f, "{} hashes to {} but the manifest records {}", self.path, a, self.expected),
            None => write!(f, "{} is missing (manifest records {})", self.path, self.expected),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Validation(String),
    #[error("stale or modified inputs, refusing to continue:\n{}", .0.iter().map(|m| format!("  {m}")).collect::<Vec<_>>().join("\n"))]
    HashMismatch(Vec<Mismatch>),
    #[error("backend failure: {0}")]
    Backend(String),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Token(#[from] TokenError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// 0 success, 1 validation, 2 upstream hash mismatch, 3 backend failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::HashMismatch(_) => 2,
            PipelineError::Backend(_) => 3,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

/// Per-stage result summary for the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageSummary {
    pub stage: Stage,
    pub outputs: Vec<String>,
    pub notes: Vec<String>,
}

pub struct RunDir {
    root: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn corpus_name(task: TaskKind, encoding: Encoding) -> String {
    format!("corpus/{task}-{encoding}.jsonl")
}

fn responses_name(task: TaskKind, encoding: Encoding) -> String {
    format!("responses/{task}-{encoding}.jsonl")
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, relative: &str) -> PathBuf {
        self.root.join(relative)
    }

    fn write(&self, relative: &str, bytes: impl AsRef<[u8]>) -> Result<String> {
        let path = self.path(relative);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        fs::write(&path, bytes.as_ref()).map_err(io_err(&path))?;
        Ok(sha256_hex(bytes))
    }

    fn read(&self, relative: &str) -> Result<Vec<u8>> {
        let path = self.path(relative);
        fs::read(&path).map_err(io_err(&path))
    }

    fn hash(&self, relative: &str) -> Option<String> {
        fs::read(self.path(relative)).ok().map(sha256_hex)
    }

    pub fn manifest(&self) -> Result<Manifest> {
        let path = self.path(MANIFEST_FILE);
        if !path.exists() {
            return Err(PipelineError::Validation(format!(
                "{} has no {MANIFEST_FILE}; run `generate` first",
                self.root.display()
            )));
        }
        Manifest::load(&path).map_err(PipelineError::Validation)
    }

    fn save_manifest(&self, manifest: &Manifest) -> Result<()> {
        self.write(MANIFEST_FILE, manifest.to_json()).map(|_| ())
    }

    /// Loads the manifest and the configuration it was generated from,
    /// refusing if the stored configuration was edited since.
    fn load(&self) -> Result<(Manifest, Config)> {
        let manifest = self.manifest()?;
        let bytes = self.read(&manifest.config_file)?;
        let actual = sha256_hex(&bytes);
        if actual != manifest.config_hash {
            return Err(PipelineError::HashMismatch(vec![Mismatch {
                path: manifest.config_file.clone(),
                expected: manifest.config_hash.clone(),
                actual: Some(actual),
            }]));
        }
        let text = String::from_utf8(bytes)
            .map_err(|_| PipelineError::Validation(format!("{} is not UTF-8", manifest.config_file)))?;
        Ok((manifest, Config::parse(&text)?))
    }

    /// Every file the `upstream` stages produced must still match its hash.
    fn check_upstream(&self, manifest: &Manifest, stage: Stage, upstream: &[Stage]) -> Result<BTreeMap<String, String>> {
        let mut inputs = BTreeMap::new();
        let mut mismatches = Vec::new();
        for up in upstream {
            let record = manifest.stages.get(up.as_str()).ok_or_else(|| {
                PipelineError::Validation(format!("`{}` needs the `{}` stage to run first", stage.as_str(), up.as_str()))
            })?;
            for (path, expected) in &record.outputs {
                let actual = self.hash(path);
                if actual.as_deref() != Some(expected.as_str()) {
                    mismatches.push(Mismatch {
                        path: path.clone(),
                        expected: expected.clone(),
                        actual,
                    });
                }
                inputs.insert(path.clone(), expected.clone());
            }
        }
        if mismatches.is_empty() {
            Ok(inputs)
        } else {
            Err(PipelineError::HashMismatch(mismatches))
        }
    }

    fn record(&self, mut manifest: Manifest, stage: Stage, inputs: BTreeMap<String, String>, outputs: BTreeMap<String, String>) -> Result<()> {
        manifest.stages.insert(stage.as_str().to_string(), StageRecord { inputs, outputs });
        self.save_manifest(&manifest)
    }

    fn read_corpus(&self, relative: &str) -> Result<(CorpusHeader, Vec<TaskInstance>)> {
        Ok(corpus::read_corpus(&self.path(relative))?)
    }

    fn read_jsonl<T: serde::de::DeserializeOwned>(&self, relative: &str) -> Result<Vec<T>> {
        let bytes = self.read(relative)?;
        let text = String::from_utf8(bytes).map_err(|_| PipelineError::Validation(format!("{relative} is not UTF-8")))?;
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map_err(|e| PipelineError::Validation(format!("{relative} line {}: {e}", i + 1)))
            })
            .collect()
    }
}

fn to_jsonl<T: serde::Serialize>(rows: &[T]) -> String {
    rows.iter()
        .map(|r| serde_json::to_string(r).expect("row serializes") + "\n")
        .collect()
}

fn corpus_pairs(config: &Config) -> Vec<(TaskKind, Encoding)> {
    config
        .tasks
        .enabled()
        .into_iter()
        .flat_map(|t| config.encodings.iter().map(move |&e| (t, e)))
        .collect()
}

/// Copies the configuration into the run directory and writes one corpus
/// file per (task, encoding). Re-running with the same configuration
/// rewrites identical bytes.
pub fn generate(run_dir: &RunDir, config_path: &Path) -> Result<StageSummary> {
    let bytes = fs::read(config_path).map_err(io_err(config_path))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| PipelineError::Validation(format!("{} is not UTF-8", config_path.display())))?;
    let config = Config::parse(&text)?;
    let tokenizer = Tokenizer::load(&config.tokenizer)?;
    let mut ctx = BuildContext::new(tokenizer);
    ctx.thresholds = config.thresholds;

    let corpus_dir = run_dir.path("corpus");
    fs::create_dir_all(&corpus_dir).map_err(io_err(&corpus_dir))?;
    let mut manifest = Manifest::new(&config, CONFIG_FILE, &bytes, ctx.tokenizer.vocab_hash());
    if let Ok(previous) = run_dir.manifest() {
        // Downstream records survive so that `verify` can flag them as stale.
        manifest.stages = previous.stages;
    }
    run_dir.write(CONFIG_FILE, &bytes)?;

    let mut outputs = BTreeMap::new();
    for (task, encoding) in corpus_pairs(&config) {
        info!("generating {task} corpus for {encoding}");
        let instances = match task {
            TaskKind::EdgeExistence => {
                corpus::sample_edge_existence_corpus(&ctx, config.tasks.edge_existence.as_ref().expect("enabled"), encoding)
            }
            TaskKind::CommonConnection => corpus::sample_common_connection_corpus(
                &ctx,
                config.tasks.common_connection.as_ref().expect("enabled"),
                encoding,
            ),
            TaskKind::Similarity => {
                corpus::sample_similarity_corpus(&ctx, config.tasks.similarity.as_ref().expect("enabled"), encoding)
            }
        }?;
        let name = corpus_name(task, encoding);
        let header = CorpusHeader::new(&ctx, task, encoding);
        corpus::write_corpus(&run_dir.path(&name), &header, &instances)?;
        let hash = run_dir.hash(&name).expect("corpus just written");
        info!("{name}: {} instances", instances.len());
        outputs.insert(name, hash);
    }
    let mut inputs = BTreeMap::new();
    inputs.insert(CONFIG_FILE.to_string(), manifest.config_hash.clone());
    let names = outputs.keys().cloned().collect();
    run_dir.record(manifest, Stage::Generate, inputs, outputs)?;
    Ok(StageSummary {
        stage: Stage::Generate,
        outputs: names,
        notes: Vec::new(),
    })
}

fn backend_for(config: &Config) -> Result<Box<dyn ChatBackend>> {
    let b = &config.backend;
    match b.kind {
        BackendKind::Mock => Ok(Box::new(MockBackend {
            model: b.mock.clone().expect("validated"),
        })),
        BackendKind::Live => {
            let endpoint = b.endpoint.as_deref().expect("validated");
            let env = b.api_key_env.as_deref().expect("validated");
            let backend = LiveBackend::new(endpoint, env, Duration::from_secs(b.timeout_secs))
                .map_err(PipelineError::Validation)?;
            Ok(Box::new(backend))
        }
    }
}

/// Sends every corpus instance to the configured backend and stores one
/// response record per instance.
pub fn run(run_dir: &RunDir) -> Result<StageSummary> {
    let (manifest, config) = run_dir.load()?;
    let inputs = run_dir.check_upstream(&manifest, Stage::Run, &[Stage::Generate])?;
    let backend = backend_for(&config)?;
    let cache = if backend.cacheable() {
        let dir = run_dir.path("cache");
        Some(ResponseCache::open(&dir).map_err(io_err(&dir))?)
    } else {
        None
    };
    let limiter = config
        .backend
        .requests_per_minute
        .map(|rpm| RateLimiter::new(rpm, config.backend.burst.unwrap_or(1)));
    let runner = Runner {
        backend: backend.as_ref(),
        settings: config.backend.run_settings(),
        cache: cache.as_ref(),
        limiter: limiter.as_ref(),
    };

    let mut outputs = BTreeMap::new();
    let mut notes = Vec::new();
    for (task, encoding) in corpus_pairs(&config) {
        let (_, instances) = run_dir.read_corpus(&corpus_name(task, encoding))?;
        info!("running {} {task} instances for {encoding}", instances.len());
        let responses = runner.run(&instances).map_err(|e| match e {
            RunError::Auth { .. } => PipelineError::Backend(e.to_string()),
        })?;
        let failed = responses.iter().filter(|r| r.error.is_some()).count();
        if failed > 0 {
            warn!("{failed} {task}/{encoding} requests failed after retries");
            notes.push(format!("{task}/{encoding}: {failed} failed requests"));
        }
        let hits = responses.iter().filter(|r| r.cache_hit).count();
        if hits > 0 {
            notes.push(format!("{task}/{encoding}: {hits} cache hits"));
        }
        let name = responses_name(task, encoding);
        let hash = run_dir.write(&name, to_jsonl(&responses))?;
        outputs.insert(name, hash);
    }
    let names = outputs.keys().cloned().collect();
    run_dir.record(manifest, Stage::Run, inputs, outputs)?;
    Ok(StageSummary {
        stage: Stage::Run,
        outputs: names,
        notes,
    })
}

/// Parses every response and aggregates accuracy cells.
pub fn score(run_dir: &RunDir) -> Result<StageSummary> {
    let (manifest, config) = run_dir.load()?;
    let inputs = run_dir.check_upstream(&manifest, Stage::Score, &[Stage::Generate, Stage::Run])?;
    let mut all_outcomes: Vec<Outcome> = Vec::new();
    let mut failed: Vec<String> = Vec::new();
    for (task, encoding) in corpus_pairs(&config) {
        let (_, instances) = run_dir.read_corpus(&corpus_name(task, encoding))?;
        let responses: Vec<ModelResponse> = run_dir.read_jsonl(&responses_name(task, encoding))?;
        let (outcomes, missing) = eval::outcomes(&instances, &responses, config.eval.repetition_threshold);
        all_outcomes.extend(outcomes);
        failed.extend(missing);
    }
    let cells = eval::score(&all_outcomes, config.eval.bootstrap_resamples, config.eval.bootstrap_seed);
    let csv_bytes = cells_csv(&cells).map_err(ReportError::from)?;

    let mut outputs = BTreeMap::new();
    outputs.insert("scores/outcomes.jsonl".to_string(), run_dir.write("scores/outcomes.jsonl", to_jsonl(&all_outcomes))?);
    outputs.insert("scores/cells.csv".to_string(), run_dir.write("scores/cells.csv", csv_bytes)?);
    outputs.insert("scores/cells.jsonl".to_string(), run_dir.write("scores/cells.jsonl", cells_jsonl(&cells))?);
    let failed_text: String = failed.iter().map(|id| format!("{id}\n")).collect();
    outputs.insert("scores/failed.txt".to_string(), run_dir.write("scores/failed.txt", failed_text)?);
    let mut notes = vec![format!("{} scored instances in {} cells", all_outcomes.len(), cells.len())];
    if !failed.is_empty() {
        notes.push(format!("{} instances excluded after backend errors", failed.len()));
    }
    let names = outputs.keys().cloned().collect();
    run_dir.record(manifest, Stage::Score, inputs, outputs)?;
    Ok(StageSummary {
        stage: Stage::Score,
        outputs: names,
        notes,
    })
}

/// Fits both degradation models for every encoding that has edge-existence
/// and common-connection scores.
pub fn fit(run_dir: &RunDir) -> Result<StageSummary> {
    let (manifest, config) = run_dir.load()?;
    let inputs = run_dir.check_upstream(&manifest, Stage::Fit, &[Stage::Score])?;
    let cells: Vec<AccuracyCell> = run_dir.read_jsonl("scores/cells.jsonl")?;
    let outcomes: Vec<Outcome> = run_dir.read_jsonl("scores/outcomes.jsonl")?;
    let options = config.fit.options();

    let mut outputs = BTreeMap::new();
    let mut notes = Vec::new();
    let mut fits = Vec::new();
    for &encoding in &config.encodings {
        let measured = PositionAccuracy::from_cells(&cells, encoding);
        let samples = CellSamples::from_outcomes(&outcomes, encoding);
        if measured.positions.len() < 2 || samples.len() < 2 {
            notes.push(format!("{encoding}: skipped, needs edge-existence and common-connection scores"));
            continue;
        }
        let g = GHat::estimate(&measured)?;
        let result = fit::compare_models(encoding, &samples, &g, config.fit.split_seed, &options)?;
        let json = serde_json::to_string_pretty(&FitFile {
            format: FIT_FORMAT_VERSION,
            fit: &result,
        })
        .expect("fit serializes")
            + "\n";
        let name = format!("fit/fit-{encoding}.json");
        outputs.insert(name.clone(), run_dir.write(&name, json)?);
        let name = format!("fit/curves-{encoding}.svg");
        outputs.insert(name.clone(), run_dir.write(&name, fit::curves_svg(&result))?);
        notes.push(format!(
            "{encoding}: test RMSE position-only {:.2}, with distance {:.2} (noise floor {:.2})",
            result.position_model.test, result.distance_model.test, result.noise_floor
        ));
        fits.push(result);
    }
    if fits.is_empty() {
        return Err(PipelineError::Validation(
            "no encoding has both edge-existence and common-connection scores to fit".into(),
        ));
    }
    outputs.insert("fit/summary.csv".to_string(), run_dir.write("fit/summary.csv", fit_summary_csv(&fits)?)?);
    let names = outputs.keys().cloned().collect();
    run_dir.record(manifest, Stage::Fit, inputs, outputs)?;
    Ok(StageSummary {
        stage: Stage::Fit,
        outputs: names,
        notes,
    })
}

#[derive(serde::Serialize, serde::Deserialize)]
struct FitFile<T> {
    format: &'static str,
    fit: T,
}

/// Reads a fit file written by the `fit` stage.
pub fn read_fit(path: &Path) -> Result<FitResult> {
    #[derive(serde::Deserialize)]
    struct Owned {
        format: String,
        fit: FitResult,
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let file: Owned = serde_json::from_str(&text)
        .map_err(|e| PipelineError::Validation(format!("{} is not a fit file: {e}", path.display())))?;
    if file.format != FIT_FORMAT_VERSION {
        return Err(PipelineError::Validation(format!(
            "{} has format {}, expected {FIT_FORMAT_VERSION}",
            path.display(),
            file.format
        )));
    }
    Ok(file.fit)
}

fn fit_summary_csv(fits: &[FitResult]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = [
        "encoding",
        "gamma_hat",
        "position_model_train_rmse",
        "position_model_test_rmse",
        "distance_model_train_rmse",
        "distance_model_test_rmse",
        "noise_floor",
        "excluded_cells",
    ];
    let csv_err = |e: csv::Error| PipelineError::Report(ReportError::from(e));
    w.write_record(header).map_err(csv_err)?;
    for f in fits {
        w.write_record([
            f.encoding.to_string(),
            format!("{:.4}", f.gamma_hat),
            format!("{:.2}", f.position_model.train),
            format!("{:.2}", f.position_model.test),
            format!("{:.2}", f.distance_model.train),
            format!("{:.2}", f.distance_model.test),
            format!("{:.2}", f.noise_floor),
            f.h_hat.excluded_cells.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| csv_err(csv::Error::from(e.into_error())))
}

/// Bundles cell tables, figures, fit curves and a summary carrying the
/// manifest hashes into `report/`.
pub fn report(run_dir: &RunDir) -> Result<StageSummary> {
    let (manifest, config) = run_dir.load()?;
    let fitted = manifest.stages.contains_key(Stage::Fit.as_str());
    let upstream: &[Stage] = if fitted { &[Stage::Score, Stage::Fit] } else { &[Stage::Score] };
    let inputs = run_dir.check_upstream(&manifest, Stage::Report, upstream)?;
    let cells: Vec<AccuracyCell> = run_dir.read_jsonl("scores/cells.jsonl")?;

    let mut metadata = BTreeMap::new();
    metadata.insert("tool_version".to_string(), manifest.tool_version.clone());
    metadata.insert("config_hash".to_string(), manifest.config_hash.clone());
    metadata.insert("model".to_string(), config.backend.model.clone());
    metadata.insert("tokenizer".to_string(), format!("{} {}", manifest.tokenizer, manifest.vocab_hash));
    for (path, hash) in &inputs {
        metadata.insert(format!("input:{path}"), hash.clone());
    }
    let dir = run_dir.path("report");
    let written = emit_report(&cells, &metadata, &dir)?;
    let mut outputs = BTreeMap::new();
    for name in written {
        let rel = format!("report/{name}");
        outputs.insert(rel.clone(), run_dir.hash(&rel).expect("report file just written"));
    }
    if fitted {
        let fit_files: Vec<String> = manifest.stages[Stage::Fit.as_str()]
            .outputs
            .keys()
            .filter(|p| p.ends_with(".svg") || p.ends_with(".csv"))
            .cloned()
            .collect();
        for path in fit_files {
            let rel = format!("report/{}", path.trim_start_matches("fit/").replace("summary.csv", "fit-summary.csv"));
            outputs.insert(rel.clone(), run_dir.write(&rel, run_dir.read(&path)?)?);
        }
    }
    let names = outputs.keys().cloned().collect();
    run_dir.record(manifest, Stage::Report, inputs, outputs)?;
    Ok(StageSummary {
        stage: Stage::Report,
        outputs: names,
        notes: Vec::new(),
    })
}

/// Checks every recorded artifact against its hash and every stage's
/// recorded inputs against the current upstream outputs. Returns the number
/// of files checked.
pub fn verify(run_dir: &RunDir) -> Result<usize> {
    let manifest = run_dir.manifest()?;
    let mut mismatches = Vec::new();
    let mut checked = 0;
    let config_actual = run_dir.hash(&manifest.config_file);
    if config_actual.as_deref() != Some(manifest.config_hash.as_str()) {
        mismatches.push(Mismatch {
            path: manifest.config_file.clone(),
            expected: manifest.config_hash.clone(),
            actual: config_actual,
        });
    }
    checked += 1;
    for record in manifest.stages.values() {
        for (path, expected) in &record.outputs {
            checked += 1;
            let actual = run_dir.hash(path);
            if actual.as_deref() != Some(expected.as_str()) {
                mismatches.push(Mismatch {
                    path: path.clone(),
                    expected: expected.clone(),
                    actual,
                });
            }
        }
        for (path, expected) in &record.inputs {
            let current = if *path == manifest.config_file {
                Some(manifest.config_hash.as_str())
            } else {
                manifest.recorded_hash(path)
            };
            if current != Some(expected.as_str()) {
                mismatches.push(Mismatch {
                    path: path.clone(),
                    expected: expected.clone(),
                    actual: current.map(str::to_string),
                });
            }
        }
    }
    if mismatches.is_empty() {
        Ok(checked)
    } else {
        Err(PipelineError::HashMismatch(mismatches))
    }
}

/// Runs every stage in order; the fit stage is skipped when the
/// configuration lacks the tasks it needs.
pub fn run_all(run_dir: &RunDir, config_path: &Path) -> Result<Vec<StageSummary>> {
    let mut out = vec![generate(run_dir, config_path)?, run(run_dir)?, score(run_dir)?];
    let (_, config) = run_dir.load()?;
    if config.tasks.edge_existence.is_some() && config.tasks.common_connection.is_some() {
        out.push(fit(run_dir)?);
    }
    out.push(report(run_dir)?);
    Ok(out)
}
