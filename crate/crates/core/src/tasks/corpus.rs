//! Corpus sampling for the three tasks and the line-delimited corpus format.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{
    build_common_connection, build_edge_existence, build_similarity, prompt, BuildContext, CellKey, Placement,
    TaskError, TaskInstance, TaskKind,
};
use crate::encoding::{Encoding, ENCODING_FORMAT_VERSION};
use crate::graph::{Graph, GraphParams, NodeId, QuestionTemplate};
use crate::prng::{self, derive_seed, derived_rng, Rng};
use crate::tokens::{BucketLabel, ThresholdTable};

pub const CORPUS_FORMAT_VERSION: &str = "corpus-v1";
const CORPUS_FORMAT: &str = "lidbench-corpus";

/// Where graphs come from: graph `g` is G(node_count, density) seeded by
/// `derive_seed(seed, ["graph", g])`, and sample `i` uses graph
/// `i / samples_per_graph`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSource {
    pub node_count: usize,
    pub density: f64,
    pub seed: u64,
    #[serde(default = "one")]
    pub samples_per_graph: usize,
    /// Nodes of interest must have at least this degree when set.
    #[serde(default)]
    pub min_degree: Option<usize>,
}

fn one() -> usize {
    1
}

impl GraphSource {
    pub fn graph_params(&self, sample: u64) -> GraphParams {
        let index = sample / self.samples_per_graph.max(1) as u64;
        GraphParams {
            node_count: self.node_count,
            density: self.density,
            seed: derive_seed(self.seed, &["graph", &index.to_string()]),
        }
    }

    fn validate(&self) -> Result<(), TaskError> {
        if self.samples_per_graph == 0 {
            return Err(TaskError::InvalidParameter("samples_per_graph must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.density) {
            return Err(TaskError::InvalidParameter(format!("density {} outside [0, 1]", self.density)));
        }
        Ok(())
    }

    fn eligible(&self, graph: &Graph, node: NodeId) -> bool {
        self.min_degree
            .is_none_or(|min| graph.degree(node).is_ok_and(|d| d >= min))
    }
}

/// Regenerates graphs lazily, keeping only the most recent one.
struct GraphCache {
    source: GraphSource,
    current: Option<(u64, Graph)>,
}

impl GraphCache {
    fn new(source: GraphSource) -> Self {
        Self { source, current: None }
    }

    fn get(&mut self, sample: u64) -> Result<&Graph, TaskError> {
        let params = self.source.graph_params(sample);
        if self.current.as_ref().is_none_or(|(seed, _)| *seed != params.seed) {
            self.current = Some((params.seed, params.generate()?));
        }
        Ok(&self.current.as_ref().expect("graph cached above").1)
    }
}

/// Draws `count` distinct nodes outside `exclude`, in sampled order.
pub fn sample_noise(graph: &Graph, exclude: &[NodeId], count: usize, rng: &mut Rng) -> Result<Vec<NodeId>, TaskError> {
    let pool: Vec<NodeId> = (0..graph.node_count() as NodeId).filter(|v| !exclude.contains(v)).collect();
    if pool.len() < count {
        return Err(TaskError::InvalidParameter(format!(
            "graph with {} nodes cannot supply {count} noise nodes besides {exclude:?}",
            graph.node_count()
        )));
    }
    Ok(sample_indices(rng, pool.len(), count).into_iter().map(|i| pool[i]).collect())
}

fn distinct_nodes<const K: usize>(rng: &mut Rng, node_count: usize) -> [NodeId; K] {
    let picked = sample_indices(rng, node_count, K);
    std::array::from_fn(|i| picked.index(i) as NodeId)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeExistenceConfig {
    pub graphs: GraphSource,
    /// Node pairs; each pair yields one instance per placement.
    pub samples: usize,
    #[serde(default = "nine")]
    pub noise_count: usize,
    /// Draws allowed per pair while looking for the wanted edge class.
    #[serde(default = "default_pair_attempts")]
    pub max_attempts_per_sample: u64,
}

fn nine() -> usize {
    9
}

fn default_pair_attempts() -> u64 {
    10_000
}

/// Edge-existence corpus with alternating connected/unconnected pairs. Node
/// and noise draws do not depend on the encoding, so corpora for different
/// encodings share the same underlying questions.
pub fn sample_edge_existence_corpus(
    ctx: &BuildContext,
    config: &EdgeExistenceConfig,
    encoding: Encoding,
) -> Result<Vec<TaskInstance>, TaskError> {
    config.graphs.validate()?;
    if config.graphs.node_count < config.noise_count + 2 {
        return Err(TaskError::InvalidParameter(format!(
            "graph with {} nodes cannot hold 2 nodes of interest and {} noise nodes",
            config.graphs.node_count, config.noise_count
        )));
    }
    let mut graphs = GraphCache::new(config.graphs);
    let mut out = Vec::with_capacity(config.samples * 3);
    for i in 0..config.samples as u64 {
        let graph = graphs.get(i)?;
        let mut rng = derived_rng(config.graphs.seed, &["edge_existence", &i.to_string()]);
        let want = i % 2 == 0;
        let pair = (0..config.max_attempts_per_sample)
            .map(|_| distinct_nodes::<2>(&mut rng, graph.node_count()))
            .find(|&[a, b]| {
                config.graphs.eligible(graph, a)
                    && config.graphs.eligible(graph, b)
                    && graph.edge_exists(a, b).is_ok_and(|e| e == want)
            })
            .ok_or_else(|| {
                TaskError::InvalidParameter(format!(
                    "no {} pair found for sample {i} within {} draws",
                    if want { "connected" } else { "unconnected" },
                    config.max_attempts_per_sample
                ))
            })?;
        let noise = sample_noise(graph, &pair, config.noise_count, &mut rng)?;
        for placement in Placement::ALL {
            let id = format!("ee-{encoding}-{i:06}-{placement}");
            out.push(build_edge_existence(ctx, graph, id, (pair[0], pair[1]), &noise, placement, encoding)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommonConnectionConfig {
    pub graphs: GraphSource,
    /// Node pairs; each pair yields one instance per grid cell.
    pub samples: usize,
    #[serde(default = "default_pair_attempts")]
    pub max_attempts_per_sample: u64,
}

/// Common-connection corpus in a paired design: every sampled pair appears
/// in all nine `(p1, p2)` cells.
pub fn sample_common_connection_corpus(
    ctx: &BuildContext,
    config: &CommonConnectionConfig,
    encoding: Encoding,
) -> Result<Vec<TaskInstance>, TaskError> {
    config.graphs.validate()?;
    if config.graphs.node_count < 3 {
        return Err(TaskError::InvalidParameter("common connections need at least 3 nodes".into()));
    }
    let mut graphs = GraphCache::new(config.graphs);
    let mut out = Vec::with_capacity(config.samples * 9);
    for i in 0..config.samples as u64 {
        let graph = graphs.get(i)?;
        let mut rng = derived_rng(config.graphs.seed, &["common_connection", &i.to_string()]);
        let [a, b] = (0..config.max_attempts_per_sample)
            .map(|_| distinct_nodes::<2>(&mut rng, graph.node_count()))
            .find(|&[a, b]| {
                config.graphs.eligible(graph, a)
                    && config.graphs.eligible(graph, b)
                    && graph.common_connections(a, b).is_ok_and(|c| !c.is_empty())
            })
            .ok_or_else(|| {
                TaskError::InvalidParameter(format!(
                    "no pair with a common connection found for sample {i} within {} draws",
                    config.max_attempts_per_sample
                ))
            })?;
        for p1 in 0..3u8 {
            for p2 in 3..6u8 {
                let id = format!("cc-{encoding}-{i:06}-{p1}{p2}");
                out.push(build_common_connection(ctx, graph, id, (a, b), p1, p2, encoding)?);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimilarityConfig {
    pub graphs: GraphSource,
    /// Instances per bucket cell, half of them with a "yes" answer.
    #[serde(default = "hundred")]
    pub quota: usize,
    /// Candidate triples drawn before giving up.
    #[serde(default = "default_similarity_attempts")]
    pub max_attempts: u64,
}

fn hundred() -> usize {
    100
}

fn default_similarity_attempts() -> u64 {
    2_000_000
}

/// A cell still short of its quota when sampling stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnfilledCell {
    pub cell: CellKey,
    pub yes: usize,
    pub no: usize,
    pub needed_yes: usize,
    pub needed_no: usize,
}

#[derive(Default, Clone, Copy)]
struct Tally {
    yes: usize,
    no: usize,
}

fn bucket_cells() -> impl Iterator<Item = CellKey> {
    BucketLabel::ALL
        .into_iter()
        .flat_map(|first| BucketLabel::ALL.into_iter().map(move |second| CellKey::Buckets { first, second }))
}

/// Rejection-samples similarity instances until each of the nine bucket
/// cells holds `quota` instances, half answered yes. Output is ordered by
/// cell, then by candidate index.
pub fn sample_similarity_corpus(
    ctx: &BuildContext,
    config: &SimilarityConfig,
    encoding: Encoding,
) -> Result<Vec<TaskInstance>, TaskError> {
    config.graphs.validate()?;
    if config.quota % 2 != 0 {
        return Err(TaskError::InvalidParameter(format!("quota {} must be even", config.quota)));
    }
    let per_class = config.quota / 2;
    let mut tallies: BTreeMap<CellKey, Tally> = bucket_cells().map(|c| (c, Tally::default())).collect();
    let unfilled = |tallies: &BTreeMap<CellKey, Tally>| -> Vec<UnfilledCell> {
        tallies
            .iter()
            .filter(|(_, t)| t.yes < per_class || t.no < per_class)
            .map(|(&cell, t)| UnfilledCell {
                cell,
                yes: t.yes,
                no: t.no,
                needed_yes: per_class,
                needed_no: per_class,
            })
            .collect()
    };
    if per_class == 0 {
        return Ok(Vec::new());
    }
    if config.graphs.node_count < 3 || config.graphs.density <= 0.0 {
        return Err(TaskError::PartialCorpus {
            attempts: 0,
            unfilled: unfilled(&tallies),
        });
    }

    let mut graphs = GraphCache::new(config.graphs);
    let mut accepted: Vec<(CellKey, u64, TaskInstance)> = Vec::with_capacity(config.quota * 9);
    let mut remaining = 9;
    let mut attempts = 0;
    while remaining > 0 && attempts < config.max_attempts {
        let candidate = attempts;
        attempts += 1;
        let graph = graphs.get(candidate)?;
        let mut rng = derived_rng(config.graphs.seed, &["similarity", &candidate.to_string()]);
        let [t1, s, t2] = distinct_nodes::<3>(&mut rng, graph.node_count());
        let template = QuestionTemplate::ALL[rng.random_range(0..2)];
        let shuffle_seed: u64 = rng.random();
        if ![t1, s, t2].iter().all(|&v| config.graphs.eligible(graph, v)) {
            continue;
        }
        let first = graph.common_connections(t1, s)?.len();
        let second = graph.common_connections(s, t2)?.len();
        if first == 0 || second == 0 {
            continue;
        }
        let yes = template.compare(first, second);
        let class_open = |t: &Tally| if yes { t.yes < per_class } else { t.no < per_class };
        if !tallies.values().any(class_open) {
            continue;
        }
        let id = format!("sim-{encoding}-{candidate:08}");
        let instance = build_similarity(ctx, graph, id, t1, s, t2, encoding, template, shuffle_seed)?;
        let tally = tallies.get_mut(&instance.cell).expect("bucket cells cover every label pair");
        if !class_open(tally) {
            continue;
        }
        if yes {
            tally.yes += 1;
        } else {
            tally.no += 1;
        }
        if tally.yes == per_class && tally.no == per_class {
            remaining -= 1;
        }
        accepted.push((instance.cell, candidate, instance));
    }
    if remaining > 0 {
        return Err(TaskError::PartialCorpus {
            attempts,
            unfilled: unfilled(&tallies),
        });
    }
    accepted.sort_by_key(|(cell, candidate, _)| (*cell, *candidate));
    Ok(accepted.into_iter().map(|(_, _, i)| i).collect())
}

/// First line of every corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusHeader {
    pub format: String,
    pub version: String,
    pub task: TaskKind,
    pub encoding: Encoding,
    pub encoding_format: String,
    pub prompt_format: String,
    pub tokenizer: String,
    pub vocab_hash: String,
    pub thresholds: ThresholdTable,
    pub prng: String,
}

impl CorpusHeader {
    pub fn new(ctx: &BuildContext, task: TaskKind, encoding: Encoding) -> Self {
        Self {
            format: CORPUS_FORMAT.to_string(),
            version: CORPUS_FORMAT_VERSION.to_string(),
            task,
            encoding,
            encoding_format: ENCODING_FORMAT_VERSION.to_string(),
            prompt_format: prompt::PROMPT_FORMAT_VERSION.to_string(),
            tokenizer: ctx.tokenizer.id().to_string(),
            vocab_hash: ctx.tokenizer.vocab_hash().to_string(),
            thresholds: ctx.thresholds,
            prng: prng::PRNG_ID.to_string(),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TaskError + '_ {
    move |source| TaskError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_corpus(path: &Path, header: &CorpusHeader, instances: &[TaskInstance]) -> Result<(), TaskError> {
    let mut out = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let mut line = |value: String| writeln!(out, "{value}").map_err(io_err(path));
    line(serde_json::to_string(header).expect("header serializes"))?;
    for instance in instances {
        line(serde_json::to_string(instance).expect("instance serializes"))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn read_corpus(path: &Path) -> Result<(CorpusHeader, Vec<TaskInstance>), TaskError> {
    let bad = |reason: String| TaskError::CorpusFormat {
        path: path.display().to_string(),
        reason,
    };
    let mut lines = BufReader::new(File::open(path).map_err(io_err(path))?).lines();
    let first = lines.next().ok_or_else(|| bad("empty file".into()))?.map_err(io_err(path))?;
    let header: CorpusHeader = serde_json::from_str(&first).map_err(|e| bad(format!("header: {e}")))?;
    if header.format != CORPUS_FORMAT || header.version != CORPUS_FORMAT_VERSION {
        return Err(bad(format!(
            "unsupported format {} {} (expected {CORPUS_FORMAT} {CORPUS_FORMAT_VERSION})",
            header.format, header.version
        )));
    }
    let mut instances = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let instance: TaskInstance =
            serde_json::from_str(&line).map_err(|e| bad(format!("line {}: {e}", n + 2)))?;
        if instance.task != header.task || instance.encoding != header.encoding {
            return Err(bad(format!(
                "line {}: instance {} is {}/{} but the header declares {}/{}",
                n + 2,
                instance.id,
                instance.task,
                instance.encoding,
                header.task,
                header.encoding
            )));
        }
        instances.push(instance);
    }
    Ok((header, instances))
}
