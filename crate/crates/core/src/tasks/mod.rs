//! Task instances for edge existence, common connection and similarity, with
//! the relevant subgraphs placed at controlled positions in the prompt.

pub mod corpus;
pub mod prompt;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::encoding::{assemble_graph_section, encode, EdgeSpan, Encoding, EncodingError};
use crate::graph::{Graph, GraphError, GraphParams, NodeId, QuestionTemplate, Subgraph};
use crate::prng;
use crate::tokens::{BucketLabel, ThresholdTable, TokenError, TokenMap, Tokenizer};

pub use corpus::{
    read_corpus, sample_common_connection_corpus, sample_edge_existence_corpus, sample_noise,
    sample_similarity_corpus, write_corpus, CommonConnectionConfig, CorpusHeader, EdgeExistenceConfig,
    GraphSource, SimilarityConfig, UnfilledCell, CORPUS_FORMAT_VERSION,
};

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Token(#[from] TokenError),
    #[error("invalid task parameter: {0}")]
    InvalidParameter(String),
    /// The sampled nodes cannot form a valid instance; draw again.
    #[error("sample rejected: {0}")]
    Rejected(String),
    #[error("attempt budget of {attempts} exhausted with unfilled cells: {}", format_unfilled(.unfilled))]
    PartialCorpus { attempts: u64, unfilled: Vec<UnfilledCell> },
    #[error("corpus file {path}: {reason}")]
    CorpusFormat { path: String, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn format_unfilled(cells: &[UnfilledCell]) -> String {
    cells
        .iter()
        .map(|c| format!("{} (yes {}/{}, no {}/{})", c.cell, c.yes, c.needed_yes, c.no, c.needed_no))
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    EdgeExistence,
    CommonConnection,
    Similarity,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [Self::EdgeExistence, Self::CommonConnection, Self::Similarity];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::EdgeExistence => "edge_existence",
            Self::CommonConnection => "common_connection",
            Self::Similarity => "similarity",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| TaskError::InvalidParameter(format!("unknown task `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Beginning,
    Middle,
    End,
}

impl Placement {
    pub const ALL: [Placement; 3] = [Self::Beginning, Self::Middle, Self::End];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Beginning => "beginning",
            Self::Middle => "middle",
            Self::End => "end",
        }
    }

    /// Start index of a contiguous group of `group` items inside a container
    /// of `total` items. Middle centers the group, rounding toward the start.
    pub fn group_start(self, total: usize, group: usize) -> usize {
        let free = total.saturating_sub(group);
        match self {
            Self::Beginning => 0,
            Self::Middle => free / 2,
            Self::End => free,
        }
    }

    /// Placement slot of a common-connection grid index (0/3 beginning,
    /// 1/4 middle, 2/5 end).
    pub fn from_grid(index: u8) -> Self {
        Self::ALL[(index % 3) as usize]
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ground truth or parsed model answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    YesNo(bool),
    Count(u32),
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Answer::YesNo(true) => f.write_str("yes"),
            Answer::YesNo(false) => f.write_str("no"),
            Answer::Count(n) => write!(f, "{n}"),
        }
    }
}

/// Which aggregation cell an instance belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellKey {
    Placement { placement: Placement },
    Grid { p1: u8, p2: u8 },
    Buckets { first: BucketLabel, second: BucketLabel },
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CellKey::Placement { placement } => write!(f, "{placement}"),
            CellKey::Grid { p1, p2 } => write!(f, "({p1},{p2})"),
            CellKey::Buckets { first, second } => write!(f, "({first},{second})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

impl Prompt {
    /// The prompt as one string, the text every token measurement uses.
    pub fn full_text(&self) -> String {
        format!("{}{}{}", self.system, prompt::MESSAGE_SEPARATOR, self.user)
    }

    fn user_offset(&self) -> usize {
        self.system.len() + prompt::MESSAGE_SEPARATOR.len()
    }
}

/// Token-space measurements taken on the full prompt at build time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurements {
    pub prompt_tokens: usize,
    /// Normalized token midpoints of the relevant information: the
    /// interest-pair group (edge existence), each common-connection group
    /// (common connection), or each block in order (similarity).
    pub positions: Vec<f64>,
    /// Median token distances between common-node occurrences.
    pub median_distances: Vec<usize>,
    /// Distances normalized to the prompt length: `|p2 - p1|` for common
    /// connection, median distance over prompt tokens for similarity.
    pub normalized_distances: Vec<f64>,
}

/// Everything needed to rebuild an instance byte-for-byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub graph: GraphParams,
    /// Nodes of interest in block order.
    pub nodes: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub noise: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<QuestionTemplate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shuffle_seed: Option<u64>,
    pub tokenizer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: String,
    pub task: TaskKind,
    pub encoding: Encoding,
    pub cell: CellKey,
    pub ground_truth: Answer,
    pub prompt: Prompt,
    pub measurements: Measurements,
    pub provenance: Provenance,
}

/// Shared inputs of every builder.
#[derive(Debug, Clone)]
pub struct BuildContext {
    pub tokenizer: Tokenizer,
    pub thresholds: ThresholdTable,
}

impl BuildContext {
    pub fn new(tokenizer: Tokenizer) -> Self {
        Self {
            tokenizer,
            thresholds: ThresholdTable::default(),
        }
    }
}

/// A rendered prompt with absolute (full-text) spans for every block and edge.
struct Layout {
    prompt: Prompt,
    /// Absolute byte range of each block.
    blocks: Vec<Range<usize>>,
    /// Absolute edge spans per block.
    spans: Vec<Vec<EdgeSpan>>,
}

impl Layout {
    fn render(subgraphs: &[Subgraph], encoding: Encoding, question: &str, instructions: &str) -> Result<Self, TaskError> {
        let parts: Vec<_> = subgraphs.iter().map(|s| encode(s, encoding)).collect();
        let section = assemble_graph_section(&parts)?;
        let (user, section_offset) = prompt::user_message(encoding, &section.text, question, instructions);
        let prompt = Prompt {
            system: prompt::SYSTEM_PROMPT.to_string(),
            user,
        };
        let base = prompt.user_offset() + section_offset;
        let blocks = parts
            .iter()
            .zip(&section.offsets)
            .map(|(p, off)| base + off..base + off + p.text.len())
            .collect();
        let spans = parts
            .iter()
            .zip(&section.offsets)
            .map(|(p, off)| p.edge_spans.iter().map(|s| s.shifted(base + off)).collect())
            .collect();
        Ok(Self { prompt, blocks, spans })
    }

    fn span(&self, block: usize, neighbor: NodeId) -> Option<Range<usize>> {
        self.spans[block].iter().find(|s| s.neighbor == neighbor).map(EdgeSpan::range)
    }

    /// Occurrence pairs of each common node between two blocks.
    fn occurrences(&self, first: usize, second: usize, common: &[NodeId]) -> Vec<(Range<usize>, Range<usize>)> {
        common
            .iter()
            .filter_map(|&v| Some((self.span(first, v)?, self.span(second, v)?)))
            .collect()
    }
}

fn check_distinct(nodes: &[NodeId]) -> Result<(), TaskError> {
    for (i, a) in nodes.iter().enumerate() {
        if nodes[i + 1..].contains(a) {
            return Err(TaskError::Graph(GraphError::DuplicateNodes(nodes.to_vec())));
        }
    }
    Ok(())
}

fn provenance(ctx: &BuildContext, graph: &Graph, nodes: Vec<NodeId>) -> Provenance {
    Provenance {
        graph: graph.params(),
        nodes,
        noise: Vec::new(),
        template: None,
        shuffle_seed: None,
        tokenizer: ctx.tokenizer.id().to_string(),
    }
}

/// Edge-existence prompt: noise blocks in the given order with the two
/// interest blocks grouped at the beginning, middle or end.
pub fn build_edge_existence(
    ctx: &BuildContext,
    graph: &Graph,
    id: impl Into<String>,
    pair: (NodeId, NodeId),
    noise: &[NodeId],
    placement: Placement,
    encoding: Encoding,
) -> Result<TaskInstance, TaskError> {
    let (a, b) = pair;
    let mut all = vec![a, b];
    all.extend_from_slice(noise);
    check_distinct(&all)?;
    let truth = graph.edge_exists(a, b)?;

    let total = noise.len() + 2;
    let start = placement.group_start(total, 2);
    let mut order: Vec<NodeId> = noise.to_vec();
    order.splice(start..start, [a, b]);
    let subgraphs = order.iter().map(|&v| graph.subgraph_of(v)).collect::<Result<Vec<_>, _>>()?;

    let layout = Layout::render(
        &subgraphs,
        encoding,
        &prompt::edge_existence_question(a, b),
        prompt::YES_NO_INSTRUCTIONS,
    )?;
    let map = ctx.tokenizer.tokenize(&layout.prompt.full_text());
    let group = layout.blocks[start].start..layout.blocks[start + 1].end;

    let mut prov = provenance(ctx, graph, vec![a, b]);
    prov.noise = noise.to_vec();
    Ok(TaskInstance {
        id: id.into(),
        task: TaskKind::EdgeExistence,
        encoding,
        cell: CellKey::Placement { placement },
        ground_truth: Answer::YesNo(truth),
        measurements: Measurements {
            prompt_tokens: map.token_count(),
            positions: vec![map.normalized_midpoint(group)],
            median_distances: Vec::new(),
            normalized_distances: Vec::new(),
        },
        prompt: layout.prompt,
        provenance: prov,
    })
}

/// Orders a neighbor list with the common neighbors grouped (ascending) at
/// `slot`, the remaining neighbors ascending around them.
pub fn group_common(neighbors: &[NodeId], common: &[NodeId], slot: Placement) -> Vec<NodeId> {
    let rest: Vec<NodeId> = neighbors.iter().copied().filter(|v| common.binary_search(v).is_err()).collect();
    let start = slot.group_start(neighbors.len(), common.len());
    let mut order = rest;
    order.splice(start..start, common.iter().copied());
    order
}

fn group_span(layout: &Layout, block: usize, common: &[NodeId]) -> Range<usize> {
    let spans: Vec<Range<usize>> = common.iter().filter_map(|&v| layout.span(block, v)).collect();
    let start = spans.iter().map(|s| s.start).min().unwrap_or(layout.blocks[block].start);
    let end = spans.iter().map(|s| s.end).max().unwrap_or(layout.blocks[block].end);
    start..end
}

/// Common-connection prompt with only the two interest blocks; the common
/// neighbors form one group at grid position `p1 ∈ {0,1,2}` in the first
/// block and `p2 ∈ {3,4,5}` in the second.
pub fn build_common_connection(
    ctx: &BuildContext,
    graph: &Graph,
    id: impl Into<String>,
    pair: (NodeId, NodeId),
    p1: u8,
    p2: u8,
    encoding: Encoding,
) -> Result<TaskInstance, TaskError> {
    if p1 > 2 || !(3..=5).contains(&p2) {
        return Err(TaskError::InvalidParameter(format!(
            "grid positions must satisfy p1 in 0..=2 and p2 in 3..=5, got ({p1}, {p2})"
        )));
    }
    let (a, b) = pair;
    let common = graph.common_connections(a, b)?;
    if common.is_empty() {
        return Err(TaskError::Rejected(format!("nodes {a} and {b} share no connections")));
    }
    let first = graph.subgraph_of(a)?;
    let first = first.reordered(group_common(first.edges(), &common, Placement::from_grid(p1)))?;
    let second = graph.subgraph_of(b)?;
    let second = second.reordered(group_common(second.edges(), &common, Placement::from_grid(p2)))?;

    let layout = Layout::render(
        &[first, second],
        encoding,
        &prompt::common_connection_question(a, b),
        prompt::INTEGER_INSTRUCTIONS,
    )?;
    let map = ctx.tokenizer.tokenize(&layout.prompt.full_text());
    let pos1 = map.normalized_midpoint(group_span(&layout, 0, &common));
    let pos2 = map.normalized_midpoint(group_span(&layout, 1, &common));
    let median = map.median_common_distance(&layout.occurrences(0, 1, &common))?;

    Ok(TaskInstance {
        id: id.into(),
        task: TaskKind::CommonConnection,
        encoding,
        cell: CellKey::Grid { p1, p2 },
        ground_truth: Answer::Count(common.len() as u32),
        measurements: Measurements {
            prompt_tokens: map.token_count(),
            positions: vec![pos1, pos2],
            median_distances: vec![median],
            normalized_distances: vec![(pos2 - pos1).abs()],
        },
        prompt: layout.prompt,
        provenance: provenance(ctx, graph, vec![a, b]),
    })
}

/// Similarity prompt with blocks `[target1, source, target2]`, each block's
/// edges shuffled by a stream derived from `shuffle_seed`.
#[allow(clippy::too_many_arguments)]
pub fn build_similarity(
    ctx: &BuildContext,
    graph: &Graph,
    id: impl Into<String>,
    target1: NodeId,
    source: NodeId,
    target2: NodeId,
    encoding: Encoding,
    template: QuestionTemplate,
    shuffle_seed: u64,
) -> Result<TaskInstance, TaskError> {
    check_distinct(&[target1, source, target2])?;
    let first_common = graph.common_connections(target1, source)?;
    let second_common = graph.common_connections(source, target2)?;
    if first_common.is_empty() || second_common.is_empty() {
        return Err(TaskError::Rejected(format!(
            "empty common set ({} and {} common connections)",
            first_common.len(),
            second_common.len()
        )));
    }
    let truth = template.compare(first_common.len(), second_common.len());

    let subgraphs = [target1, source, target2]
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let sub = graph.subgraph_of(v)?;
            let mut order = sub.edges().to_vec();
            order.shuffle(&mut prng::derived_rng(shuffle_seed, &["block", &i.to_string()]));
            sub.reordered(order)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let layout = Layout::render(
        &subgraphs,
        encoding,
        &prompt::similarity_question(template, target1, source, target2),
        &prompt::similarity_instructions(target1, source, target2),
    )?;
    let map = ctx.tokenizer.tokenize(&layout.prompt.full_text());
    let d1 = map.median_common_distance(&layout.occurrences(0, 1, &first_common))?;
    let d2 = map.median_common_distance(&layout.occurrences(1, 2, &second_common))?;
    let thresholds = ctx.thresholds.for_encoding(encoding);
    let total = map.token_count().max(1) as f64;

    let mut prov = provenance(ctx, graph, vec![target1, source, target2]);
    prov.template = Some(template);
    prov.shuffle_seed = Some(shuffle_seed);
    Ok(TaskInstance {
        id: id.into(),
        task: TaskKind::Similarity,
        encoding,
        cell: CellKey::Buckets {
            first: thresholds.bucketize(d1),
            second: thresholds.bucketize(d2),
        },
        ground_truth: Answer::YesNo(truth),
        measurements: Measurements {
            prompt_tokens: map.token_count(),
            positions: layout.blocks.iter().map(|b| map.normalized_midpoint(b.clone())).collect(),
            median_distances: vec![d1, d2],
            normalized_distances: vec![d1 as f64 / total, d2 as f64 / total],
        },
        prompt: layout.prompt,
        provenance: prov,
    })
}

impl TaskInstance {
    /// Regenerates the instance from its provenance fields alone.
    pub fn rebuild(&self, ctx: &BuildContext) -> Result<TaskInstance, TaskError> {
        let graph = self.provenance.graph.generate()?;
        self.rebuild_on(ctx, &graph)
    }

    /// Like [`TaskInstance::rebuild`] with the graph already generated.
    pub fn rebuild_on(&self, ctx: &BuildContext, graph: &Graph) -> Result<TaskInstance, TaskError> {
        let nodes = &self.provenance.nodes;
        let missing = |what: &str| TaskError::InvalidParameter(format!("instance {} lacks {what}", self.id));
        match (self.task, self.cell) {
            (TaskKind::EdgeExistence, CellKey::Placement { placement }) if nodes.len() == 2 => build_edge_existence(
                ctx,
                graph,
                self.id.clone(),
                (nodes[0], nodes[1]),
                &self.provenance.noise,
                placement,
                self.encoding,
            ),
            (TaskKind::CommonConnection, CellKey::Grid { p1, p2 }) if nodes.len() == 2 => {
                build_common_connection(ctx, graph, self.id.clone(), (nodes[0], nodes[1]), p1, p2, self.encoding)
            }
            (TaskKind::Similarity, CellKey::Buckets { .. }) if nodes.len() == 3 => build_similarity(
                ctx,
                graph,
                self.id.clone(),
                nodes[0],
                nodes[1],
                nodes[2],
                self.encoding,
                self.provenance.template.ok_or_else(|| missing("a question template"))?,
                self.provenance.shuffle_seed.ok_or_else(|| missing("a shuffle seed"))?,
            ),
            _ => Err(missing("a consistent task/cell/node combination")),
        }
    }

    /// Token map of the full prompt.
    pub fn token_map(&self, tokenizer: &Tokenizer) -> TokenMap {
        tokenizer.tokenize(&self.prompt.full_text())
    }
}

#[cfg(test)]
mod tests;
