//! Textual graph encodings.
//!
//! Golden formats (version [`ENCODING_FORMAT_VERSION`]):
//!
//! | encoding  | text for center 0, edges [1, 2]        | empty neighborhood                |
//! |-----------|----------------------------------------|-----------------------------------|
//! | incident  | `Node 0 is connected to nodes 1, 2.`   | `Node 0 is connected to no nodes.`|
//! | adjacency | `(0, 1) (0, 2)`                        | empty string                      |
//! | expert    | `0 -> 1 0 -> 2`                        | empty string                      |
//!
//! Edge spans are byte ranges into the text. For incident the span is the
//! neighbor id; for adjacency and expert it is the whole rendered pair.

use std::fmt;
use std::fmt::Write as _;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::graph::{NodeId, Subgraph};

pub const ENCODING_FORMAT_VERSION: &str = "encoding-v1";

/// Separator between subgraph blocks of one graph section.
pub const BLOCK_SEPARATOR: &str = "\n";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EncodingError {
    #[error("unknown encoding `{0}` (expected incident, adjacency or expert)")]
    UnknownEncoding(String),
    #[error("cannot assemble blocks with mixed encodings ({0} and {1})")]
    MixedEncodings(Encoding, Encoding),
    #[error("malformed {encoding} text: {reason}")]
    Malformed { encoding: Encoding, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    Incident,
    Adjacency,
    Expert,
}

impl Encoding {
    pub const ALL: [Encoding; 3] = [Self::Incident, Self::Adjacency, Self::Expert];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Incident => "incident",
            Self::Adjacency => "adjacency",
            Self::Expert => "expert",
        }
    }

    /// One-sentence description placed before the graph section.
    pub fn description(self) -> &'static str {
        match self {
            Self::Incident => {
                "The following undirected graph is described by listing, for each node, the nodes it is connected to."
            }
            Self::Adjacency => {
                "In the following undirected graph, each pair (u, v) denotes an edge between node u and node v."
            }
            Self::Expert => {
                "In the following undirected graph, each u -> v denotes an edge between node u and node v."
            }
        }
    }
}

impl fmt::Display for Encoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Encoding {
    type Err = EncodingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| EncodingError::UnknownEncoding(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSpan {
    pub neighbor: NodeId,
    pub start: usize,
    pub end: usize,
}

impl EdgeSpan {
    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }

    pub fn shifted(&self, offset: usize) -> Self {
        Self {
            neighbor: self.neighbor,
            start: self.start + offset,
            end: self.end + offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedSubgraph {
    pub center: NodeId,
    pub encoding: Encoding,
    pub text: String,
    pub edge_spans: Vec<EdgeSpan>,
}

impl EncodedSubgraph {
    pub fn span_of(&self, neighbor: NodeId) -> Option<&EdgeSpan> {
        self.edge_spans.iter().find(|s| s.neighbor == neighbor)
    }
}

/// Renders `subgraph` in the golden format of `encoding`, following the
/// subgraph's edge order exactly.
pub fn encode(subgraph: &Subgraph, encoding: Encoding) -> EncodedSubgraph {
    let center = subgraph.center();
    let mut text = String::new();
    let mut edge_spans = Vec::with_capacity(subgraph.len());
    match encoding {
        Encoding::Incident => {
            if subgraph.is_empty() {
                let _ = write!(text, "Node {center} is connected to no nodes.");
            } else {
                let _ = write!(text, "Node {center} is connected to nodes ");
                for (i, &neighbor) in subgraph.edges().iter().enumerate() {
                    if i > 0 {
                        text.push_str(", ");
                    }
                    let start = text.len();
                    let _ = write!(text, "{neighbor}");
                    edge_spans.push(EdgeSpan {
                        neighbor,
                        start,
                        end: text.len(),
                    });
                }
                text.push('.');
            }
        }
        Encoding::Adjacency | Encoding::Expert => {
            for (i, &neighbor) in subgraph.edges().iter().enumerate() {
                if i > 0 {
                    text.push(' ');
                }
                let start = text.len();
                if encoding == Encoding::Adjacency {
                    let _ = write!(text, "({center}, {neighbor})");
                } else {
                    let _ = write!(text, "{center} -> {neighbor}");
                }
                edge_spans.push(EdgeSpan {
                    neighbor,
                    start,
                    end: text.len(),
                });
            }
        }
    }
    EncodedSubgraph {
        center,
        encoding,
        text,
        edge_spans,
    }
}

/// Graph-structure section of a prompt: blocks joined by
/// [`BLOCK_SEPARATOR`], plus the byte offset at which each block starts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphSection {
    pub text: String,
    pub offsets: Vec<usize>,
}

pub fn assemble_graph_section(parts: &[EncodedSubgraph]) -> Result<GraphSection, EncodingError> {
    if let Some(first) = parts.first() {
        if let Some(other) = parts.iter().find(|p| p.encoding != first.encoding) {
            return Err(EncodingError::MixedEncodings(first.encoding, other.encoding));
        }
    }
    let mut text = String::new();
    let mut offsets = Vec::with_capacity(parts.len());
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            text.push_str(BLOCK_SEPARATOR);
        }
        offsets.push(text.len());
        text.push_str(&part.text);
    }
    Ok(GraphSection { text, offsets })
}

/// Recovers `(center, edges)` from one rendered block. The inverse of
/// [`encode`] for well-formed input; empty adjacency/expert text yields no
/// center.
pub fn parse_block(text: &str, encoding: Encoding) -> Result<(Option<NodeId>, Vec<NodeId>), EncodingError> {
    let malformed = |reason: &str| EncodingError::Malformed {
        encoding,
        reason: reason.to_string(),
    };
    let number = |s: &str| s.parse::<NodeId>().map_err(|_| malformed(&format!("bad node id `{s}`")));
    match encoding {
        Encoding::Incident => {
            let rest = text.strip_prefix("Node ").ok_or_else(|| malformed("missing `Node ` prefix"))?;
            let (center, rest) = rest
                .split_once(" is connected to ")
                .ok_or_else(|| malformed("missing `is connected to`"))?;
            let center = number(center)?;
            if rest == "no nodes." {
                return Ok((Some(center), Vec::new()));
            }
            let list = rest
                .strip_prefix("nodes ")
                .and_then(|r| r.strip_suffix('.'))
                .ok_or_else(|| malformed("expected `nodes ... .`"))?;
            let edges = list.split(", ").map(number).collect::<Result<Vec<_>, _>>()?;
            Ok((Some(center), edges))
        }
        Encoding::Adjacency => {
            if text.is_empty() {
                return Ok((None, Vec::new()));
            }
            let mut center = None;
            let mut edges = Vec::new();
            for pair in text.split(") (") {
                let inner = pair.trim_start_matches('(').trim_end_matches(')');
                let (c, n) = inner.split_once(", ").ok_or_else(|| malformed("expected `(u, v)`"))?;
                let c = number(c)?;
                if *center.get_or_insert(c) != c {
                    return Err(malformed("pairs disagree on the center node"));
                }
                edges.push(number(n)?);
            }
            Ok((center, edges))
        }
        Encoding::Expert => {
            if text.is_empty() {
                return Ok((None, Vec::new()));
            }
            let tokens: Vec<&str> = text.split(' ').collect();
            if tokens.len() % 3 != 0 {
                return Err(malformed("expected `u -> v` triples"));
            }
            let mut center = None;
            let mut edges = Vec::new();
            for triple in tokens.chunks(3) {
                if triple[1] != "->" {
                    return Err(malformed("expected `->`"));
                }
                let c = number(triple[0])?;
                if *center.get_or_insert(c) != c {
                    return Err(malformed("arrows disagree on the center node"));
                }
                edges.push(number(triple[2])?);
            }
            Ok((center, edges))
        }
    }
}
