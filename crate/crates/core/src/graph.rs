//! Seeded Erdős–Rényi graphs, node subgraphs, and ground-truth oracles for
//! the three graph tasks.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::prng;

pub type NodeId = u32;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("invalid graph parameter: {0}")]
    InvalidParameter(String),
    #[error("node {node} out of range for graph with {node_count} nodes")]
    NodeOutOfRange { node: NodeId, node_count: usize },
    #[error("nodes must be distinct, got {0:?}")]
    DuplicateNodes(Vec<NodeId>),
    #[error("node {neighbor} is not adjacent to center {center}")]
    NotANeighbor { center: NodeId, neighbor: NodeId },
}

/// Parameters that fully determine a generated graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphParams {
    pub node_count: usize,
    pub density: f64,
    pub seed: u64,
}

impl GraphParams {
    pub fn generate(&self) -> Result<Graph, GraphError> {
        Graph::generate_er(self.node_count, self.density, self.seed)
    }
}

/// Undirected simple graph stored as sorted adjacency lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    params: GraphParams,
    adjacency: Vec<Vec<NodeId>>,
}

impl Graph {
    /// Samples G(n, p). Pairs are visited in ascending `(i, j)`, `i < j`
    /// order and each consumes exactly one uniform draw from the seeded
    /// stream, so the seed alone fixes the edge set.
    pub fn generate_er(node_count: usize, density: f64, seed: u64) -> Result<Self, GraphError> {
        if node_count < 2 {
            return Err(GraphError::InvalidParameter(format!(
                "node_count must be at least 2, got {node_count}"
            )));
        }
        if node_count > NodeId::MAX as usize {
            return Err(GraphError::InvalidParameter(format!(
                "node_count {node_count} exceeds the node id range"
            )));
        }
        if !(0.0..=1.0).contains(&density) {
            return Err(GraphError::InvalidParameter(format!(
                "density must lie in [0, 1], got {density}"
            )));
        }
        let mut rng = prng::rng_from(seed);
        let mut adjacency = vec![Vec::new(); node_count];
        for i in 0..node_count {
            for j in (i + 1)..node_count {
                let draw: f64 = rng.random();
                if draw < density {
                    adjacency[i].push(j as NodeId);
                    adjacency[j].push(i as NodeId);
                }
            }
        }
        // Pushes happen in ascending order for both endpoints, so every
        // list is already sorted.
        Ok(Self {
            params: GraphParams {
                node_count,
                density,
                seed,
            },
            adjacency,
        })
    }

    /// Builds a graph from an explicit edge list. Used for fixtures and
    /// exhaustive checks; `density` records the realized edge fraction.
    pub fn from_edges(
        node_count: usize,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<Self, GraphError> {
        if node_count < 2 {
            return Err(GraphError::InvalidParameter(format!(
                "node_count must be at least 2, got {node_count}"
            )));
        }
        let mut sets = vec![BTreeSet::new(); node_count];
        for (a, b) in edges {
            for node in [a, b] {
                if node as usize >= node_count {
                    return Err(GraphError::NodeOutOfRange { node, node_count });
                }
            }
            if a == b {
                return Err(GraphError::InvalidParameter(format!("self-loop on node {a}")));
            }
            sets[a as usize].insert(b);
            sets[b as usize].insert(a);
        }
        let adjacency: Vec<Vec<NodeId>> = sets.into_iter().map(|s| s.into_iter().collect()).collect();
        let edge_count: usize = adjacency.iter().map(Vec::len).sum::<usize>() / 2;
        let pairs = node_count * (node_count - 1) / 2;
        Ok(Self {
            params: GraphParams {
                node_count,
                density: edge_count as f64 / pairs as f64,
                seed: 0,
            },
            adjacency,
        })
    }

    pub fn params(&self) -> GraphParams {
        self.params
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn degree(&self, node: NodeId) -> Result<usize, GraphError> {
        self.check(node)?;
        Ok(self.adjacency[node as usize].len())
    }

    /// Sorted neighbor list of `node`.
    pub fn neighbors(&self, node: NodeId) -> Result<&[NodeId], GraphError> {
        self.check(node)?;
        Ok(&self.adjacency[node as usize])
    }

    pub fn subgraph_of(&self, center: NodeId) -> Result<Subgraph, GraphError> {
        Ok(Subgraph {
            center,
            edges: self.neighbors(center)?.to_vec(),
        })
    }

    pub fn edge_exists(&self, a: NodeId, b: NodeId) -> Result<bool, GraphError> {
        self.check_distinct(&[a, b])?;
        Ok(self.adjacency[a as usize].binary_search(&b).is_ok())
    }

    /// `N(a) ∩ N(b)` in ascending order.
    pub fn common_connections(&self, a: NodeId, b: NodeId) -> Result<Vec<NodeId>, GraphError> {
        self.check_distinct(&[a, b])?;
        let (left, right) = (&self.adjacency[a as usize], &self.adjacency[b as usize]);
        let (mut i, mut j) = (0, 0);
        let mut shared = Vec::new();
        while i < left.len() && j < right.len() {
            match left[i].cmp(&right[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    shared.push(left[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        Ok(shared)
    }

    /// Ground truth for the similarity question with `source` in the center.
    pub fn similarity_truth(
        &self,
        target1: NodeId,
        source: NodeId,
        target2: NodeId,
        template: QuestionTemplate,
    ) -> Result<bool, GraphError> {
        self.check_distinct(&[target1, source, target2])?;
        let first = self.common_connections(target1, source)?.len();
        let second = self.common_connections(source, target2)?.len();
        Ok(template.compare(first, second))
    }

    fn check(&self, node: NodeId) -> Result<(), GraphError> {
        if (node as usize) < self.adjacency.len() {
            Ok(())
        } else {
            Err(GraphError::NodeOutOfRange {
                node,
                node_count: self.adjacency.len(),
            })
        }
    }

    fn check_distinct(&self, nodes: &[NodeId]) -> Result<(), GraphError> {
        for &node in nodes {
            self.check(node)?;
        }
        for (i, a) in nodes.iter().enumerate() {
            if nodes[i + 1..].contains(a) {
                return Err(GraphError::DuplicateNodes(nodes.to_vec()));
            }
        }
        Ok(())
    }
}

/// A center node and an ordered list of its neighbors. The order is the
/// textual layout order once encoded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subgraph {
    center: NodeId,
    edges: Vec<NodeId>,
}

impl Subgraph {
    pub fn center(&self) -> NodeId {
        self.center
    }

    pub fn edges(&self) -> &[NodeId] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Same neighbor set, new layout order. `order` must be a permutation of
    /// the current edges.
    pub fn reordered(&self, order: Vec<NodeId>) -> Result<Self, GraphError> {
        let mut current = self.edges.clone();
        let mut proposed = order.clone();
        current.sort_unstable();
        proposed.sort_unstable();
        if proposed.windows(2).any(|w| w[0] == w[1]) {
            return Err(GraphError::DuplicateNodes(order));
        }
        if current != proposed {
            let stray = proposed
                .iter()
                .find(|n| current.binary_search(n).is_err())
                .copied()
                .unwrap_or(self.center);
            return Err(GraphError::NotANeighbor {
                center: self.center,
                neighbor: stray,
            });
        }
        Ok(Self {
            center: self.center,
            edges: order,
        })
    }

    /// Builds a subgraph directly; used by tests and parsers.
    pub fn from_parts(center: NodeId, edges: Vec<NodeId>) -> Self {
        Self { center, edges }
    }
}

/// The two similarity question phrasings. With `v_i` the first target,
/// `v_j` the source and `v_k` the second target:
/// `GreaterJkOverIj` asks whether |N(v_j)∩N(v_k)| > |N(v_i)∩N(v_j)|,
/// `GreaterIjOverJk` asks the reverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionTemplate {
    GreaterJkOverIj,
    GreaterIjOverJk,
}

impl QuestionTemplate {
    pub const ALL: [QuestionTemplate; 2] = [Self::GreaterJkOverIj, Self::GreaterIjOverJk];

    /// Strict comparison of `first = |N(t1)∩N(s)|` and `second = |N(s)∩N(t2)|`.
    pub fn compare(self, first: usize, second: usize) -> bool {
        match self {
            Self::GreaterJkOverIj => second > first,
            Self::GreaterIjOverJk => first > second,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Self::GreaterJkOverIj => Self::GreaterIjOverJk,
            Self::GreaterIjOverJk => Self::GreaterJkOverIj,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::GreaterJkOverIj => "greater_jk_over_ij",
            Self::GreaterIjOverJk => "greater_ij_over_jk",
        }
    }
}

impl fmt::Display for QuestionTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QuestionTemplate {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| GraphError::InvalidParameter(format!("unknown question template `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fixture() -> Graph {
        Graph::from_edges(4, [(0, 1), (0, 2), (1, 2), (2, 3)]).unwrap()
    }

    fn complete(n: usize) -> Graph {
        Graph::generate_er(n, 1.0, 3).unwrap()
    }

    #[test]
    fn density_extremes() {
        assert_eq!(Graph::generate_er(4, 1.0, 99).unwrap().edge_count(), 6);
        assert_eq!(Graph::generate_er(4, 0.0, 99).unwrap().edge_count(), 0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Graph::generate_er(1, 0.5, 0).is_err());
        assert!(Graph::generate_er(10, 1.5, 0).is_err());
        assert!(Graph::generate_er(10, -0.1, 0).is_err());
        assert!(Graph::generate_er(10, f64::NAN, 0).is_err());
    }

    #[test]
    fn mean_degree_matches_binomial_expectation() {
        let g = Graph::generate_er(1000, 0.1, 7).unwrap();
        let mean = 2.0 * g.edge_count() as f64 / 1000.0;
        // Edge count is Binomial(C(n,2), p); its mean degree has sd
        // 2*sqrt(C(n,2) p (1-p)) / n.
        let pairs = 1000.0 * 999.0 / 2.0;
        let sd = 2.0 * (pairs * 0.1 * 0.9f64).sqrt() / 1000.0;
        assert!((mean - 99.9).abs() < 3.0 * sd, "mean degree {mean}");
    }

    #[test]
    fn subgraph_lists_neighbors_ascending() {
        let g = fixture();
        assert_eq!(g.subgraph_of(2).unwrap().edges(), &[0, 1, 3]);
        let lonely = Graph::from_edges(3, [(0, 1)]).unwrap();
        assert!(lonely.subgraph_of(2).unwrap().is_empty());
        assert_eq!(complete(4).subgraph_of(0).unwrap().edges(), &[1, 2, 3]);
        assert!(g.subgraph_of(4).is_err());
    }

    #[test]
    fn edge_lookup() {
        let g = fixture();
        assert!(g.edge_exists(0, 1).unwrap());
        assert!(!g.edge_exists(0, 3).unwrap());
        assert!(g.edge_exists(1, 1).is_err());
        let k = complete(6);
        for a in 0..6 {
            for b in 0..6 {
                if a != b {
                    assert!(k.edge_exists(a, b).unwrap());
                }
            }
        }
    }

    #[test]
    fn common_connection_examples() {
        assert_eq!(fixture().common_connections(0, 1).unwrap(), vec![2]);
        let disjoint = Graph::from_edges(4, [(0, 1), (2, 3)]).unwrap();
        assert!(disjoint.common_connections(0, 2).unwrap().is_empty());
        assert_eq!(complete(5).common_connections(0, 1).unwrap(), vec![2, 3, 4]);
        assert!(fixture().common_connections(2, 2).is_err());
    }

    /// Star-like graph where |N(0)∩N(1)| = 6 and |N(1)∩N(2)| = 4.
    fn six_vs_four() -> Graph {
        let mut edges = Vec::new();
        for v in 3..9 {
            edges.push((0, v));
            edges.push((1, v));
        }
        for v in 9..13 {
            edges.push((1, v));
            edges.push((2, v));
        }
        Graph::from_edges(13, edges).unwrap()
    }

    #[test]
    fn similarity_examples() {
        let g = six_vs_four();
        assert!(g.similarity_truth(0, 1, 2, QuestionTemplate::GreaterIjOverJk).unwrap());
        assert!(!g.similarity_truth(0, 1, 2, QuestionTemplate::GreaterJkOverIj).unwrap());
        // 4 vs 6 after swapping the targets
        assert!(g.similarity_truth(2, 1, 0, QuestionTemplate::GreaterJkOverIj).unwrap());
        let k = complete(5);
        for t in QuestionTemplate::ALL {
            assert!(!k.similarity_truth(0, 1, 2, t).unwrap(), "ties answer no");
        }
        assert!(g.similarity_truth(0, 0, 2, QuestionTemplate::GreaterIjOverJk).is_err());
    }

    #[test]
    fn reorder_requires_permutation() {
        let sub = fixture().subgraph_of(2).unwrap();
        assert_eq!(sub.reordered(vec![3, 0, 1]).unwrap().edges(), &[3, 0, 1]);
        assert!(sub.reordered(vec![3, 0]).is_err());
        assert!(sub.reordered(vec![3, 0, 0]).is_err());
        assert!(sub.reordered(vec![3, 0, 2]).is_err());
    }

    #[test]
    fn template_round_trips_through_str() {
        for t in QuestionTemplate::ALL {
            assert_eq!(t.as_str().parse::<QuestionTemplate>().unwrap(), t);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(120))]

        #[test]
        fn generated_graphs_are_simple_and_symmetric(
            n in 2usize..60, density in 0.0f64..=1.0, seed in any::<u64>()
        ) {
            let g = Graph::generate_er(n, density, seed).unwrap();
            for v in 0..n as NodeId {
                let nbrs = g.neighbors(v).unwrap();
                prop_assert!(!nbrs.contains(&v));
                prop_assert!(nbrs.windows(2).all(|w| w[0] < w[1]));
                for &u in nbrs {
                    prop_assert!(g.neighbors(u).unwrap().contains(&v));
                }
            }
            prop_assert_eq!(g, Graph::generate_er(n, density, seed).unwrap());
        }

        #[test]
        fn common_connections_symmetric(n in 3usize..30, seed in any::<u64>()) {
            let g = Graph::generate_er(n, 0.4, seed).unwrap();
            prop_assert_eq!(g.common_connections(0, 1).unwrap(), g.common_connections(1, 0).unwrap());
        }

        #[test]
        fn template_duality(n in 3usize..30, seed in any::<u64>()) {
            let g = Graph::generate_er(n, 0.5, seed).unwrap();
            let a = g.similarity_truth(0, 1, 2, QuestionTemplate::GreaterJkOverIj).unwrap();
            let b = g.similarity_truth(2, 1, 0, QuestionTemplate::GreaterIjOverJk).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
