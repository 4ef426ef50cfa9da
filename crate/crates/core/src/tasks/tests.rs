use super::*;
use crate::encoding::parse_block;
use proptest::prelude::*;
use std::collections::BTreeMap;
use std::sync::OnceLock;

fn ctx() -> &'static BuildContext {
    static CTX: OnceLock<BuildContext> = OnceLock::new();
    CTX.get_or_init(|| BuildContext::new(Tokenizer::load("cl100k_base").unwrap()))
}

fn graph_section_lines(instance: &TaskInstance) -> Vec<String> {
    let user = &instance.prompt.user;
    let body = user.split_once('\n').unwrap().1;
    let section = body.split("\n\nQuestion: ").next().unwrap();
    section.lines().map(str::to_string).collect()
}

fn block_centers(instance: &TaskInstance) -> Vec<NodeId> {
    graph_section_lines(instance)
        .iter()
        .map(|line| parse_block(line, instance.encoding).unwrap())
        .collect::<Vec<_>>()
        .into_iter()
        .zip(graph_section_lines(instance))
        .map(|((center, _), line)| center.or_else(|| line_center(&line)).expect("non-empty block"))
        .collect()
}

// Adjacency and expert blocks carry the center as the first element of every pair.
fn line_center(line: &str) -> Option<NodeId> {
    line.trim_start_matches('(')
        .split(|c: char| !c.is_ascii_digit())
        .next()
        .and_then(|d| d.parse().ok())
}

fn dense_graph() -> Graph {
    Graph::generate_er(40, 0.3, 11).unwrap()
}

#[test]
fn edge_existence_block_positions() {
    let g = dense_graph();
    let noise: Vec<NodeId> = (10..19).collect();
    for enc in Encoding::ALL {
        for (placement, expected) in [(Placement::Beginning, 0), (Placement::Middle, 4), (Placement::End, 9)] {
            let inst = build_edge_existence(ctx(), &g, "x", (1, 2), &noise, placement, enc).unwrap();
            let centers = block_centers(&inst);
            assert_eq!(centers.len(), 11);
            assert_eq!(&centers[expected..expected + 2], &[1, 2], "{placement} {enc}");
            let rest: Vec<NodeId> = centers.iter().copied().filter(|v| *v != 1 && *v != 2).collect();
            assert_eq!(rest, noise);
        }
    }
}

#[test]
fn edge_existence_positions_are_ordered() {
    let g = dense_graph();
    let noise: Vec<NodeId> = (10..19).collect();
    let pos: Vec<f64> = Placement::ALL
        .iter()
        .map(|&p| {
            build_edge_existence(ctx(), &g, "x", (3, 4), &noise, p, Encoding::Incident)
                .unwrap()
                .measurements
                .positions[0]
        })
        .collect();
    assert!(pos[0] < pos[1] && pos[1] < pos[2], "{pos:?}");
    assert!(pos.iter().all(|p| (0.0..=1.0).contains(p)));
}

#[test]
fn edge_existence_rejects_overlapping_noise() {
    let g = dense_graph();
    let err = build_edge_existence(ctx(), &g, "x", (1, 2), &[2, 5], Placement::End, Encoding::Expert);
    assert!(matches!(err, Err(TaskError::Graph(GraphError::DuplicateNodes(_)))));
}

#[test]
fn noise_sampling_needs_enough_nodes() {
    let g = Graph::generate_er(10, 0.5, 1).unwrap();
    let mut rng = prng::rng_from(0);
    assert!(matches!(sample_noise(&g, &[0, 1], 9, &mut rng), Err(TaskError::InvalidParameter(_))));
    let noise = sample_noise(&g, &[0, 1], 8, &mut rng).unwrap();
    let mut sorted = noise.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, (2..10).collect::<Vec<_>>());
}

/// Two centers with equal-size neighbor lists that share exactly `common`.
fn paired_graph() -> Graph {
    let mut edges = Vec::new();
    for c in [20, 21, 22] {
        edges.push((10, c));
        edges.push((11, c));
    }
    for v in 30..37 {
        edges.push((10, v));
    }
    for v in 40..47 {
        edges.push((11, v));
    }
    Graph::from_edges(50, edges).unwrap()
}

#[test]
fn common_connection_distance_strictly_monotone_in_grid_gap() {
    let g = paired_graph();
    for enc in Encoding::ALL {
        let mut by_gap: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
        for p1 in 0..3 {
            for p2 in 3..6 {
                let inst = build_common_connection(ctx(), &g, "x", (10, 11), p1, p2, enc).unwrap();
                assert_eq!(inst.ground_truth, Answer::Count(3));
                by_gap.entry(p2 - p1).or_default().push(inst.measurements.median_distances[0]);
            }
        }
        let ranges: Vec<(usize, usize)> = by_gap
            .values()
            .map(|d| (*d.iter().min().unwrap(), *d.iter().max().unwrap()))
            .collect();
        for w in ranges.windows(2) {
            assert!(w[0].1 < w[1].0, "{enc}: {ranges:?}");
        }
    }
}

#[test]
fn common_block_is_contiguous_and_ascending() {
    let order = group_common(&[1, 2, 3, 4, 5, 6, 7], &[2, 6], Placement::Middle);
    assert_eq!(order, vec![1, 3, 2, 6, 4, 5, 7]);
    assert_eq!(group_common(&[1, 2, 3], &[2], Placement::Beginning), vec![2, 1, 3]);
    assert_eq!(group_common(&[1, 2, 3], &[2], Placement::End), vec![1, 3, 2]);
}

#[test]
fn all_common_edges_give_identical_text() {
    let g = Graph::from_edges(6, [(0, 2), (0, 3), (1, 2), (1, 3)]).unwrap();
    let texts: Vec<String> = (0..3)
        .map(|p1| build_common_connection(ctx(), &g, "x", (0, 1), p1, 3 + p1, Encoding::Adjacency).unwrap())
        .map(|i| i.prompt.user)
        .collect();
    assert!(texts.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn common_connection_rejects_disjoint_pairs_and_bad_grid() {
    let g = Graph::from_edges(6, [(0, 2), (1, 3)]).unwrap();
    assert!(matches!(
        build_common_connection(ctx(), &g, "x", (0, 1), 0, 3, Encoding::Incident),
        Err(TaskError::Rejected(_))
    ));
    let g = paired_graph();
    assert!(matches!(
        build_common_connection(ctx(), &g, "x", (10, 11), 3, 3, Encoding::Incident),
        Err(TaskError::InvalidParameter(_))
    ));
}

#[test]
fn grid_extremes_order_distances() {
    let g = paired_graph();
    let d = |p1, p2| {
        build_common_connection(ctx(), &g, "x", (10, 11), p1, p2, Encoding::Incident)
            .unwrap()
            .measurements
            .median_distances[0]
    };
    assert!(d(2, 3) < d(0, 5));
}

#[test]
fn similarity_layout_and_question() {
    let g = dense_graph();
    let (t1, s, t2) = find_triple(&g);
    let inst = build_similarity(ctx(), &g, "x", t1, s, t2, Encoding::Expert, QuestionTemplate::GreaterJkOverIj, 5).unwrap();
    assert_eq!(block_centers(&inst), vec![t1, s, t2]);
    assert!(inst.prompt.user.contains(&format!(
        "Question: Is the number of common connections between node {s} and node {t2} greater than"
    )));
    assert!(inst.prompt.user.ends_with("\"Final answer: yes\" or \"Final answer: no\"."));
    assert_eq!(
        inst.ground_truth,
        Answer::YesNo(g.similarity_truth(t1, s, t2, QuestionTemplate::GreaterJkOverIj).unwrap())
    );
}

fn find_triple(g: &Graph) -> (NodeId, NodeId, NodeId) {
    let n = g.node_count() as NodeId;
    for s in 0..n {
        for t1 in 0..n {
            for t2 in 0..n {
                if t1 != s && t2 != s && t1 != t2 {
                    let a = g.common_connections(t1, s).unwrap().len();
                    let b = g.common_connections(s, t2).unwrap().len();
                    if a > 0 && b > 0 && a != b {
                        return (t1, s, t2);
                    }
                }
            }
        }
    }
    panic!("no triple with distinct non-empty common sets");
}

#[test]
fn similarity_shuffle_is_seeded() {
    let g = dense_graph();
    let (t1, s, t2) = find_triple(&g);
    let build = |seed| {
        build_similarity(ctx(), &g, "x", t1, s, t2, Encoding::Incident, QuestionTemplate::GreaterIjOverJk, seed)
            .unwrap()
            .prompt
    };
    assert_eq!(build(1), build(1));
    assert_ne!(build(1), build(2));
}

#[test]
fn similarity_rejects_empty_common_sets() {
    let g = Graph::from_edges(6, [(0, 1), (1, 2), (2, 3)]).unwrap();
    assert!(matches!(
        build_similarity(ctx(), &g, "x", 0, 2, 4, Encoding::Incident, QuestionTemplate::GreaterJkOverIj, 0),
        Err(TaskError::Rejected(_))
    ));
}

/// Recomputes both median distances from the prompt text alone: locate each
/// block line, re-encode it to find edge spans, and measure tokens.
fn distances_from_prompt(inst: &TaskInstance) -> (usize, usize) {
    let full = inst.prompt.full_text();
    let map = ctx().tokenizer.tokenize(&full);
    let lines = graph_section_lines(inst);
    let mut blocks = Vec::new();
    for line in &lines {
        let offset = full.find(line.as_str()).unwrap();
        let (center, neighbors) = parse_block(line, inst.encoding).unwrap();
        let center = center.or(line_center(line)).unwrap();
        let encoded = encode(&Subgraph::from_parts(center, neighbors.clone()), inst.encoding);
        assert_eq!(&encoded.text, line);
        blocks.push((offset, neighbors, encoded));
    }
    let median = |x: usize, y: usize| {
        let (ox, nx, ex) = &blocks[x];
        let (oy, ny, ey) = &blocks[y];
        let pairs: Vec<_> = nx
            .iter()
            .filter(|v| ny.contains(v))
            .map(|v| (ex.span_of(*v).unwrap().shifted(*ox).range(), ey.span_of(*v).unwrap().shifted(*oy).range()))
            .collect();
        map.median_common_distance(&pairs).unwrap()
    };
    (median(0, 1), median(1, 2))
}

#[test]
fn similarity_corpus_smoke_quota_two() {
    let config = SimilarityConfig {
        graphs: GraphSource {
            node_count: 1000,
            density: 0.1,
            seed: 3,
            samples_per_graph: 100,
            min_degree: None,
        },
        quota: 2,
        max_attempts: 200_000,
    };
    let corpus = sample_similarity_corpus(ctx(), &config, Encoding::Incident).unwrap();
    assert_eq!(corpus.len(), 18);
    let mut per_cell: BTreeMap<CellKey, (usize, usize)> = BTreeMap::new();
    for inst in &corpus {
        let e = per_cell.entry(inst.cell).or_default();
        match inst.ground_truth {
            Answer::YesNo(true) => e.0 += 1,
            Answer::YesNo(false) => e.1 += 1,
            other => panic!("unexpected truth {other}"),
        }
        let (d1, d2) = distances_from_prompt(inst);
        assert_eq!(inst.measurements.median_distances, vec![d1, d2]);
        let t = ctx().thresholds.for_encoding(inst.encoding);
        assert_eq!(inst.cell, CellKey::Buckets { first: t.bucketize(d1), second: t.bucketize(d2) });
        assert_eq!(&inst.rebuild(ctx()).unwrap(), inst);
    }
    assert_eq!(per_cell.len(), 9);
    assert!(per_cell.values().all(|&c| c == (1, 1)));
    let again = sample_similarity_corpus(ctx(), &config, Encoding::Incident).unwrap();
    assert_eq!(again, corpus);
}

#[test]
fn similarity_corpus_density_zero_is_partial() {
    let config = SimilarityConfig {
        graphs: GraphSource {
            node_count: 50,
            density: 0.0,
            seed: 1,
            samples_per_graph: 1,
            min_degree: None,
        },
        quota: 2,
        max_attempts: 1_000_000,
    };
    match sample_similarity_corpus(ctx(), &config, Encoding::Incident) {
        Err(TaskError::PartialCorpus { attempts, unfilled }) => {
            assert_eq!(attempts, 0);
            assert_eq!(unfilled.len(), 9);
        }
        other => panic!("expected partial corpus, got {other:?}"),
    }
}

#[test]
fn similarity_corpus_budget_exhaustion_lists_cells() {
    let config = SimilarityConfig {
        graphs: GraphSource {
            node_count: 30,
            density: 0.3,
            seed: 1,
            samples_per_graph: 1,
            min_degree: None,
        },
        quota: 2,
        max_attempts: 50,
    };
    match sample_similarity_corpus(ctx(), &config, Encoding::Incident) {
        Err(TaskError::PartialCorpus { attempts, unfilled }) => {
            assert_eq!(attempts, 50);
            assert!(unfilled.iter().any(|c| c.cell == CellKey::Buckets { first: BucketLabel::Large, second: BucketLabel::Large }));
        }
        other => panic!("expected partial corpus, got {other:?}"),
    }
}

#[test]
fn odd_quota_is_rejected() {
    let config = SimilarityConfig {
        graphs: GraphSource { node_count: 30, density: 0.3, seed: 1, samples_per_graph: 1, min_degree: None },
        quota: 3,
        max_attempts: 10,
    };
    assert!(matches!(
        sample_similarity_corpus(ctx(), &config, Encoding::Incident),
        Err(TaskError::InvalidParameter(_))
    ));
}

#[test]
fn edge_existence_corpus_is_balanced_and_shared_across_encodings() {
    let config = EdgeExistenceConfig {
        graphs: GraphSource { node_count: 60, density: 0.2, seed: 9, samples_per_graph: 4, min_degree: None },
        samples: 20,
        noise_count: 9,
        max_attempts_per_sample: 10_000,
    };
    let inc = sample_edge_existence_corpus(ctx(), &config, Encoding::Incident).unwrap();
    let adj = sample_edge_existence_corpus(ctx(), &config, Encoding::Adjacency).unwrap();
    assert_eq!(inc.len(), 60);
    let yes = inc.iter().filter(|i| i.ground_truth == Answer::YesNo(true)).count();
    assert_eq!(yes, 30);
    for (a, b) in inc.iter().zip(&adj) {
        assert_eq!(a.provenance.nodes, b.provenance.nodes);
        assert_eq!(a.provenance.noise, b.provenance.noise);
        let g = a.provenance.graph.generate().unwrap();
        let [x, y] = [a.provenance.nodes[0], a.provenance.nodes[1]];
        assert_eq!(a.ground_truth, Answer::YesNo(g.edge_exists(x, y).unwrap()));
    }
}

#[test]
fn common_connection_corpus_covers_grid() {
    let config = CommonConnectionConfig {
        graphs: GraphSource { node_count: 40, density: 0.3, seed: 2, samples_per_graph: 1, min_degree: Some(5) },
        samples: 3,
        max_attempts_per_sample: 10_000,
    };
    let corpus = sample_common_connection_corpus(ctx(), &config, Encoding::Expert).unwrap();
    assert_eq!(corpus.len(), 27);
    let cells: std::collections::BTreeSet<CellKey> = corpus.iter().map(|i| i.cell).collect();
    assert_eq!(cells.len(), 9);
    for inst in &corpus {
        let g = inst.provenance.graph.generate().unwrap();
        let [a, b] = [inst.provenance.nodes[0], inst.provenance.nodes[1]];
        assert!(g.degree(a).unwrap() >= 5 && g.degree(b).unwrap() >= 5);
        assert_eq!(inst.ground_truth, Answer::Count(g.common_connections(a, b).unwrap().len() as u32));
    }
}

#[test]
fn corpus_file_round_trip() {
    let config = CommonConnectionConfig {
        graphs: GraphSource { node_count: 30, density: 0.4, seed: 5, samples_per_graph: 1, min_degree: None },
        samples: 2,
        max_attempts_per_sample: 1_000,
    };
    let corpus = sample_common_connection_corpus(ctx(), &config, Encoding::Incident).unwrap();
    let header = CorpusHeader::new(ctx(), TaskKind::CommonConnection, Encoding::Incident);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.jsonl");
    write_corpus(&path, &header, &corpus).unwrap();
    let (h, back) = read_corpus(&path).unwrap();
    assert_eq!(h, header);
    assert_eq!(back, corpus);

    let wrong = CorpusHeader::new(ctx(), TaskKind::Similarity, Encoding::Incident);
    write_corpus(&path, &wrong, &corpus).unwrap();
    assert!(matches!(read_corpus(&path), Err(TaskError::CorpusFormat { .. })));
}

fn random_triple(rng: &mut prng::Rng) -> [NodeId; 3] {
    let picked = rand::seq::index::sample(rng, 25, 3);
    [picked.index(0) as NodeId, picked.index(1) as NodeId, picked.index(2) as NodeId]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn edge_existence_rebuilds_identically(seed in any::<u64>(), p in 0usize..3, e in 0usize..3, a in 0u32..30, b in 0u32..30) {
        prop_assume!(a != b);
        let g = Graph::generate_er(30, 0.25, seed).unwrap();
        let mut rng = prng::rng_from(seed);
        let noise = sample_noise(&g, &[a, b], 9, &mut rng).unwrap();
        let inst = build_edge_existence(ctx(), &g, "p", (a, b), &noise, Placement::ALL[p], Encoding::ALL[e]).unwrap();
        prop_assert_eq!(inst.ground_truth, Answer::YesNo(g.edge_exists(a, b).unwrap()));
        let json = serde_json::to_string(&inst).unwrap();
        let back: TaskInstance = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(&back.rebuild(ctx()).unwrap(), &inst);
    }

    #[test]
    fn similarity_rebuilds_and_template_duality(seed in any::<u64>(), shuffle in any::<u64>(), e in 0usize..3) {
        let g = Graph::generate_er(25, 0.4, seed).unwrap();
        let mut rng = prng::rng_from(seed);
        let [t1, s, t2] = random_triple(&mut rng);
        let enc = Encoding::ALL[e];
        let built = build_similarity(ctx(), &g, "p", t1, s, t2, enc, QuestionTemplate::GreaterJkOverIj, shuffle);
        prop_assume!(built.is_ok());
        let inst = built.unwrap();
        prop_assert_eq!(&inst.rebuild(ctx()).unwrap(), &inst);
        let swapped = build_similarity(ctx(), &g, "p", t2, s, t1, enc, QuestionTemplate::GreaterIjOverJk, shuffle).unwrap();
        prop_assert_eq!(swapped.ground_truth, inst.ground_truth);
    }
}
