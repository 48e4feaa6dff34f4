//! Meta-path guided random walks and paper-author pair extraction.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TapemError};
use crate::hetgraph::{HeteroGraph, NodeId, NodeType};
use crate::par;
use crate::seeds::{self, STREAM_WALK};

/// Ordered node-type pattern constraining walks, e.g. Author-Paper-Author.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetaPath {
    types: Vec<NodeType>,
}

impl MetaPath {
    /// Parse a letter scheme like "APA", "APPA", or "APVPA".
    pub fn parse(scheme: &str) -> Result<MetaPath> {
        let mut types = Vec::new();
        for ch in scheme.chars() {
            types.push(match ch {
                'A' => NodeType::Author,
                'P' => NodeType::Paper,
                'V' => NodeType::Venue,
                _ => {
                    return Err(TapemError::Config(format!(
                        "meta-path {scheme}: unknown node letter {ch}"
                    )))
                }
            });
        }
        MetaPath::new(types)
    }

    pub fn new(types: Vec<NodeType>) -> Result<MetaPath> {
        if types.len() < 2 {
            return Err(TapemError::Config(
                "meta-path must name at least two types".into(),
            ));
        }
        for pair in types.windows(2) {
            if !schema_admits(pair[0], pair[1]) {
                return Err(TapemError::Config(format!(
                    "meta-path step {}-{} has no edge type in the schema",
                    pair[0].as_str(),
                    pair[1].as_str()
                )));
            }
        }
        if types.first() != types.last() {
            return Err(TapemError::Config(
                "meta-path must start and end with the same type for recursive walking".into(),
            ));
        }
        Ok(MetaPath { types })
    }

    pub fn scheme(&self) -> String {
        self.types.iter().map(|t| t.letter()).collect()
    }

    pub fn types(&self) -> &[NodeType] {
        &self.types
    }

    /// Required node type at walk position `pos`. The pattern repeats
    /// cyclically with the duplicated junction type dropped.
    pub fn type_at(&self, pos: usize) -> NodeType {
        let cycle = self.types.len() - 1;
        self.types[pos % cycle]
    }
}

/// True when the schema has an edge type joining the two node types.
fn schema_admits(a: NodeType, b: NodeType) -> bool {
    use NodeType::*;
    matches!(
        (a, b),
        (Author, Paper) | (Paper, Author) | (Paper, Paper) | (Paper, Venue) | (Venue, Paper)
    )
}

/// One realized walk and the meta-path that guided it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Walk {
    pub nodes: Vec<NodeId>,
    pub scheme: String,
    pub start: NodeId,
}

/// A paper-author pair with its context path, window offset, and label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairPathInstance {
    pub paper: NodeId,
    pub author: NodeId,
    /// Node sequence from the paper to the author, endpoints inclusive.
    pub path: Vec<NodeId>,
    pub label: bool,
    /// Position of the paper in the originating walk.
    pub paper_offset: usize,
}

/// Uniform draw over the meta-path-compatible neighbors of `current`;
/// `None` when the walk terminates for lack of valid neighbors.
pub fn next_node<R: Rng>(
    graph: &HeteroGraph,
    current: NodeId,
    metapath: &MetaPath,
    step_index: usize,
    rng: &mut R,
) -> Result<Option<NodeId>> {
    let here = graph.node_type(current)?;
    let expected = metapath.type_at(step_index);
    if here != expected {
        return Err(TapemError::Contract(format!(
            "walk step {step_index}: node {} is {}, meta-path expects {}",
            graph.symbol(current),
            here.as_str(),
            expected.as_str()
        )));
    }
    let candidates = graph.typed_neighbors(current, metapath.type_at(step_index + 1))?;
    if candidates.is_empty() {
        return Ok(None);
    }
    Ok(Some(candidates[rng.gen_range(0..candidates.len())]))
}

/// Launch `walks_per_node` walks from every node matching the meta-path's
/// first type, each extended to `walk_length` nodes or until termination.
/// Walks that die before their second node are discarded. Each start node
/// draws from its own RNG stream, so output is independent of thread count.
pub fn generate_walks(
    graph: &HeteroGraph,
    metapath: &MetaPath,
    walks_per_node: usize,
    walk_length: usize,
    seed: u64,
) -> Result<Vec<Walk>> {
    if walks_per_node == 0 {
        return Err(TapemError::Config("walks_per_node must be positive".into()));
    }
    if walk_length < 2 {
        return Err(TapemError::Config("walk_length must be at least 2".into()));
    }
    let start_type = metapath.types()[0];
    let starts: Vec<NodeId> = (0..graph.node_count())
        .filter(|&n| graph.node_type(n).expect("in range") == start_type)
        .collect();

    let per_start: Vec<Vec<Walk>> = par::map_ordered(&starts, |&start| {
        let mut rng = seeds::stream_rng(seed, STREAM_WALK, start as u64, 0);
        let mut walks = Vec::with_capacity(walks_per_node);
        for _ in 0..walks_per_node {
            let mut nodes = vec![start];
            while nodes.len() < walk_length {
                let step = nodes.len() - 1;
                match next_node(graph, nodes[step], metapath, step, &mut rng)
                    .expect("start type matches pattern")
                {
                    Some(next) => nodes.push(next),
                    None => break,
                }
            }
            if nodes.len() >= 2 {
                walks.push(Walk {
                    nodes,
                    scheme: metapath.scheme(),
                    start,
                });
            }
        }
        walks
    });
    Ok(per_start.into_iter().flatten().collect())
}

/// Emit one instance per (paper position, author position) pair at walk
/// distance at most `tau`, closed interval. The context path is the walk
/// subsequence between the two positions, oriented paper-to-author.
pub fn extract_pairs(
    walk: &[NodeId],
    tau: usize,
    graph: &HeteroGraph,
) -> Result<Vec<PairPathInstance>> {
    if tau == 0 {
        return Err(TapemError::Config("tau must be at least 1".into()));
    }
    let types: Vec<NodeType> = walk
        .iter()
        .map(|&n| graph.node_type(n))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (pos_v, &v) in walk.iter().enumerate() {
        if types[pos_v] != NodeType::Paper {
            continue;
        }
        let lo = pos_v.saturating_sub(tau);
        let hi = (pos_v + tau).min(walk.len() - 1);
        for (pos_u, &u) in walk.iter().enumerate().take(hi + 1).skip(lo) {
            if types[pos_u] != NodeType::Author {
                continue;
            }
            let path: Vec<NodeId> = if pos_u >= pos_v {
                walk[pos_v..=pos_u].to_vec()
            } else {
                let mut p = walk[pos_u..=pos_v].to_vec();
                p.reverse();
                p
            };
            out.push(PairPathInstance {
                paper: v,
                author: u,
                path,
                label: graph.has_authorship(v, u)?,
                paper_offset: pos_v,
            });
        }
    }
    Ok(out)
}

/// Extract instances from every walk.
pub fn extract_all(
    walks: &[Walk],
    tau: usize,
    graph: &HeteroGraph,
) -> Result<Vec<PairPathInstance>> {
    let mut out = Vec::new();
    for w in walks {
        out.extend(extract_pairs(&w.nodes, tau, graph)?);
    }
    Ok(out)
}

/// Per-paper author co-occurrence counts within the training walks,
/// using the same window as pair extraction.
pub fn cooccurrence_counts(
    walks: &[Walk],
    tau: usize,
    graph: &HeteroGraph,
) -> Result<std::collections::HashMap<NodeId, std::collections::HashMap<NodeId, usize>>> {
    let mut counts: std::collections::HashMap<NodeId, std::collections::HashMap<NodeId, usize>> =
        std::collections::HashMap::new();
    for w in walks {
        for inst in extract_pairs(&w.nodes, tau, graph)? {
            *counts
                .entry(inst.paper)
                .or_default()
                .entry(inst.author)
                .or_default() += 1;
        }
    }
    Ok(counts)
}

/// Persist walks as TSV: one walk per line, space-separated external ids,
/// with a header comment recording the meta-path and seed.
pub fn save_walks(walks: &[Walk], graph: &HeteroGraph, scheme: &str, seed: u64, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# metapath={scheme} seed={seed}")?;
    for w in walks {
        let line: Vec<&str> = w.nodes.iter().map(|&n| graph.symbol(n)).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_walks(graph: &HeteroGraph, path: &Path) -> Result<Vec<Walk>> {
    let mut walks = Vec::new();
    let mut scheme = String::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if let Some(rest) = line.strip_prefix('#') {
            for tok in rest.split_whitespace() {
                if let Some(s) = tok.strip_prefix("metapath=") {
                    scheme = s.to_string();
                }
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let nodes: Vec<NodeId> = line
            .split(' ')
            .map(|sym| graph.node_by_symbol(sym))
            .collect::<Result<_>>()?;
        let start = nodes[0];
        walks.push(Walk { nodes, scheme: scheme.clone(), start });
    }
    Ok(walks)
}

#[derive(Serialize, Deserialize)]
struct InstanceRecord {
    v: String,
    u: String,
    path: Vec<String>,
    y: u8,
}

/// Persist pair instances as JSON Lines.
pub fn save_instances(
    instances: &[PairPathInstance],
    graph: &HeteroGraph,
    path: &Path,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for inst in instances {
        let rec = InstanceRecord {
            v: graph.symbol(inst.paper).to_string(),
            u: graph.symbol(inst.author).to_string(),
            path: inst.path.iter().map(|&n| graph.symbol(n).to_string()).collect(),
            y: inst.label as u8,
        };
        writeln!(out, "{}", serde_json::to_string(&rec).expect("serializable"))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hetgraph::EdgeType;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chain_graph() -> HeteroGraph {
        // a0 - p0 - a1 - p1 - a2, plus venue v0 on both papers
        HeteroGraph::build(
            vec![
                ("a0".into(), NodeType::Author),
                ("a1".into(), NodeType::Author),
                ("a2".into(), NodeType::Author),
                ("p0".into(), NodeType::Paper),
                ("p1".into(), NodeType::Paper),
                ("v0".into(), NodeType::Venue),
            ],
            vec![
                ("a0".into(), "p0".into(), EdgeType::Writes),
                ("a1".into(), "p0".into(), EdgeType::Writes),
                ("a1".into(), "p1".into(), EdgeType::Writes),
                ("a2".into(), "p1".into(), EdgeType::Writes),
                ("p0".into(), "v0".into(), EdgeType::PublishesIn),
                ("p1".into(), "v0".into(), EdgeType::PublishesIn),
            ],
            vec![
                ("p0".into(), 2010, vec!["x".into()]),
                ("p1".into(), 2011, vec!["y".into()]),
            ],
            1,
        )
        .unwrap()
    }

    #[test]
    fn metapath_parsing_and_cycling() {
        let apa = MetaPath::parse("APA").unwrap();
        assert_eq!(apa.type_at(0), NodeType::Author);
        assert_eq!(apa.type_at(1), NodeType::Paper);
        assert_eq!(apa.type_at(2), NodeType::Author);
        assert_eq!(apa.type_at(3), NodeType::Paper);
        let apvpa = MetaPath::parse("APVPA").unwrap();
        assert_eq!(apvpa.type_at(4), NodeType::Author);
        assert_eq!(apvpa.type_at(5), NodeType::Paper);
        assert!(MetaPath::parse("AVA").is_err(), "no author-venue edges");
        assert!(MetaPath::parse("AP").is_err(), "must return to start type");
        assert!(MetaPath::parse("A").is_err());
    }

    #[test]
    fn next_node_uniform_over_typed_neighbors() {
        let g = chain_graph();
        let apa = MetaPath::parse("APA").unwrap();
        let a1 = g.node_by_symbol("a1").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut hits = std::collections::HashMap::new();
        let draws = 10_000;
        for _ in 0..draws {
            let n = next_node(&g, a1, &apa, 0, &mut rng).unwrap().unwrap();
            assert_eq!(g.node_type(n).unwrap(), NodeType::Paper);
            *hits.entry(n).or_insert(0usize) += 1;
        }
        assert_eq!(hits.len(), 2);
        for count in hits.values() {
            let f = *count as f64 / draws as f64;
            assert!((0.47..=0.53).contains(&f), "frequency {f}");
        }
    }

    #[test]
    fn next_node_terminates_without_neighbors() {
        let g = HeteroGraph::build(
            vec![("a0".into(), NodeType::Author)],
            vec![],
            vec![],
            1,
        )
        .unwrap();
        let apa = MetaPath::parse("APA").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(next_node(&g, 0, &apa, 0, &mut rng).unwrap(), None);
    }

    #[test]
    fn next_node_rejects_type_mismatch() {
        let g = chain_graph();
        let apa = MetaPath::parse("APA").unwrap();
        let p0 = g.node_by_symbol("p0").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(next_node(&g, p0, &apa, 0, &mut rng).is_err());
    }

    #[test]
    fn walks_start_at_pattern_type_and_match_it() {
        let g = chain_graph();
        let apa = MetaPath::parse("APA").unwrap();
        let walks = generate_walks(&g, &apa, 5, 8, 42).unwrap();
        assert!(!walks.is_empty());
        assert!(walks.len() <= 3 * 5);
        for w in &walks {
            assert_eq!(g.node_type(w.nodes[0]).unwrap(), NodeType::Author);
            for (i, &n) in w.nodes.iter().enumerate() {
                assert_eq!(g.node_type(n).unwrap(), apa.type_at(i), "walk {:?}", w.nodes);
            }
            for pair in w.nodes.windows(2) {
                let ty = g.node_type(pair[1]).unwrap();
                assert!(g.typed_neighbors(pair[0], ty).unwrap().contains(&pair[1]));
            }
        }
    }

    #[test]
    fn isolated_starts_are_discarded() {
        let g = HeteroGraph::build(
            vec![
                ("a0".into(), NodeType::Author),
                ("loner".into(), NodeType::Author),
                ("p0".into(), NodeType::Paper),
            ],
            vec![("a0".into(), "p0".into(), EdgeType::Writes)],
            vec![("p0".into(), 2010, vec!["x".into()])],
            1,
        )
        .unwrap();
        let apa = MetaPath::parse("APA").unwrap();
        let walks = generate_walks(&g, &apa, 4, 6, 1).unwrap();
        let loner = g.node_by_symbol("loner").unwrap();
        assert!(walks.iter().all(|w| w.start != loner));
        assert!(walks.iter().all(|w| w.nodes.len() >= 2));
    }

    #[test]
    fn walks_are_deterministic_for_fixed_seed() {
        let g = chain_graph();
        let apa = MetaPath::parse("APA").unwrap();
        let w1 = generate_walks(&g, &apa, 3, 10, 9).unwrap();
        let w2 = generate_walks(&g, &apa, 3, 10, 9).unwrap();
        assert_eq!(w1, w2);
    }

    #[test]
    fn pair_extraction_on_alternating_segment() {
        let g = chain_graph();
        let p0 = g.node_by_symbol("p0").unwrap();
        let p1 = g.node_by_symbol("p1").unwrap();
        let a1 = g.node_by_symbol("a1").unwrap();
        let a2 = g.node_by_symbol("a2").unwrap();
        // segment [P0, A1, P1, A2]
        let walk = vec![p0, a1, p1, a2];
        let got = extract_pairs(&walk, 3, &g).unwrap();
        let expect = vec![
            PairPathInstance {
                paper: p0,
                author: a1,
                path: vec![p0, a1],
                label: true,
                paper_offset: 0,
            },
            PairPathInstance {
                paper: p0,
                author: a2,
                path: vec![p0, a1, p1, a2],
                label: false,
                paper_offset: 0,
            },
            PairPathInstance {
                paper: p1,
                author: a1,
                path: vec![p1, a1],
                label: true,
                paper_offset: 2,
            },
            PairPathInstance {
                paper: p1,
                author: a2,
                path: vec![p1, a2],
                label: true,
                paper_offset: 2,
            },
        ];
        assert_eq!(got, expect);
    }

    #[test]
    fn author_only_walk_yields_nothing() {
        let g = chain_graph();
        let a0 = g.node_by_symbol("a0").unwrap();
        let a1 = g.node_by_symbol("a1").unwrap();
        assert!(extract_pairs(&[a0, a1], 3, &g).unwrap().is_empty());
    }

    #[test]
    fn tau_one_keeps_only_adjacent_pairs() {
        let g = chain_graph();
        let p0 = g.node_by_symbol("p0").unwrap();
        let p1 = g.node_by_symbol("p1").unwrap();
        let a1 = g.node_by_symbol("a1").unwrap();
        let a2 = g.node_by_symbol("a2").unwrap();
        let got = extract_pairs(&[p0, a1, p1, a2], 1, &g).unwrap();
        let pairs: Vec<(NodeId, NodeId)> = got.iter().map(|i| (i.paper, i.author)).collect();
        assert_eq!(pairs, vec![(p0, a1), (p1, a1), (p1, a2)]);
    }

    #[test]
    fn paths_are_contiguous_subsequences() {
        let g = chain_graph();
        let apa = MetaPath::parse("APA").unwrap();
        let walks = generate_walks(&g, &apa, 5, 12, 4).unwrap();
        for w in &walks {
            for inst in extract_pairs(&w.nodes, 3, &g).unwrap() {
                assert_eq!(inst.path.first(), Some(&inst.paper));
                assert_eq!(inst.path.last(), Some(&inst.author));
                assert!(inst.path.len() >= 2 && inst.path.len() <= 2 * 3 + 1);
                let fwd: Vec<NodeId> = inst.path.clone();
                let mut rev = fwd.clone();
                rev.reverse();
                let contiguous = w
                    .nodes
                    .windows(inst.path.len())
                    .any(|win| win == fwd.as_slice() || win == rev.as_slice());
                assert!(contiguous, "path {:?} not in walk {:?}", inst.path, w.nodes);
                assert_eq!(inst.label, g.has_authorship(inst.paper, inst.author).unwrap());
            }
        }
    }

    #[test]
    fn walk_round_trip_through_tsv() {
        let g = chain_graph();
        let apa = MetaPath::parse("APA").unwrap();
        let walks = generate_walks(&g, &apa, 2, 6, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("walks.tsv");
        save_walks(&walks, &g, "APA", 5, &path).unwrap();
        let loaded = load_walks(&g, &path).unwrap();
        assert_eq!(walks, loaded);
    }
}
