//! Typed heterogeneous graph: authors, papers, venues and their relations.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TapemError};

pub mod io;
pub mod synth;

pub use synth::{generate_synthetic, SynthConfig};

/// Internal dense node id, assigned in file order at load time.
pub type NodeId = usize;

/// Closed set of node types.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeType {
    Author,
    Paper,
    Venue,
}

impl NodeType {
    pub const ALL: [NodeType; 3] = [NodeType::Author, NodeType::Paper, NodeType::Venue];

    pub fn index(self) -> usize {
        match self {
            NodeType::Author => 0,
            NodeType::Paper => 1,
            NodeType::Venue => 2,
        }
    }

    pub fn parse(s: &str) -> Option<NodeType> {
        match s {
            "author" => Some(NodeType::Author),
            "paper" => Some(NodeType::Paper),
            "venue" => Some(NodeType::Venue),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeType::Author => "author",
            NodeType::Paper => "paper",
            NodeType::Venue => "venue",
        }
    }

    /// Single-letter form used in meta-path strings.
    pub fn letter(self) -> char {
        match self {
            NodeType::Author => 'A',
            NodeType::Paper => 'P',
            NodeType::Venue => 'V',
        }
    }
}

/// Closed set of edge types. `PublishesIn` is spelled `venue` on disk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeType {
    Writes,
    Cites,
    PublishesIn,
}

impl EdgeType {
    pub fn parse(s: &str) -> Option<EdgeType> {
        match s {
            "writes" => Some(EdgeType::Writes),
            "cites" => Some(EdgeType::Cites),
            "venue" => Some(EdgeType::PublishesIn),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeType::Writes => "writes",
            EdgeType::Cites => "cites",
            EdgeType::PublishesIn => "venue",
        }
    }
}

/// Token-id vocabulary built from abstracts with a frequency floor.
/// Id 0 is the unknown token.
#[derive(Clone, Debug)]
pub struct Vocabulary {
    tokens: Vec<String>,
    by_token: HashMap<String, u32>,
}

pub const UNKNOWN_TOKEN: &str = "<unk>";
pub const UNKNOWN_TOKEN_ID: u32 = 0;

impl Vocabulary {
    /// Build from token sequences in corpus order: tokens occurring fewer
    /// than `min_count` times map to the unknown id; the rest get ids in
    /// first-occurrence order.
    pub fn build<'a, I>(sequences: I, min_count: usize) -> Vocabulary
    where
        I: IntoIterator<Item = &'a Vec<String>>,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut first_seen: Vec<&str> = Vec::new();
        for seq in sequences {
            for tok in seq {
                let c = counts.entry(tok.as_str()).or_insert(0);
                if *c == 0 {
                    first_seen.push(tok.as_str());
                }
                *c += 1;
            }
        }
        let mut tokens = vec![UNKNOWN_TOKEN.to_string()];
        let mut by_token = HashMap::new();
        for tok in first_seen {
            if counts[tok] >= min_count {
                by_token.insert(tok.to_string(), tokens.len() as u32);
                tokens.push(tok.to_string());
            }
        }
        Vocabulary { tokens, by_token }
    }

    /// Reconstruct from an explicit token list (checkpoint loading).
    pub fn from_tokens(tokens: Vec<String>) -> Result<Vocabulary> {
        if tokens.first().map(String::as_str) != Some(UNKNOWN_TOKEN) {
            return Err(TapemError::Integrity(
                "vocabulary must start with the unknown token".into(),
            ));
        }
        let by_token = tokens
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Ok(Vocabulary { tokens, by_token })
    }

    pub fn id(&self, token: &str) -> u32 {
        self.by_token.get(token).copied().unwrap_or(UNKNOWN_TOKEN_ID)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 1
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Stable digest used to detect checkpoint/data vocabulary mismatches.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        format!("{:x}", h.finalize())
    }
}

/// One paper's textual payload.
#[derive(Clone, Debug)]
pub struct Abstract {
    pub year: i32,
    pub tokens: Vec<String>,
    pub token_ids: Vec<u32>,
}

/// Immutable typed graph with type-indexed adjacency and authorship truth.
#[derive(Clone, Debug)]
pub struct HeteroGraph {
    symbols: Vec<String>,
    by_symbol: HashMap<String, NodeId>,
    node_types: Vec<NodeType>,
    /// Position of each node within its own type (embedding row index).
    type_index: Vec<usize>,
    /// Per node, per target type, the sorted traversable neighbors.
    /// Citations are stored directed in `edges` but traversable both ways.
    adjacency: Vec<[Vec<NodeId>; 3]>,
    edges: Vec<(NodeId, NodeId, EdgeType)>,
    authorship: HashSet<(NodeId, NodeId)>,
    abstracts: HashMap<NodeId, Abstract>,
    vocab: Vocabulary,
    authors: Vec<NodeId>,
    papers: Vec<NodeId>,
    venues: Vec<NodeId>,
}

impl HeteroGraph {
    /// Validate and index raw node/edge/abstract records.
    ///
    /// `nodes` are (symbol, type) in file order; `edges` reference symbols;
    /// `abstracts` map paper symbols to (year, tokens).
    pub fn build(
        nodes: Vec<(String, NodeType)>,
        edges: Vec<(String, String, EdgeType)>,
        abstracts: Vec<(String, i32, Vec<String>)>,
        min_token_count: usize,
    ) -> Result<HeteroGraph> {
        let mut symbols = Vec::with_capacity(nodes.len());
        let mut by_symbol = HashMap::with_capacity(nodes.len());
        let mut node_types = Vec::with_capacity(nodes.len());
        let mut type_index = Vec::with_capacity(nodes.len());
        let mut per_type = [Vec::new(), Vec::new(), Vec::new()];
        for (sym, ty) in nodes {
            if by_symbol.contains_key(&sym) {
                return Err(TapemError::Integrity(format!("duplicate node id {sym}")));
            }
            let id = symbols.len();
            by_symbol.insert(sym.clone(), id);
            symbols.push(sym);
            node_types.push(ty);
            type_index.push(per_type[ty.index()].len());
            per_type[ty.index()].push(id);
        }
        let [authors, papers, venues] = per_type;

        let lookup = |sym: &str| -> Result<NodeId> {
            by_symbol
                .get(sym)
                .copied()
                .ok_or_else(|| TapemError::Integrity(format!("edge references unknown node id {sym}")))
        };

        let mut adjacency: Vec<[Vec<NodeId>; 3]> = vec![Default::default(); symbols.len()];
        let mut stored = Vec::with_capacity(edges.len());
        let mut authorship = HashSet::new();
        for (src_sym, dst_sym, etype) in edges {
            let src = lookup(&src_sym)?;
            let dst = lookup(&dst_sym)?;
            let (ts, td) = (node_types[src], node_types[dst]);
            match etype {
                EdgeType::Writes => {
                    // normalize to (author, paper)
                    let (author, paper) = match (ts, td) {
                        (NodeType::Author, NodeType::Paper) => (src, dst),
                        (NodeType::Paper, NodeType::Author) => (dst, src),
                        _ => {
                            return Err(TapemError::Integrity(format!(
                                "writes edge {src_sym}-{dst_sym} joins {} and {}",
                                ts.as_str(),
                                td.as_str()
                            )))
                        }
                    };
                    adjacency[author][NodeType::Paper.index()].push(paper);
                    adjacency[paper][NodeType::Author.index()].push(author);
                    authorship.insert((paper, author));
                    stored.push((author, paper, EdgeType::Writes));
                }
                EdgeType::PublishesIn => {
                    let (paper, venue) = match (ts, td) {
                        (NodeType::Paper, NodeType::Venue) => (src, dst),
                        (NodeType::Venue, NodeType::Paper) => (dst, src),
                        _ => {
                            return Err(TapemError::Integrity(format!(
                                "venue edge {src_sym}-{dst_sym} joins {} and {}",
                                ts.as_str(),
                                td.as_str()
                            )))
                        }
                    };
                    adjacency[paper][NodeType::Venue.index()].push(venue);
                    adjacency[venue][NodeType::Paper.index()].push(paper);
                    stored.push((paper, venue, EdgeType::PublishesIn));
                }
                EdgeType::Cites => {
                    if ts != NodeType::Paper || td != NodeType::Paper {
                        return Err(TapemError::Integrity(format!(
                            "cites edge {src_sym}-{dst_sym} joins {} and {}",
                            ts.as_str(),
                            td.as_str()
                        )));
                    }
                    // stored directed; traversable both ways for P->P steps
                    adjacency[src][NodeType::Paper.index()].push(dst);
                    adjacency[dst][NodeType::Paper.index()].push(src);
                    stored.push((src, dst, EdgeType::Cites));
                }
            }
        }
        for lists in &mut adjacency {
            for list in lists {
                list.sort_unstable();
                list.dedup();
            }
        }

        let vocab = Vocabulary::build(
            abstracts.iter().map(|(_, _, toks)| toks).collect::<Vec<_>>(),
            min_token_count,
        );
        let mut abstract_map = HashMap::new();
        for (sym, year, tokens) in abstracts {
            let id = lookup(&sym).map_err(|_| {
                TapemError::Integrity(format!("abstract references unknown paper id {sym}"))
            })?;
            if node_types[id] != NodeType::Paper {
                return Err(TapemError::Integrity(format!(
                    "abstract for non-paper node {sym}"
                )));
            }
            if tokens.is_empty() {
                return Err(TapemError::Integrity(format!(
                    "paper {sym} has an empty token sequence"
                )));
            }
            let token_ids = vocab.encode(&tokens);
            abstract_map.insert(id, Abstract { year, tokens, token_ids });
        }
        for &p in &papers {
            if !abstract_map.contains_key(&p) {
                return Err(TapemError::Integrity(format!(
                    "paper {} has no abstract",
                    symbols[p]
                )));
            }
        }

        Ok(HeteroGraph {
            symbols,
            by_symbol,
            node_types,
            type_index,
            adjacency,
            edges: stored,
            authorship,
            abstracts: abstract_map,
            vocab,
            authors,
            papers,
            venues,
        })
    }

    pub fn node_count(&self) -> usize {
        self.symbols.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(NodeId, NodeId, EdgeType)] {
        &self.edges
    }

    pub fn authors(&self) -> &[NodeId] {
        &self.authors
    }

    pub fn papers(&self) -> &[NodeId] {
        &self.papers
    }

    pub fn venues(&self) -> &[NodeId] {
        &self.venues
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn symbol(&self, node: NodeId) -> &str {
        &self.symbols[node]
    }

    pub fn node_by_symbol(&self, sym: &str) -> Result<NodeId> {
        self.by_symbol
            .get(sym)
            .copied()
            .ok_or_else(|| TapemError::Lookup(format!("unknown node id {sym}")))
    }

    fn check_node(&self, node: NodeId) -> Result<()> {
        if node >= self.symbols.len() {
            return Err(TapemError::Lookup(format!("unknown node id {node}")));
        }
        Ok(())
    }

    /// Node type map (phi).
    pub fn node_type(&self, node: NodeId) -> Result<NodeType> {
        self.check_node(node)?;
        Ok(self.node_types[node])
    }

    /// Position of `node` within its own type; rows of embedding tables.
    pub fn type_row(&self, node: NodeId) -> usize {
        self.type_index[node]
    }

    /// Sorted traversable neighbors of the requested type.
    pub fn typed_neighbors(&self, node: NodeId, ty: NodeType) -> Result<&[NodeId]> {
        self.check_node(node)?;
        Ok(&self.adjacency[node][ty.index()])
    }

    /// True iff a writes-edge connects the pair.
    pub fn has_authorship(&self, paper: NodeId, author: NodeId) -> Result<bool> {
        self.check_node(paper)?;
        self.check_node(author)?;
        if self.node_types[paper] != NodeType::Paper {
            return Err(TapemError::Contract(format!(
                "has_authorship: {} is a {}, not a paper",
                self.symbols[paper],
                self.node_types[paper].as_str()
            )));
        }
        if self.node_types[author] != NodeType::Author {
            return Err(TapemError::Contract(format!(
                "has_authorship: {} is a {}, not an author",
                self.symbols[author],
                self.node_types[author].as_str()
            )));
        }
        Ok(self.authorship.contains(&(paper, author)))
    }

    pub fn abstract_of(&self, paper: NodeId) -> Result<&Abstract> {
        self.abstracts
            .get(&paper)
            .ok_or_else(|| TapemError::Lookup(format!("no abstract for node {paper}")))
    }

    pub fn paper_year(&self, paper: NodeId) -> Result<i32> {
        Ok(self.abstract_of(paper)?.year)
    }

    pub fn paper_token_ids(&self, paper: NodeId) -> Result<&[u32]> {
        Ok(&self.abstract_of(paper)?.token_ids)
    }

    /// Number of papers in `papers` written by `author`.
    pub fn publication_count(&self, author: NodeId, papers: &[NodeId]) -> usize {
        papers
            .iter()
            .filter(|p| self.authorship.contains(&(**p, author)))
            .count()
    }
}

/// Train/validation/test paper partition around a split year.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusSplit {
    pub train: Vec<NodeId>,
    pub validation: Vec<NodeId>,
    pub test: Vec<NodeId>,
    pub split_year: i32,
}

/// Papers before `t` train; papers at or after `t` are shuffled with
/// `seed` and halved into validation and test.
pub fn temporal_split(graph: &HeteroGraph, t: i32, seed: u64) -> Result<CorpusSplit> {
    let mut train = Vec::new();
    let mut post = Vec::new();
    for &p in graph.papers() {
        if graph.paper_year(p)? < t {
            train.push(p);
        } else {
            post.push(p);
        }
    }
    if train.is_empty() {
        return Err(TapemError::Config(format!(
            "temporal split at {t} leaves the training set empty"
        )));
    }
    if post.len() < 2 {
        return Err(TapemError::Config(format!(
            "temporal split at {t} leaves validation or test empty ({} post-split papers)",
            post.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    post.shuffle(&mut rng);
    let mid = post.len() / 2;
    let validation = post[..mid].to_vec();
    let test = post[mid..].to_vec();
    Ok(CorpusSplit {
        train,
        validation,
        test,
        split_year: t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> HeteroGraph {
        HeteroGraph::build(
            vec![
                ("a0".into(), NodeType::Author),
                ("a1".into(), NodeType::Author),
                ("p0".into(), NodeType::Paper),
                ("v0".into(), NodeType::Venue),
            ],
            vec![
                ("a0".into(), "p0".into(), EdgeType::Writes),
                ("a1".into(), "p0".into(), EdgeType::Writes),
                ("p0".into(), "v0".into(), EdgeType::PublishesIn),
            ],
            vec![("p0".into(), 2010, vec!["x".into(), "y".into()])],
            1,
        )
        .unwrap()
    }

    #[test]
    fn two_writes_edges_give_two_author_neighbors() {
        let g = tiny();
        let p = g.node_by_symbol("p0").unwrap();
        assert_eq!(g.typed_neighbors(p, NodeType::Author).unwrap().len(), 2);
    }

    #[test]
    fn dangling_edge_names_the_id() {
        let err = HeteroGraph::build(
            vec![("a0".into(), NodeType::Author)],
            vec![("a0".into(), "p9".into(), EdgeType::Writes)],
            vec![],
            1,
        )
        .unwrap_err();
        assert!(err.to_string().contains("p9"), "{err}");
    }

    #[test]
    fn empty_edge_list_is_fine() {
        let g = HeteroGraph::build(
            vec![("a0".into(), NodeType::Author)],
            vec![],
            vec![],
            1,
        )
        .unwrap();
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn typed_neighbors_sorted_and_empty_cases() {
        let g = HeteroGraph::build(
            vec![
                ("a0".into(), NodeType::Author),
                ("p3".into(), NodeType::Paper),
                ("p1".into(), NodeType::Paper),
                ("p7".into(), NodeType::Paper),
                ("v0".into(), NodeType::Venue),
            ],
            vec![
                ("a0".into(), "p3".into(), EdgeType::Writes),
                ("a0".into(), "p1".into(), EdgeType::Writes),
                ("a0".into(), "p7".into(), EdgeType::Writes),
            ],
            vec![
                ("p3".into(), 2010, vec!["x".into()]),
                ("p1".into(), 2010, vec!["x".into()]),
                ("p7".into(), 2010, vec!["x".into()]),
            ],
            1,
        )
        .unwrap();
        let a = g.node_by_symbol("a0").unwrap();
        let papers = g.typed_neighbors(a, NodeType::Paper).unwrap();
        let mut sorted = papers.to_vec();
        sorted.sort_unstable();
        assert_eq!(papers, &sorted[..], "adjacency must be sorted");
        // paper with no venue edge -> empty; venue-author query -> empty
        let p = g.node_by_symbol("p1").unwrap();
        assert!(g.typed_neighbors(p, NodeType::Venue).unwrap().is_empty());
        let v = g.node_by_symbol("v0").unwrap();
        assert!(g.typed_neighbors(v, NodeType::Author).unwrap().is_empty());
    }

    #[test]
    fn authorship_queries() {
        let g = tiny();
        let p = g.node_by_symbol("p0").unwrap();
        let a0 = g.node_by_symbol("a0").unwrap();
        assert!(g.has_authorship(p, a0).unwrap());
        // a1 wrote p0 too; build a non-author by checking a venue-less pair
        let g2 = HeteroGraph::build(
            vec![
                ("a0".into(), NodeType::Author),
                ("a1".into(), NodeType::Author),
                ("p0".into(), NodeType::Paper),
            ],
            vec![("a0".into(), "p0".into(), EdgeType::Writes)],
            vec![("p0".into(), 2010, vec!["x".into()])],
            1,
        )
        .unwrap();
        let p = g2.node_by_symbol("p0").unwrap();
        let a1 = g2.node_by_symbol("a1").unwrap();
        assert!(!g2.has_authorship(p, a1).unwrap());
        // type mismatch
        assert!(g2.has_authorship(p, p).is_err());
    }

    #[test]
    fn adjacency_symmetry_for_writes() {
        let g = tiny();
        for &(a, p, ty) in g.edges() {
            if ty == EdgeType::Writes {
                assert!(g.typed_neighbors(a, NodeType::Paper).unwrap().contains(&p));
                assert!(g.typed_neighbors(p, NodeType::Author).unwrap().contains(&a));
            }
        }
    }

    #[test]
    fn phi_consistency() {
        let g = tiny();
        for node in 0..g.node_count() {
            for ty in NodeType::ALL {
                for &n in g.typed_neighbors(node, ty).unwrap() {
                    assert_eq!(g.node_type(n).unwrap(), ty);
                }
            }
        }
    }

    #[test]
    fn split_halves_post_papers() {
        let nodes: Vec<(String, NodeType)> = (0..10)
            .map(|i| (format!("p{i}"), NodeType::Paper))
            .collect();
        let abstracts: Vec<(String, i32, Vec<String>)> = (0..10)
            .map(|i| {
                let year = if i < 6 { 2010 } else { 2014 };
                (format!("p{i}"), year, vec!["x".into()])
            })
            .collect();
        let g = HeteroGraph::build(nodes, vec![], abstracts, 1).unwrap();
        let split = temporal_split(&g, 2014, 7).unwrap();
        assert_eq!(split.train.len(), 6);
        assert_eq!(split.validation.len(), 2);
        assert_eq!(split.test.len(), 2);
        // disjoint
        let all: std::collections::HashSet<_> = split
            .train
            .iter()
            .chain(&split.validation)
            .chain(&split.test)
            .collect();
        assert_eq!(all.len(), 10);
    }

    #[test]
    fn split_with_everything_before_t_fails() {
        let g = HeteroGraph::build(
            vec![("p0".into(), NodeType::Paper)],
            vec![],
            vec![("p0".into(), 2010, vec!["x".into()])],
            1,
        )
        .unwrap();
        assert!(temporal_split(&g, 2014, 0).is_err());
    }

    #[test]
    fn odd_post_split_is_deterministic() {
        let nodes: Vec<(String, NodeType)> = (0..6)
            .map(|i| (format!("p{i}"), NodeType::Paper))
            .collect();
        let abstracts: Vec<(String, i32, Vec<String>)> = (0..6)
            .map(|i| {
                let year = if i == 0 { 2010 } else { 2014 };
                (format!("p{i}"), year, vec!["x".into()])
            })
            .collect();
        let g = HeteroGraph::build(nodes, vec![], abstracts, 1).unwrap();
        let s1 = temporal_split(&g, 2014, 3).unwrap();
        let s2 = temporal_split(&g, 2014, 3).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(s1.validation.len(), 2);
        assert_eq!(s1.test.len(), 3);
    }

    #[test]
    fn vocabulary_floor_maps_rare_tokens_to_unk() {
        let seqs = vec![
            vec!["hot".to_string(), "hot".to_string(), "hot".to_string(), "rare".to_string()],
        ];
        let vocab = Vocabulary::build(&seqs, 3);
        assert_eq!(vocab.id("hot"), 1);
        assert_eq!(vocab.id("rare"), UNKNOWN_TOKEN_ID);
        assert_eq!(vocab.id("absent"), UNKNOWN_TOKEN_ID);
    }
}
