//! TSV/JSONL ingestion and persistence of a [`HeteroGraph`].

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EdgeType, HeteroGraph, NodeType};
use crate::error::{Result, TapemError};

/// Loader knobs. The venue-size filter mirrors corpus cleanups that drop
/// papers from venues with very few publications; it ships disabled.
#[derive(Clone, Copy, Debug)]
pub struct LoadOptions {
    pub min_token_count: usize,
    pub min_venue_size: Option<usize>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            min_token_count: 3,
            min_venue_size: None,
        }
    }
}

/// Raw file contents before graph validation; lets callers filter
/// records (e.g. drop post-split papers) before building.
#[derive(Clone, Debug)]
pub struct RawRecords {
    pub nodes: Vec<(String, NodeType)>,
    pub edges: Vec<(String, String, EdgeType)>,
    pub abstracts: Vec<(String, i32, Vec<String>)>,
}

impl RawRecords {
    pub fn build(mut self, options: LoadOptions) -> Result<HeteroGraph> {
        if let Some(min_size) = options.min_venue_size {
            filter_small_venues(&mut self.nodes, &mut self.edges, &mut self.abstracts, min_size);
        }
        HeteroGraph::build(self.nodes, self.edges, self.abstracts, options.min_token_count)
    }

    /// Drop papers published at or after `year`, with their edges and
    /// abstracts. Author and venue records are untouched, so embedding
    /// rows keep their positions.
    pub fn drop_papers_at_or_after(mut self, year: i32) -> RawRecords {
        use std::collections::HashSet;
        let dropped: HashSet<String> = self
            .abstracts
            .iter()
            .filter(|(_, y, _)| *y >= year)
            .map(|(sym, _, _)| sym.clone())
            .collect();
        self.nodes.retain(|(sym, _)| !dropped.contains(sym));
        self.edges
            .retain(|(src, dst, _)| !dropped.contains(src) && !dropped.contains(dst));
        self.abstracts.retain(|(sym, _, _)| !dropped.contains(sym));
        self
    }
}

#[derive(Serialize, Deserialize)]
struct AbstractRecord {
    paper: serde_json::Value,
    year: i32,
    tokens: Vec<String>,
}

fn paper_symbol(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

pub fn load_graph(
    node_path: &Path,
    edge_path: &Path,
    abstract_path: &Path,
) -> Result<HeteroGraph> {
    load_graph_with(node_path, edge_path, abstract_path, LoadOptions::default())
}

pub fn load_graph_with(
    node_path: &Path,
    edge_path: &Path,
    abstract_path: &Path,
    options: LoadOptions,
) -> Result<HeteroGraph> {
    read_records(node_path, edge_path, abstract_path)?.build(options)
}

/// Parse the three corpus files into raw records.
pub fn read_records(
    node_path: &Path,
    edge_path: &Path,
    abstract_path: &Path,
) -> Result<RawRecords> {
    let parse_err = |path: &Path, line: usize, msg: String| TapemError::Parse {
        path: path.display().to_string(),
        line,
        msg,
    };

    let mut nodes = Vec::new();
    for (lineno, line) in BufReader::new(File::open(node_path)?).lines().enumerate() {
        let line = line?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t');
        let (id, ty) = match (cols.next(), cols.next()) {
            (Some(id), Some(ty)) if !id.is_empty() => (id, ty),
            _ => {
                return Err(parse_err(
                    node_path,
                    lineno + 1,
                    "expected id<TAB>type".into(),
                ))
            }
        };
        let ty = NodeType::parse(ty).ok_or_else(|| {
            parse_err(node_path, lineno + 1, format!("unknown node type {ty}"))
        })?;
        nodes.push((id.to_string(), ty));
    }

    let mut edges = Vec::new();
    for (lineno, line) in BufReader::new(File::open(edge_path)?).lines().enumerate() {
        let line = line?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t');
        let (src, dst, ty) = match (cols.next(), cols.next(), cols.next()) {
            (Some(s), Some(d), Some(t)) => (s, d, t),
            _ => {
                return Err(parse_err(
                    edge_path,
                    lineno + 1,
                    "expected src<TAB>dst<TAB>etype".into(),
                ))
            }
        };
        let ty = EdgeType::parse(ty).ok_or_else(|| {
            parse_err(edge_path, lineno + 1, format!("unknown edge type {ty}"))
        })?;
        edges.push((src.to_string(), dst.to_string(), ty));
    }

    let mut abstracts = Vec::new();
    for (lineno, line) in BufReader::new(File::open(abstract_path)?)
        .lines()
        .enumerate()
    {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let rec: AbstractRecord = serde_json::from_str(&line)
            .map_err(|e| parse_err(abstract_path, lineno + 1, e.to_string()))?;
        let sym = paper_symbol(&rec.paper).ok_or_else(|| {
            parse_err(abstract_path, lineno + 1, "paper field must be a string or integer".into())
        })?;
        abstracts.push((sym, rec.year, rec.tokens));
    }

    Ok(RawRecords { nodes, edges, abstracts })
}

/// Drop papers published in venues with fewer than `min_size` papers,
/// together with their edges and abstracts.
fn filter_small_venues(
    nodes: &mut Vec<(String, NodeType)>,
    edges: &mut Vec<(String, String, EdgeType)>,
    abstracts: &mut Vec<(String, i32, Vec<String>)>,
    min_size: usize,
) {
    use std::collections::{HashMap, HashSet};
    let node_type: HashMap<&str, NodeType> =
        nodes.iter().map(|(s, t)| (s.as_str(), *t)).collect();
    let mut venue_papers: HashMap<String, Vec<String>> = HashMap::new();
    for (src, dst, ty) in edges.iter() {
        if *ty == EdgeType::PublishesIn {
            let (paper, venue) = if node_type.get(src.as_str()) == Some(&NodeType::Paper) {
                (src.clone(), dst.clone())
            } else {
                (dst.clone(), src.clone())
            };
            venue_papers.entry(venue).or_default().push(paper);
        }
    }
    let dropped: HashSet<String> = venue_papers
        .values()
        .filter(|papers| papers.len() < min_size)
        .flatten()
        .cloned()
        .collect();
    nodes.retain(|(s, _)| !dropped.contains(s));
    edges.retain(|(src, dst, _)| !dropped.contains(src) && !dropped.contains(dst));
    abstracts.retain(|(s, _, _)| !dropped.contains(s));
}

/// Write the three corpus files for `graph` under `dir`
/// (`nodes.tsv`, `edges.tsv`, `abstracts.jsonl`).
pub fn save_graph(graph: &HeteroGraph, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut nodes = BufWriter::new(File::create(dir.join("nodes.tsv"))?);
    for id in 0..graph.node_count() {
        writeln!(
            nodes,
            "{}\t{}",
            graph.symbol(id),
            graph.node_type(id)?.as_str()
        )?;
    }
    nodes.flush()?;

    let mut edges = BufWriter::new(File::create(dir.join("edges.tsv"))?);
    for &(src, dst, ty) in graph.edges() {
        writeln!(
            edges,
            "{}\t{}\t{}",
            graph.symbol(src),
            graph.symbol(dst),
            ty.as_str()
        )?;
    }
    edges.flush()?;

    let mut abstracts = BufWriter::new(File::create(dir.join("abstracts.jsonl"))?);
    for &p in graph.papers() {
        let a = graph.abstract_of(p)?;
        let rec = AbstractRecord {
            paper: serde_json::Value::String(graph.symbol(p).to_string()),
            year: a.year,
            tokens: a.tokens.clone(),
        };
        writeln!(abstracts, "{}", serde_json::to_string(&rec).expect("serializable"))?;
    }
    abstracts.flush()?;
    Ok(())
}

/// Load the standard file names from a dataset directory.
pub fn load_dir(dir: &Path, options: LoadOptions) -> Result<HeteroGraph> {
    load_graph_with(
        &dir.join("nodes.tsv"),
        &dir.join("edges.tsv"),
        &dir.join("abstracts.jsonl"),
        options,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn write(path: &Path, contents: &str) {
        std::fs::write(path, contents).unwrap();
    }

    #[test]
    fn load_save_round_trip() {
        let dir = tempdir().unwrap();
        write(
            &dir.path().join("nodes.tsv"),
            "a0\tauthor\na1\tauthor\np0\tpaper\nv0\tvenue\n",
        );
        write(
            &dir.path().join("edges.tsv"),
            "a0\tp0\twrites\na1\tp0\twrites\np0\tv0\tvenue\n",
        );
        write(
            &dir.path().join("abstracts.jsonl"),
            "{\"paper\":\"p0\",\"year\":2012,\"tokens\":[\"x\",\"y\",\"x\"]}\n",
        );
        let g = load_dir(dir.path(), LoadOptions { min_token_count: 1, min_venue_size: None }).unwrap();
        assert_eq!(g.node_count(), 4);
        assert_eq!(g.edge_count(), 3);

        let out = tempdir().unwrap();
        save_graph(&g, out.path()).unwrap();
        let g2 = load_dir(out.path(), LoadOptions { min_token_count: 1, min_venue_size: None }).unwrap();
        assert_eq!(g.node_count(), g2.node_count());
        assert_eq!(g.edges(), g2.edges());
        for id in 0..g.node_count() {
            assert_eq!(g.symbol(id), g2.symbol(id));
            assert_eq!(g.node_type(id).unwrap(), g2.node_type(id).unwrap());
            for ty in NodeType::ALL {
                assert_eq!(
                    g.typed_neighbors(id, ty).unwrap(),
                    g2.typed_neighbors(id, ty).unwrap()
                );
            }
        }
        for &p in g.papers() {
            assert_eq!(
                g.abstract_of(p).unwrap().token_ids,
                g2.abstract_of(p).unwrap().token_ids
            );
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempdir().unwrap();
        write(&dir.path().join("nodes.tsv"), "a0\tauthor\nbroken-line\n");
        write(&dir.path().join("edges.tsv"), "");
        write(&dir.path().join("abstracts.jsonl"), "");
        let err = load_dir(dir.path(), LoadOptions::default()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn numeric_paper_ids_are_accepted() {
        let dir = tempdir().unwrap();
        write(&dir.path().join("nodes.tsv"), "7\tpaper\n");
        write(&dir.path().join("edges.tsv"), "");
        write(
            &dir.path().join("abstracts.jsonl"),
            "{\"paper\":7,\"year\":2012,\"tokens\":[\"x\"]}\n",
        );
        let g = load_dir(dir.path(), LoadOptions { min_token_count: 1, min_venue_size: None }).unwrap();
        assert_eq!(g.papers().len(), 1);
    }

    #[test]
    fn paper_without_abstract_is_integrity_error() {
        let dir = tempdir().unwrap();
        write(&dir.path().join("nodes.tsv"), "p0\tpaper\n");
        write(&dir.path().join("edges.tsv"), "");
        write(&dir.path().join("abstracts.jsonl"), "");
        let err = load_dir(dir.path(), LoadOptions::default()).unwrap_err();
        assert!(err.to_string().contains("no abstract"), "{err}");
    }

    #[test]
    fn venue_filter_drops_small_venue_papers() {
        let dir = tempdir().unwrap();
        write(
            &dir.path().join("nodes.tsv"),
            "a0\tauthor\np0\tpaper\np1\tpaper\np2\tpaper\nv0\tvenue\nv1\tvenue\n",
        );
        write(
            &dir.path().join("edges.tsv"),
            "a0\tp0\twrites\na0\tp1\twrites\na0\tp2\twrites\np0\tv0\tvenue\np1\tv0\tvenue\np2\tv1\tvenue\n",
        );
        write(
            &dir.path().join("abstracts.jsonl"),
            concat!(
                "{\"paper\":\"p0\",\"year\":2012,\"tokens\":[\"x\"]}\n",
                "{\"paper\":\"p1\",\"year\":2012,\"tokens\":[\"x\"]}\n",
                "{\"paper\":\"p2\",\"year\":2012,\"tokens\":[\"x\"]}\n",
            ),
        );
        let g = load_dir(
            dir.path(),
            LoadOptions { min_token_count: 1, min_venue_size: Some(2) },
        )
        .unwrap();
        assert_eq!(g.papers().len(), 2, "venue v1 had one paper; p2 dropped");
    }
}
