//! Planted-topic synthetic academic network generator.
//!
//! Each author and venue belongs to one topic; papers draw their authors,
//! venue, and abstract tokens mostly within one topic, with a configurable
//! cross-topic noise floor. Author selection follows a Zipf-like activity
//! skew so that most authors end up with few publications.

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{temporal_split, CorpusSplit, EdgeType, HeteroGraph, NodeType};
use crate::error::{Result, TapemError};
use crate::seeds::{self, STREAM_SPLIT, STREAM_SYNTH};

fn d_authors() -> usize { 200 }
fn d_papers() -> usize { 500 }
fn d_venues() -> usize { 18 }
fn d_topics() -> usize { 4 }
fn d_vocab() -> usize { 1000 }
fn d_tokens() -> usize { 15 }
fn d_authors_per_paper() -> usize { 2 }
fn d_skew() -> f64 { 3.0 }
fn d_floor() -> f64 { 0.02 }
fn d_noise() -> f64 { 0.10 }
fn d_affinity() -> f64 { 0.85 }
fn d_citations() -> usize { 2 }
fn d_year_min() -> i32 { 2006 }
fn d_year_max() -> i32 { 2015 }
fn d_split_year() -> i32 { 2014 }

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default = "d_authors")]
    pub authors: usize,
    #[serde(default = "d_papers")]
    pub papers: usize,
    #[serde(default = "d_venues")]
    pub venues: usize,
    #[serde(default = "d_topics")]
    pub topics: usize,
    #[serde(default = "d_vocab")]
    pub vocab_size: usize,
    #[serde(default = "d_tokens")]
    pub tokens_per_abstract: usize,
    #[serde(default = "d_authors_per_paper")]
    pub authors_per_paper: usize,
    /// Zipf exponent for within-topic author activity.
    #[serde(default = "d_skew")]
    pub activity_skew: f64,
    /// Uniform floor added to every author's activity weight, keeping
    /// tail authors present with a few in-topic papers.
    #[serde(default = "d_floor")]
    pub activity_floor: f64,
    /// Probability that an author/venue/citation draw ignores the topic.
    #[serde(default = "d_noise")]
    pub cross_topic_noise: f64,
    /// Probability that an abstract token comes from the topic block.
    #[serde(default = "d_affinity")]
    pub topic_token_affinity: f64,
    #[serde(default = "d_citations")]
    pub citations_per_paper: usize,
    #[serde(default = "d_year_min")]
    pub year_min: i32,
    #[serde(default = "d_year_max")]
    pub year_max: i32,
    #[serde(default = "d_split_year")]
    pub split_year: i32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| {
            Err(TapemError::Config(format!("synth config field {field}: {why}")))
        };
        if self.authors == 0 {
            return bad("authors", "must be positive".into());
        }
        if self.papers == 0 {
            return bad("papers", "must be positive".into());
        }
        if self.venues == 0 {
            return bad("venues", "must be positive".into());
        }
        if self.topics == 0 || self.topics > self.authors || self.topics > self.venues {
            return bad(
                "topics",
                format!(
                    "must be in 1..=min(authors={}, venues={})",
                    self.authors, self.venues
                ),
            );
        }
        if self.vocab_size < self.topics {
            return bad("vocab_size", format!("must be >= topics={}", self.topics));
        }
        if self.tokens_per_abstract == 0 {
            return bad("tokens_per_abstract", "must be positive".into());
        }
        if self.authors_per_paper == 0 || self.authors_per_paper > self.authors {
            return bad(
                "authors_per_paper",
                format!("must be in 1..=authors={}", self.authors),
            );
        }
        if self.activity_skew <= 0.0 {
            return bad("activity_skew", "must be positive".into());
        }
        if self.activity_floor < 0.0 {
            return bad("activity_floor", "must be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.cross_topic_noise) {
            return bad("cross_topic_noise", "must be in [0, 1)".into());
        }
        if !(0.0..=1.0).contains(&self.topic_token_affinity) {
            return bad("topic_token_affinity", "must be in [0, 1]".into());
        }
        if self.year_min > self.year_max {
            return bad("year_min", "must not exceed year_max".into());
        }
        if self.split_year <= self.year_min || self.split_year > self.year_max {
            return bad(
                "split_year",
                format!("must be in ({}, {}]", self.year_min, self.year_max),
            );
        }
        Ok(())
    }
}

/// Cumulative-weight table for Zipf-like draws over `n` ranks.
struct ZipfTable {
    cumulative: Vec<f64>,
}

impl ZipfTable {
    fn new(n: usize, exponent: f64, floor: f64) -> ZipfTable {
        let mut cumulative = Vec::with_capacity(n);
        let mut total = 0.0;
        for rank in 0..n {
            total += 1.0 / ((rank + 1) as f64).powf(exponent) + floor;
            cumulative.push(total);
        }
        ZipfTable { cumulative }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty table");
        let u = rng.gen::<f64>() * total;
        self.cumulative.partition_point(|c| *c < u).min(self.cumulative.len() - 1)
    }
}

/// Deterministically generate a planted-topic corpus and its temporal split.
pub fn generate_synthetic(cfg: &SynthConfig, seed: u64) -> Result<(HeteroGraph, CorpusSplit)> {
    cfg.validate()?;
    let mut rng = seeds::stream_rng(seed, STREAM_SYNTH, 0, 0);

    let topic_of_author: Vec<usize> = (0..cfg.authors)
        .map(|a| a * cfg.topics / cfg.authors)
        .collect();
    let topic_of_venue: Vec<usize> = (0..cfg.venues)
        .map(|v| v * cfg.topics / cfg.venues)
        .collect();
    let mut topic_authors: Vec<Vec<usize>> = vec![Vec::new(); cfg.topics];
    for (a, &t) in topic_of_author.iter().enumerate() {
        topic_authors[t].push(a);
    }
    let mut topic_venues: Vec<Vec<usize>> = vec![Vec::new(); cfg.topics];
    for (v, &t) in topic_of_venue.iter().enumerate() {
        topic_venues[t].push(v);
    }
    let zipf: Vec<ZipfTable> = topic_authors
        .iter()
        .map(|list| ZipfTable::new(list.len(), cfg.activity_skew, cfg.activity_floor))
        .collect();

    // years spread evenly over the range in paper-index order, so
    // citations (always to earlier indices) never point forward in time
    let span = (cfg.year_max - cfg.year_min + 1) as usize;
    let year_of = |p: usize| cfg.year_min + ((p * span) / cfg.papers) as i32;

    let block = cfg.vocab_size / cfg.topics;
    let mut paper_topics = Vec::with_capacity(cfg.papers);
    let mut edges: Vec<(String, String, EdgeType)> = Vec::new();
    let mut abstracts = Vec::with_capacity(cfg.papers);

    for p in 0..cfg.papers {
        let topic = rng.gen_range(0..cfg.topics);
        paper_topics.push(topic);
        let psym = format!("p{p}");

        // authors: mostly Zipf-weighted within topic, distinct
        let mut chosen: BTreeSet<usize> = BTreeSet::new();
        let mut attempts = 0;
        while chosen.len() < cfg.authors_per_paper {
            attempts += 1;
            let author = if attempts > 50 * cfg.authors_per_paper
                || rng.gen::<f64>() < cfg.cross_topic_noise
            {
                rng.gen_range(0..cfg.authors)
            } else {
                topic_authors[topic][zipf[topic].draw(&mut rng)]
            };
            chosen.insert(author);
        }
        for author in chosen {
            edges.push((format!("a{author}"), psym.clone(), EdgeType::Writes));
        }

        // venue
        let venue = if rng.gen::<f64>() < cfg.cross_topic_noise {
            rng.gen_range(0..cfg.venues)
        } else {
            let list = &topic_venues[topic];
            list[rng.gen_range(0..list.len())]
        };
        edges.push((psym.clone(), format!("v{venue}"), EdgeType::PublishesIn));

        // citations to earlier papers, preferring the same topic
        let mut cited: BTreeSet<usize> = BTreeSet::new();
        let budget = cfg.citations_per_paper.min(p);
        let mut tries = 0;
        while cited.len() < budget && tries < 20 * budget.max(1) {
            tries += 1;
            let same_topic = rng.gen::<f64>() >= cfg.cross_topic_noise;
            let q = rng.gen_range(0..p);
            if same_topic && paper_topics[q] != topic {
                continue;
            }
            cited.insert(q);
        }
        for q in cited {
            edges.push((psym.clone(), format!("p{q}"), EdgeType::Cites));
        }

        // abstract tokens from the topic's vocabulary block
        let tokens: Vec<String> = (0..cfg.tokens_per_abstract)
            .map(|_| {
                let w = if rng.gen::<f64>() < cfg.topic_token_affinity {
                    topic * block + rng.gen_range(0..block)
                } else {
                    rng.gen_range(0..cfg.vocab_size)
                };
                format!("w{w}")
            })
            .collect();
        abstracts.push((psym, year_of(p), tokens));
    }

    let mut nodes = Vec::with_capacity(cfg.authors + cfg.papers + cfg.venues);
    for a in 0..cfg.authors {
        nodes.push((format!("a{a}"), NodeType::Author));
    }
    for p in 0..cfg.papers {
        nodes.push((format!("p{p}"), NodeType::Paper));
    }
    for v in 0..cfg.venues {
        nodes.push((format!("v{v}"), NodeType::Venue));
    }

    let graph = HeteroGraph::build(nodes, edges, abstracts, 3)?;
    let split = temporal_split(&graph, cfg.split_year, seeds::derive(seed, STREAM_SPLIT, 0, 0))?;
    Ok((graph, split))
}

#[derive(Serialize, Deserialize)]
pub struct SynthMeta {
    pub config: SynthConfig,
    pub seed: u64,
}

/// Write `nodes.tsv`, `edges.tsv`, `abstracts.jsonl`, and `meta.json`.
pub fn write_dataset(
    graph: &HeteroGraph,
    cfg: &SynthConfig,
    seed: u64,
    dir: &Path,
) -> Result<()> {
    super::io::save_graph(graph, dir)?;
    let meta = SynthMeta { config: cfg.clone(), seed };
    let body = serde_json::to_string_pretty(&meta).expect("serializable");
    std::fs::write(dir.join("meta.json"), body + "\n")?;
    Ok(())
}

pub fn read_meta(dir: &Path) -> Result<SynthMeta> {
    let raw = std::fs::read_to_string(dir.join("meta.json"))?;
    serde_json::from_str(&raw)
        .map_err(|e| TapemError::Config(format!("invalid meta.json: {e}")))
}
