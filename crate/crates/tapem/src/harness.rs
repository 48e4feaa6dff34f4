//! Gradient-verification harness: builds a small fixed instance and runs
//! the finite-difference check over every parameter group.

use rand::Rng;

use crate::error::{Result, TapemError};
use crate::hetgraph::{EdgeType, HeteroGraph, NodeType};
use crate::model::ops::{baseline_pair_loss, encode_paper};
use crate::model::{BaselineModel, Dims, EntityCounts, ModelKind, Pooling, TapemModel};
use crate::numerics::gradcheck::{grad_check, GradCheckReport};
use crate::numerics::{ParamId, ParamStore, Tape};
use crate::objective::loss::{instance_loss, InstanceInputs};
use crate::objective::{ContextPathPool, TrainingConfig};
use crate::seeds::{self, STREAM_GRADCHECK};
use crate::walker::{extract_all, generate_walks, MetaPath};

/// Three papers, four authors, two venues; enough structure for walks
/// that cover every component.
pub fn toy_graph() -> HeteroGraph {
    let nodes = vec![
        ("a0".into(), NodeType::Author),
        ("a1".into(), NodeType::Author),
        ("a2".into(), NodeType::Author),
        ("a3".into(), NodeType::Author),
        ("p0".into(), NodeType::Paper),
        ("p1".into(), NodeType::Paper),
        ("p2".into(), NodeType::Paper),
        ("v0".into(), NodeType::Venue),
        ("v1".into(), NodeType::Venue),
    ];
    let w = EdgeType::Writes;
    let edges = vec![
        ("a0".into(), "p0".into(), w),
        ("a1".into(), "p0".into(), w),
        ("a1".into(), "p1".into(), w),
        ("a2".into(), "p1".into(), w),
        ("a2".into(), "p2".into(), w),
        ("a3".into(), "p2".into(), w),
        ("p0".into(), "v0".into(), EdgeType::PublishesIn),
        ("p1".into(), "v0".into(), EdgeType::PublishesIn),
        ("p2".into(), "v1".into(), EdgeType::PublishesIn),
        ("p1".into(), "p0".into(), EdgeType::Cites),
        ("p2".into(), "p1".into(), EdgeType::Cites),
    ];
    let toks = |s: &[&str]| s.iter().map(|t| t.to_string()).collect::<Vec<_>>();
    let abstracts = vec![
        ("p0".into(), 2010, toks(&["graphs", "walks", "pairs", "walks"])),
        ("p1".into(), 2011, toks(&["walks", "topics", "pairs"])),
        ("p2".into(), 2012, toks(&["topics", "graphs", "topics", "pairs"])),
    ];
    HeteroGraph::build(nodes, edges, abstracts, 1).expect("toy graph is valid")
}

fn toy_config() -> TrainingConfig {
    TrainingConfig {
        k: 6,
        d: 5,
        pair_hidden: 7,
        classifier_hidden: 7,
        dropout: 0.0,
        ..TrainingConfig::default()
    }
}

fn group_of(name: &str) -> &'static str {
    if name.starts_with("enc.") {
        "paper encoder"
    } else if name.starts_with("pair.") {
        "pair MLP"
    } else if name.starts_with("path.") {
        "BiGRU"
    } else if name.starts_with("attn.") {
        "attention"
    } else if name.starts_with("cls.") {
        "classifier"
    } else if name.starts_with("emb.") {
        "embeddings"
    } else {
        "baseline"
    }
}

pub const TAPEM_GROUPS: [&str; 6] = [
    "paper encoder",
    "pair MLP",
    "BiGRU",
    "attention",
    "classifier",
    "embeddings",
];

/// Max relative error per parameter group on the toy instance.
pub struct GroupReport {
    pub group: String,
    pub report: GradCheckReport,
}

/// Check the full pair-model loss (context + validity + metric terms)
/// against central differences, group by group.
pub fn gradcheck_tapem(seed: u64, probes_per_group: usize) -> Result<Vec<GroupReport>> {
    let graph = toy_graph();
    let apa = MetaPath::parse("APA")?;
    let walks = generate_walks(&graph, &apa, 3, 8, seed)?;
    let instances = extract_all(&walks, 3, &graph)?;
    let pool = ContextPathPool::from_instances(&instances);
    if pool.is_empty() {
        return Err(TapemError::Contract("toy walks produced no instances".into()));
    }
    // a positive instance with a long context path exercises the
    // encoder inside the path and the metric loss
    let inst = instances
        .iter()
        .filter(|i| i.label)
        .max_by_key(|i| i.path.len())
        .expect("toy graph has positive instances")
        .clone();
    let cfg = toy_config();
    let mut model = TapemModel::new(
        ModelKind::Tapem,
        Dims {
            k: cfg.k,
            d: cfg.d,
            pair_hidden: cfg.pair_hidden,
            classifier_hidden: cfg.classifier_hidden,
        },
        Pooling::Mean,
        EntityCounts {
            authors: graph.authors().len(),
            venues: graph.venues().len(),
            vocab: graph.vocab().len(),
        },
        seed,
    );
    let mut store = std::mem::take(&mut model.store);

    let loss = |store: &mut ParamStore, compute_grads: bool| -> Result<f64> {
        let mut tape = Tape::new();
        // fixed stream: every evaluation draws identical negatives
        let mut rng = seeds::stream_rng(seed, STREAM_GRADCHECK, 0, 1);
        let inputs = InstanceInputs {
            paper: inst.paper,
            author: inst.author,
            path: &inst.path,
            label: inst.label,
        };
        let out = instance_loss(
            &mut tape, store, &model, &graph, &inputs, &pool, &cfg, false, &mut rng,
        )?;
        let value = tape.scalar_value(out.total);
        if compute_grads {
            let grads = tape.backward(out.total)?;
            store.accumulate(&grads);
        }
        Ok(value)
    };

    let mut out = Vec::new();
    for group in TAPEM_GROUPS {
        let ids: Vec<ParamId> = store
            .ids()
            .filter(|id| group_of(store.name(*id)) == group)
            .collect();
        let mut rng = seeds::stream_rng(seed, STREAM_GRADCHECK, 1, group.len() as u64);
        let report = grad_check(&loss, &mut store, &ids, probes_per_group, 1e-5, &mut rng)?;
        out.push(GroupReport { group: group.to_string(), report });
    }
    Ok(out)
}

/// Check the skip-gram baseline loss (encoder included) the same way.
pub fn gradcheck_baseline(seed: u64, probes: usize) -> Result<GroupReport> {
    let graph = toy_graph();
    let cfg = toy_config();
    let mut model = BaselineModel::new(
        cfg.k,
        Pooling::Mean,
        EntityCounts {
            authors: graph.authors().len(),
            venues: graph.venues().len(),
            vocab: graph.vocab().len(),
        },
        graph.papers().len(),
        seed,
    );
    let mut store = std::mem::take(&mut model.store);

    let center = graph.node_by_symbol("p1")?;
    let contexts = [
        graph.node_by_symbol("a1")?,
        graph.node_by_symbol("a2")?,
        graph.node_by_symbol("v0")?,
        graph.node_by_symbol("p0")?,
    ];
    let loss = |store: &mut ParamStore, compute_grads: bool| -> Result<f64> {
        let mut tape = Tape::new();
        let mut rng = seeds::stream_rng(seed, STREAM_GRADCHECK, 2, 1);
        let center_vec = encode_paper(
            &mut tape,
            store,
            &model.encoder,
            model.word_table,
            graph.paper_token_ids(center)?,
            model.pooling,
        )?;
        let mut total: Option<crate::numerics::Var> = None;
        for &context in &contexts {
            let (table, row) = model.context_row(&graph, context)?;
            let ctx_vec = tape.param_row(store, table, row);
            let negatives: Vec<crate::numerics::Var> = (0..2)
                .map(|_| {
                    let authors = graph.authors();
                    let pick = authors[rng.gen_range(0..authors.len())];
                    let (t, r) = model.context_row(&graph, pick).expect("author row");
                    tape.param_row(store, t, r)
                })
                .collect();
            let term = baseline_pair_loss(&mut tape, center_vec, ctx_vec, &negatives)?;
            total = Some(match total {
                Some(acc) => tape.add(acc, term)?,
                None => term,
            });
        }
        let total = total.expect("contexts present");
        let value = tape.scalar_value(total);
        if compute_grads {
            let grads = tape.backward(total)?;
            store.accumulate(&grads);
        }
        Ok(value)
    };

    let ids: Vec<ParamId> = store.ids().collect();
    let mut rng = seeds::stream_rng(seed, STREAM_GRADCHECK, 3, 0);
    let report = grad_check(&loss, &mut store, &ids, probes, 1e-5, &mut rng)?;
    Ok(GroupReport { group: "baseline".to_string(), report })
}
