//! Tape-level loss terms and the full per-instance objective.

use rand::Rng;

use super::{ContextPathPool, TrainingConfig};
use crate::error::{Result, TapemError};
use crate::hetgraph::{HeteroGraph, NodeId};
use crate::model::ops::{self, node_vector};
use crate::model::{ModelKind, TapemModel};
use crate::numerics::{Tape, Var};

/// Negative-sampling context loss:
/// `-log sigmoid(g.f(c)) - sum_j log sigmoid(-g.f(c_rand_j))`.
pub fn loss_ctx(tape: &mut Tape, g: Var, positive: Var, negatives: &[Var]) -> Result<Var> {
    let pos = tape.dot(g, positive)?;
    let pos_ls = tape.log_sigmoid(pos);
    let mut loss = tape.scale(pos_ls, -1.0);
    for &f_neg in negatives {
        let d = tape.dot(g, f_neg)?;
        let neg = tape.scale(d, -1.0);
        let ls = tape.log_sigmoid(neg);
        let term = tape.scale(ls, -1.0);
        loss = tape.add(loss, term)?;
    }
    Ok(loss)
}

/// Binary cross-entropy over the validity logit:
/// `-[y log sigmoid(l) + (1-y) log sigmoid(-l)]`.
pub fn loss_pv(tape: &mut Tape, logit: Var, label: bool) -> Result<Var> {
    if tape.value(logit).len() != 1 {
        return Err(TapemError::Shape {
            op: "loss_pv".into(),
            left: tape.value(logit).shape().to_string(),
            right: "[1]".into(),
        });
    }
    let term = if label {
        tape.log_sigmoid(logit)
    } else {
        let neg = tape.scale(logit, -1.0);
        tape.log_sigmoid(neg)
    };
    Ok(tape.scale(term, -1.0))
}

/// Hinge triplet loss over squared Euclidean distances:
/// `max(0, xi + |p - q_true|^2 - |p - q_neg|^2)`.
pub fn loss_metric(tape: &mut Tape, p: Var, q_true: Var, q_neg: Var, xi: f64) -> Result<Var> {
    if xi <= 0.0 {
        return Err(TapemError::Config(format!("margin {xi} must be positive")));
    }
    let d_true = tape.sub(p, q_true)?;
    let sq_true = tape.dot(d_true, d_true)?;
    let d_neg = tape.sub(p, q_neg)?;
    let sq_neg = tape.dot(d_neg, d_neg)?;
    let gap = tape.sub(sq_true, sq_neg)?;
    let shifted = tape.add_const(gap, xi);
    Ok(tape.relu(shifted))
}

/// The loss nodes and detached values of one training instance.
pub struct InstanceLoss {
    pub total: Var,
    pub ctx: f64,
    pub pv: f64,
    pub metric: f64,
}

/// Inputs describing one pair-path training example.
pub struct InstanceInputs<'a> {
    pub paper: NodeId,
    pub author: NodeId,
    pub path: &'a [NodeId],
    pub label: bool,
}

/// Embed a context path given the model, reusing precomputed endpoint
/// vectors when provided.
fn path_embedding(
    tape: &mut Tape,
    store: &crate::numerics::ParamStore,
    model: &TapemModel,
    graph: &HeteroGraph,
    path: &[NodeId],
    endpoints: Option<(Var, Var)>,
) -> Result<Var> {
    let mut vecs = Vec::with_capacity(path.len());
    for (i, &node) in path.iter().enumerate() {
        let v = match (i, endpoints) {
            (0, Some((first, _))) => first,
            (i, Some((_, last))) if i == path.len() - 1 => last,
            _ => node_vector(tape, store, model, graph, node)?,
        };
        vecs.push(v);
    }
    ops::embed_context_path(tape, store, model, &vecs, model.attention_enabled())
}

/// Build the full per-instance objective
/// `L_ctx + pv_weight * L_pv + metric_weight * L_metric` on one tape.
///
/// The metric term applies only to valid pairs, contrasting the true
/// author against a uniformly sampled non-author.
pub fn instance_loss<R: Rng>(
    tape: &mut Tape,
    store: &crate::numerics::ParamStore,
    model: &TapemModel,
    graph: &HeteroGraph,
    inst: &InstanceInputs<'_>,
    pool: &ContextPathPool,
    cfg: &TrainingConfig,
    training: bool,
    rng: &mut R,
) -> Result<InstanceLoss> {
    let p_v = ops::encode_paper(
        tape,
        store,
        &model.encoder,
        model.word_table,
        graph.paper_token_ids(inst.paper)?,
        model.pooling,
    )?;
    let q_u = tape.param_row(store, model.author_table, graph.type_row(inst.author));
    let g = ops::embed_pair(tape, store, model, p_v, q_u, cfg.dropout, training, rng)?;

    let f_pos = path_embedding(tape, store, model, graph, inst.path, Some((p_v, q_u)))?;
    let neg_idx =
        pool.sample_negative_paths(cfg.negative_contexts, (inst.paper, inst.author), rng)?;
    let f_negs: Vec<Var> = neg_idx
        .iter()
        .map(|&i| {
            let (_, _, path) = pool.entry(i);
            path_embedding(tape, store, model, graph, path, None)
        })
        .collect::<Result<_>>()?;

    let ctx = loss_ctx(tape, g, f_pos, &f_negs)?;

    let logit = match model.kind {
        ModelKind::TapemNpv => tape.dot(p_v, q_u)?,
        _ => ops::validity_logit(tape, store, model, g)?,
    };
    let pv = loss_pv(tape, logit, inst.label)?;

    let mut total = ctx;
    if cfg.pv_weight == 1.0 {
        total = tape.add(total, pv)?;
    } else {
        let weighted = tape.scale(pv, cfg.pv_weight);
        total = tape.add(total, weighted)?;
    }

    let mut metric_value = 0.0;
    if inst.label && cfg.metric_weight > 0.0 && cfg.metric_negatives > 0 {
        for _ in 0..cfg.metric_negatives {
            let q_neg_node = sample_non_author(graph, inst.paper, rng)?;
            let q_neg = tape.param_row(store, model.author_table, graph.type_row(q_neg_node));
            let m = loss_metric(tape, p_v, q_u, q_neg, cfg.margin)?;
            metric_value += tape.scalar_value(m);
            let weighted = tape.scale(m, cfg.metric_weight);
            total = tape.add(total, weighted)?;
        }
    }

    Ok(InstanceLoss {
        total,
        ctx: tape.scalar_value(ctx),
        pv: tape.scalar_value(pv),
        metric: metric_value,
    })
}

/// Uniform author that did not write `paper`; falls back to any author
/// when every author wrote it.
fn sample_non_author<R: Rng>(graph: &HeteroGraph, paper: NodeId, rng: &mut R) -> Result<NodeId> {
    let authors = graph.authors();
    if authors.is_empty() {
        return Err(TapemError::Contract("graph has no authors".into()));
    }
    for _ in 0..100 {
        let candidate = authors[rng.gen_range(0..authors.len())];
        if !graph.has_authorship(paper, candidate)? {
            return Ok(candidate);
        }
    }
    Ok(authors[rng.gen_range(0..authors.len())])
}
