//! Tape-level forward passes for every model component.

use rand::Rng;

use super::{GruParams, Pooling, TapemModel};
use crate::error::{Result, TapemError};
use crate::hetgraph::{HeteroGraph, NodeId, NodeType};
use crate::numerics::{ParamId, ParamStore, Shape, Tape, Tensor, Var};

/// One GRU step: the update gate keeps the previous state,
/// `h_t = z o h_{t-1} + (1 - z) o h_hat`.
pub fn gru_step(
    tape: &mut Tape,
    store: &ParamStore,
    cell: &GruParams,
    x: Var,
    h_prev: Var,
) -> Result<Var> {
    let wz = tape.param(store, cell.wz);
    let uz = tape.param(store, cell.uz);
    let bz = tape.param(store, cell.bz);
    let wr = tape.param(store, cell.wr);
    let ur = tape.param(store, cell.ur);
    let br = tape.param(store, cell.br);
    let wh = tape.param(store, cell.wh);
    let uh = tape.param(store, cell.uh);
    let bh = tape.param(store, cell.bh);

    let gate = |w: Var, u: Var, b: Var, state: Var, tape: &mut Tape| -> Result<Var> {
        let wx = tape.matvec(w, x)?;
        let uh_ = tape.matvec(u, state)?;
        let s = tape.add(wx, uh_)?;
        tape.add(s, b)
    };
    let z_in = gate(wz, uz, bz, h_prev, tape)?;
    let z = tape.sigmoid(z_in);
    let r_in = gate(wr, ur, br, h_prev, tape)?;
    let r = tape.sigmoid(r_in);
    let rh = tape.hadamard(r, h_prev)?;
    let h_in = gate(wh, uh, bh, rh, tape)?;
    let h_hat = tape.tanh(h_in);

    let keep = tape.hadamard(z, h_prev)?;
    let hidden = match tape.value(z).shape() {
        Shape::Vector(n) => n,
        _ => unreachable!("gate outputs are vectors"),
    };
    let ones = tape.constant(Tensor::vector(vec![1.0; hidden]));
    let inv = tape.sub(ones, z)?;
    let update = tape.hadamard(inv, h_hat)?;
    tape.add(keep, update)
}

/// Run a GRU over a sequence from a zero initial state; all hidden states.
pub fn gru_sequence(
    tape: &mut Tape,
    store: &ParamStore,
    cell: &GruParams,
    inputs: &[Var],
    hidden: usize,
) -> Result<Vec<Var>> {
    let mut h = tape.constant(Tensor::zeros(Shape::Vector(hidden)));
    let mut states = Vec::with_capacity(inputs.len());
    for &x in inputs {
        h = gru_step(tape, store, cell, x, h)?;
        states.push(h);
    }
    Ok(states)
}

/// Paper content encoder: GRU over the abstract's word vectors, pooled
/// to a single K-vector.
pub fn encode_paper(
    tape: &mut Tape,
    store: &ParamStore,
    encoder: &GruParams,
    word_table: ParamId,
    token_ids: &[u32],
    pooling: Pooling,
) -> Result<Var> {
    if token_ids.is_empty() {
        return Err(TapemError::Input("cannot encode an empty token sequence".into()));
    }
    let vocab_rows = store.value(word_table).rows();
    let k = match store.value(word_table).shape() {
        Shape::Matrix(_, c) => c,
        _ => unreachable!("word table is a matrix"),
    };
    let inputs: Vec<Var> = token_ids
        .iter()
        .map(|&t| {
            if (t as usize) >= vocab_rows {
                return Err(TapemError::Input(format!(
                    "token id {t} outside vocabulary of {vocab_rows}"
                )));
            }
            Ok(tape.param_row(store, word_table, t as usize))
        })
        .collect::<Result<_>>()?;
    let states = gru_sequence(tape, store, encoder, &inputs, k)?;
    match pooling {
        Pooling::Mean => tape.mean(&states),
        Pooling::Last => Ok(*states.last().expect("non-empty")),
    }
}

/// Pair feature combination `[p; q; p o q; p - q]`.
pub fn comb(tape: &mut Tape, p: Var, q: Var) -> Result<Var> {
    let prod = tape.hadamard(p, q)?;
    let diff = tape.sub(p, q)?;
    tape.concat(&[p, q, prod, diff])
}

/// Pair embedder: two-layer MLP over `comb`, dropout on every layer
/// input, ReLU on the hidden layer only.
pub fn embed_pair<R: Rng>(
    tape: &mut Tape,
    store: &ParamStore,
    model: &TapemModel,
    p: Var,
    q: Var,
    dropout_rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<Var> {
    let h0 = comb(tape, p, q)?;
    let w1 = tape.param(store, model.pair_w1);
    let b1 = tape.param(store, model.pair_b1);
    let h0d = tape.dropout(h0, dropout_rate, training, rng)?;
    let a1 = tape.affine(w1, h0d, b1)?;
    let h1 = tape.relu(a1);
    let w2 = tape.param(store, model.pair_w2);
    let b2 = tape.param(store, model.pair_b2);
    let h1d = tape.dropout(h1, dropout_rate, training, rng)?;
    tape.affine(w2, h1d, b2)
}

/// Forward and backward GRU hidden states, both aligned to input order.
pub fn bigru_states(
    tape: &mut Tape,
    store: &ParamStore,
    fwd: &GruParams,
    bwd: &GruParams,
    inputs: &[Var],
    hidden: usize,
) -> Result<(Vec<Var>, Vec<Var>)> {
    let fwd_states = gru_sequence(tape, store, fwd, inputs, hidden)?;
    let reversed: Vec<Var> = inputs.iter().rev().copied().collect();
    let mut bwd_states = gru_sequence(tape, store, bwd, &reversed, hidden)?;
    bwd_states.reverse();
    Ok((fwd_states, bwd_states))
}

/// Context-path embedder: BiGRU, per-step linear projection, and
/// attentive pooling (uniform weights when `attention` is off).
pub fn embed_context_path(
    tape: &mut Tape,
    store: &ParamStore,
    model: &TapemModel,
    node_vectors: &[Var],
    attention: bool,
) -> Result<Var> {
    if node_vectors.len() < 2 {
        return Err(TapemError::Input(format!(
            "context path needs at least 2 nodes, got {}",
            node_vectors.len()
        )));
    }
    let d = model.dims.d;
    let (fwd, bwd) = bigru_states(tape, store, &model.path_fwd, &model.path_bwd, node_vectors, d)?;
    let proj_w = tape.param(store, model.proj_w);
    let proj_b = tape.param(store, model.proj_b);
    let states: Vec<Var> = fwd
        .iter()
        .zip(&bwd)
        .map(|(&f, &b)| {
            let cat = tape.concat(&[f, b])?;
            tape.affine(proj_w, cat, proj_b)
        })
        .collect::<Result<_>>()?;

    let attn_w = tape.param(store, model.attn_w);
    let projected: Vec<Var> = states
        .iter()
        .map(|&h| tape.matvec(attn_w, h))
        .collect::<Result<_>>()?;

    if attention {
        let key = tape.param(store, model.attn_key);
        let scores: Vec<Var> = states
            .iter()
            .map(|&h| tape.dot(key, h))
            .collect::<Result<_>>()?;
        let stacked = tape.stack_scalars(&scores)?;
        let weights = tape.softmax(stacked);
        let mut acc: Option<Var> = None;
        for (t, &y) in projected.iter().enumerate() {
            let term = tape.scale_by_index(weights, t, y)?;
            acc = Some(match acc {
                Some(a) => tape.add(a, term)?,
                None => term,
            });
        }
        Ok(acc.expect("non-empty path"))
    } else {
        tape.mean(&projected)
    }
}

/// Attention weights over a path's projected states (diagnostics/tests).
pub fn attention_weights(
    tape: &mut Tape,
    store: &ParamStore,
    model: &TapemModel,
    node_vectors: &[Var],
) -> Result<Var> {
    if node_vectors.len() < 2 {
        return Err(TapemError::Input("context path needs at least 2 nodes".into()));
    }
    let d = model.dims.d;
    let (fwd, bwd) = bigru_states(tape, store, &model.path_fwd, &model.path_bwd, node_vectors, d)?;
    let proj_w = tape.param(store, model.proj_w);
    let proj_b = tape.param(store, model.proj_b);
    let key = tape.param(store, model.attn_key);
    let scores: Vec<Var> = fwd
        .iter()
        .zip(&bwd)
        .map(|(&f, &b)| {
            let cat = tape.concat(&[f, b])?;
            let h = tape.affine(proj_w, cat, proj_b)?;
            tape.dot(key, h)
        })
        .collect::<Result<_>>()?;
    let stacked = tape.stack_scalars(&scores)?;
    Ok(tape.softmax(stacked))
}

/// Raw validity logit `pi(g)`: two-layer MLP with a ReLU hidden layer.
pub fn validity_logit(
    tape: &mut Tape,
    store: &ParamStore,
    model: &TapemModel,
    pair_embedding: Var,
) -> Result<Var> {
    let w1 = tape.param(store, model.cls_w1);
    let b1 = tape.param(store, model.cls_b1);
    let a1 = tape.affine(w1, pair_embedding, b1)?;
    let h1 = tape.relu(a1);
    let w2 = tape.param(store, model.cls_w2);
    let b2 = tape.param(store, model.cls_b2);
    tape.affine(w2, h1, b2)
}

/// Skip-gram term with negative sampling:
/// `-log sigmoid(c.x) - sum_j log sigmoid(-c.n_j)`.
pub fn baseline_pair_loss(
    tape: &mut Tape,
    center: Var,
    context: Var,
    negatives: &[Var],
) -> Result<Var> {
    let pos = tape.dot(center, context)?;
    let pos_ls = tape.log_sigmoid(pos);
    let mut loss = tape.scale(pos_ls, -1.0);
    for &n in negatives {
        let d = tape.dot(center, n)?;
        let neg = tape.scale(d, -1.0);
        let ls = tape.log_sigmoid(neg);
        let term = tape.scale(ls, -1.0);
        loss = tape.add(loss, term)?;
    }
    Ok(loss)
}

/// K-vector for any node in a context path: table rows for authors and
/// venues, the content encoder for papers.
pub fn node_vector(
    tape: &mut Tape,
    store: &ParamStore,
    model: &TapemModel,
    graph: &HeteroGraph,
    node: NodeId,
) -> Result<Var> {
    match graph.node_type(node)? {
        NodeType::Author => Ok(tape.param_row(store, model.author_table, graph.type_row(node))),
        NodeType::Venue => Ok(tape.param_row(store, model.venue_table, graph.type_row(node))),
        NodeType::Paper => encode_paper(
            tape,
            store,
            &model.encoder,
            model.word_table,
            graph.paper_token_ids(node)?,
            model.pooling,
        ),
    }
}
