//! Epoch loops for the pair model and the skip-gram baseline.
//!
//! Batch gradients are computed in parallel with one RNG stream per
//! instance and reduced in instance order, so checkpoints are identical
//! for any thread count.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use super::loss::{instance_loss, InstanceInputs};
use super::{ContextPathPool, TrainStats, TrainingConfig};
use crate::error::{Result, TapemError};
use crate::hetgraph::{HeteroGraph, NodeId, NodeType};
use crate::model::ops::{baseline_pair_loss, encode_paper};
use crate::model::{BaselineModel, TapemModel};
use crate::numerics::{GradMap, Tape};
use crate::par;
use crate::seeds::{self, STREAM_INSTANCE, STREAM_SHUFFLE};
use crate::walker::{PairPathInstance, Walk};

struct WorkerOutput {
    grads: GradMap,
    ctx: f64,
    pv: f64,
    metric: f64,
    total: f64,
}

/// Totals over an epoch, kept as running sums so the decomposition
/// identity `total = ctx + pv_weight*pv + metric_weight*metric` is exact
/// up to float accumulation.
#[derive(Default)]
struct LossSums {
    ctx: f64,
    pv: f64,
    metric: f64,
    total: f64,
    count: usize,
}

/// One pass over the extracted pair-path instances: shuffle, compute
/// per-instance gradients, apply one Adam step per mini-batch.
pub fn train_epoch(
    model: &mut TapemModel,
    graph: &HeteroGraph,
    instances: &[PairPathInstance],
    pool: &ContextPathPool,
    cfg: &TrainingConfig,
    epoch: usize,
) -> Result<TrainStats> {
    let start = Instant::now();
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut shuffle_rng = seeds::stream_rng(cfg.seed, STREAM_SHUFFLE, epoch as u64, 0);
    order.shuffle(&mut shuffle_rng);

    let adam = cfg.adam();
    let mut sums = LossSums::default();
    for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
        let base = batch_idx * cfg.batch_size;
        let frozen: &TapemModel = model;
        let outputs: Vec<Result<WorkerOutput>> = par::map_indexed(batch, |offset, &inst_idx| {
            let inst = &instances[inst_idx];
            let mut rng =
                seeds::stream_rng(cfg.seed, STREAM_INSTANCE, epoch as u64, (base + offset) as u64);
            let mut tape = Tape::new();
            let inputs = InstanceInputs {
                paper: inst.paper,
                author: inst.author,
                path: &inst.path,
                label: inst.label,
            };
            let loss =
                instance_loss(&mut tape, &frozen.store, frozen, graph, &inputs, pool, cfg, true, &mut rng)?;
            let total = tape.scalar_value(loss.total);
            if !total.is_finite() {
                return Err(TapemError::Numeric(format!(
                    "non-finite loss on instance ({}, {}) at epoch {epoch}",
                    graph.symbol(inst.paper),
                    graph.symbol(inst.author)
                )));
            }
            let grads = tape.backward(loss.total)?;
            Ok(WorkerOutput { grads, ctx: loss.ctx, pv: loss.pv, metric: loss.metric, total })
        });
        for out in outputs {
            let out = out?;
            model.store.accumulate(&out.grads);
            sums.ctx += out.ctx;
            sums.pv += out.pv;
            sums.metric += out.metric;
            sums.total += out.total;
            sums.count += 1;
        }
        model.store.adam_step(&adam)?;
        model.store.zero_grads();
    }

    let n = sums.count.max(1) as f64;
    Ok(TrainStats {
        epoch,
        mean_ctx: sums.ctx / n,
        mean_pv: sums.pv / n,
        mean_metric: sums.metric / n,
        mean_total: sums.total / n,
        instances: sums.count,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}

/// A walk position with its in-window context nodes.
struct SkipgramCenter {
    center: NodeId,
    contexts: Vec<NodeId>,
}

fn skipgram_centers(walks: &[Walk], tau: usize) -> Vec<SkipgramCenter> {
    let mut centers = Vec::new();
    for w in walks {
        for (i, &center) in w.nodes.iter().enumerate() {
            let lo = i.saturating_sub(tau);
            let hi = (i + tau).min(w.nodes.len() - 1);
            let contexts: Vec<NodeId> = (lo..=hi).filter(|&j| j != i).map(|j| w.nodes[j]).collect();
            if !contexts.is_empty() {
                centers.push(SkipgramCenter { center, contexts });
            }
        }
    }
    centers
}

fn nodes_of_type<'a>(graph: &'a HeteroGraph, ty: NodeType) -> &'a [NodeId] {
    match ty {
        NodeType::Author => graph.authors(),
        NodeType::Paper => graph.papers(),
        NodeType::Venue => graph.venues(),
    }
}

/// One skip-gram pass over the walks with window `tau`: every in-window
/// (center, context) pair contributes a negative-sampling term with
/// `negative_contexts` negatives drawn from the context node's type.
pub fn train_baseline_epoch(
    model: &mut BaselineModel,
    graph: &HeteroGraph,
    walks: &[Walk],
    cfg: &TrainingConfig,
    epoch: usize,
) -> Result<TrainStats> {
    let start = Instant::now();
    let mut centers = skipgram_centers(walks, cfg.tau);
    let mut shuffle_rng = seeds::stream_rng(cfg.seed, STREAM_SHUFFLE, epoch as u64, 1);
    centers.shuffle(&mut shuffle_rng);

    let adam = cfg.adam();
    let mut sums = LossSums::default();
    for (batch_idx, batch) in centers.chunks(cfg.batch_size).enumerate() {
        let base = batch_idx * cfg.batch_size;
        let frozen: &BaselineModel = model;
        let outputs: Vec<Result<(GradMap, f64, usize)>> =
            par::map_indexed(batch, |offset, item| {
                let mut rng = seeds::stream_rng(
                    cfg.seed,
                    STREAM_INSTANCE,
                    epoch as u64 | (1 << 63),
                    (base + offset) as u64,
                );
                let mut tape = Tape::new();
                let store = &frozen.store;
                let center_vec = match graph.node_type(item.center)? {
                    NodeType::Paper => encode_paper(
                        &mut tape,
                        store,
                        &frozen.encoder,
                        frozen.word_table,
                        graph.paper_token_ids(item.center)?,
                        frozen.pooling,
                    )?,
                    NodeType::Author => {
                        tape.param_row(store, frozen.center_author, graph.type_row(item.center))
                    }
                    NodeType::Venue => {
                        tape.param_row(store, frozen.center_venue, graph.type_row(item.center))
                    }
                };
                let mut total: Option<crate::numerics::Var> = None;
                let mut pair_count = 0usize;
                for &context in &item.contexts {
                    let ctx_ty = graph.node_type(context)?;
                    let (ctx_table, ctx_row) = frozen.context_row(graph, context)?;
                    let ctx_vec = tape.param_row(store, ctx_table, ctx_row);
                    let candidates = nodes_of_type(graph, ctx_ty);
                    let negatives: Vec<crate::numerics::Var> = (0..cfg.negative_contexts)
                        .map(|_| {
                            let mut pick = candidates[rng.gen_range(0..candidates.len())];
                            for _ in 0..10 {
                                if pick != context {
                                    break;
                                }
                                pick = candidates[rng.gen_range(0..candidates.len())];
                            }
                            let (t, r) = frozen.context_row(graph, pick).expect("typed pick");
                            tape.param_row(store, t, r)
                        })
                        .collect();
                    let term = baseline_pair_loss(&mut tape, center_vec, ctx_vec, &negatives)?;
                    total = Some(match total {
                        Some(acc) => tape.add(acc, term)?,
                        None => term,
                    });
                    pair_count += 1;
                }
                let total = total.expect("centers have contexts");
                let value = tape.scalar_value(total);
                if !value.is_finite() {
                    return Err(TapemError::Numeric(format!(
                        "non-finite skip-gram loss at center {} epoch {epoch}",
                        graph.symbol(item.center)
                    )));
                }
                let grads = tape.backward(total)?;
                Ok((grads, value, pair_count))
            });
        for out in outputs {
            let (grads, value, pairs) = out?;
            model.store.accumulate(&grads);
            sums.ctx += value;
            sums.total += value;
            sums.count += pairs;
        }
        model.store.adam_step(&adam)?;
        model.store.zero_grads();
    }

    let n = sums.count.max(1) as f64;
    Ok(TrainStats {
        epoch,
        mean_ctx: sums.ctx / n,
        mean_pv: 0.0,
        mean_metric: 0.0,
        mean_total: sums.total / n,
        instances: sums.count,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hetgraph::{generate_synthetic, SynthConfig};
    use crate::model::{Dims, EntityCounts, ModelKind, Pooling};
    use crate::walker::{extract_all, generate_walks, MetaPath};

    fn toy_setup() -> (HeteroGraph, Vec<Walk>, Vec<PairPathInstance>, ContextPathPool) {
        let cfg = SynthConfig {
            authors: 12,
            papers: 20,
            venues: 2,
            topics: 2,
            vocab_size: 40,
            tokens_per_abstract: 5,
            ..SynthConfig::default()
        };
        let (graph, _) = generate_synthetic(&cfg, 3).unwrap();
        let apa = MetaPath::parse("APA").unwrap();
        let walks = generate_walks(&graph, &apa, 2, 8, 3).unwrap();
        let instances = extract_all(&walks, 3, &graph).unwrap();
        let pool = ContextPathPool::from_instances(&instances);
        (graph, walks, instances, pool)
    }

    fn tiny_cfg() -> TrainingConfig {
        TrainingConfig {
            k: 6,
            d: 5,
            pair_hidden: 7,
            classifier_hidden: 7,
            batch_size: 16,
            dropout: 0.1,
            ..TrainingConfig::default()
        }
    }

    fn tiny_model(graph: &HeteroGraph, cfg: &TrainingConfig) -> TapemModel {
        TapemModel::new(
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
            cfg.seed,
        )
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let (graph, _walks, instances, pool) = toy_setup();
        let cfg = TrainingConfig { learning_rate: 0.0, ..tiny_cfg() };
        let mut model = tiny_model(&graph, &cfg);
        let before: Vec<_> = model
            .store
            .ids()
            .map(|id| model.store.value(id).clone())
            .collect();
        let stats =
            train_epoch(&mut model, &graph, &instances[..8], &pool, &cfg, 0).unwrap();
        assert_eq!(stats.instances, 8);
        assert!(stats.mean_total > 0.0);
        for (id, b) in model.store.ids().zip(before) {
            assert_eq!(model.store.value(id), &b);
        }
    }

    #[test]
    fn loss_decreases_on_a_tiny_overfittable_set() {
        let (graph, _walks, instances, pool) = toy_setup();
        let cfg = TrainingConfig { learning_rate: 5e-3, dropout: 0.0, ..tiny_cfg() };
        let mut model = tiny_model(&graph, &cfg);
        let subset = &instances[..10.min(instances.len())];
        let first = train_epoch(&mut model, &graph, subset, &pool, &cfg, 0).unwrap();
        let mut last = first.clone();
        for epoch in 1..20 {
            last = train_epoch(&mut model, &graph, subset, &pool, &cfg, epoch).unwrap();
        }
        assert!(
            last.mean_total < first.mean_total,
            "epoch 20 mean {} should undercut epoch 1 mean {}",
            last.mean_total,
            first.mean_total
        );
    }

    #[test]
    fn identical_seeds_give_identical_stats_and_parameters() {
        let (graph, _walks, instances, pool) = toy_setup();
        let cfg = tiny_cfg();
        let run = || {
            let mut model = tiny_model(&graph, &cfg);
            let mut all = Vec::new();
            for epoch in 0..2 {
                all.push(
                    train_epoch(&mut model, &graph, &instances[..12], &pool, &cfg, epoch).unwrap(),
                );
            }
            let params: Vec<Vec<f64>> = model
                .store
                .ids()
                .map(|id| model.store.value(id).data().to_vec())
                .collect();
            (all, params)
        };
        let (s1, p1) = run();
        let (s2, p2) = run();
        for (a, b) in s1.iter().zip(&s2) {
            assert_eq!(
                (a.mean_ctx, a.mean_pv, a.mean_metric, a.mean_total, a.instances),
                (b.mean_ctx, b.mean_pv, b.mean_metric, b.mean_total, b.instances)
            );
        }
        assert_eq!(p1, p2);
    }

    #[test]
    fn decomposition_identity_holds() {
        let (graph, _walks, instances, pool) = toy_setup();
        let cfg = tiny_cfg();
        let mut model = tiny_model(&graph, &cfg);
        let stats = train_epoch(&mut model, &graph, &instances[..16], &pool, &cfg, 0).unwrap();
        let recomposed = stats.mean_ctx
            + cfg.pv_weight * stats.mean_pv
            + cfg.metric_weight * stats.mean_metric;
        assert!(
            (stats.mean_total - recomposed).abs() < 1e-9,
            "total {} vs parts {}",
            stats.mean_total,
            recomposed
        );
    }

    #[test]
    fn empty_walks_make_a_zero_instance_baseline_epoch() {
        let (graph, _walks, _instances, _pool) = toy_setup();
        let cfg = tiny_cfg();
        let mut model = BaselineModel::new(
            cfg.k,
            Pooling::Mean,
            EntityCounts {
                authors: graph.authors().len(),
                venues: graph.venues().len(),
                vocab: graph.vocab().len(),
            },
            graph.papers().len(),
            cfg.seed,
        );
        let before: Vec<_> = model
            .store
            .ids()
            .map(|id| model.store.value(id).clone())
            .collect();
        let stats = train_baseline_epoch(&mut model, &graph, &[], &cfg, 0).unwrap();
        assert_eq!(stats.instances, 0);
        for (id, b) in model.store.ids().zip(before) {
            assert_eq!(model.store.value(id), &b);
        }
    }

    #[test]
    fn baseline_loss_decreases_on_toy_walks() {
        let (graph, walks, _instances, _pool) = toy_setup();
        let cfg = TrainingConfig { learning_rate: 5e-3, ..tiny_cfg() };
        let mut model = BaselineModel::new(
            cfg.k,
            Pooling::Mean,
            EntityCounts {
                authors: graph.authors().len(),
                venues: graph.venues().len(),
                vocab: graph.vocab().len(),
            },
            graph.papers().len(),
            cfg.seed,
        );
        let subset = &walks[..4.min(walks.len())];
        let first = train_baseline_epoch(&mut model, &graph, subset, &cfg, 0).unwrap();
        let mut last = first.clone();
        for epoch in 1..12 {
            last = train_baseline_epoch(&mut model, &graph, subset, &cfg, epoch).unwrap();
        }
        assert!(last.mean_total < first.mean_total);
    }
}
