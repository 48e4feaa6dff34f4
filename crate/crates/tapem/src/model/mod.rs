//! Model parameters and forward passes: paper encoder, pair embedder,
//! context-path embedder with attentive pooling, pair validity classifier,
//! and the heterogeneous skip-gram baseline.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TapemError};
use crate::hetgraph::{HeteroGraph, NodeId, NodeType};
use crate::numerics::{ParamId, ParamStore, Shape, Tensor};
use crate::seeds::{self, STREAM_INIT};

pub mod checkpoint;
pub mod ops;

pub use ops::{
    baseline_pair_loss, bigru_states, comb, embed_context_path, embed_pair, encode_paper,
    validity_logit,
};

/// Pooling over the paper encoder's hidden states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Mean,
    Last,
}

/// Which model a checkpoint holds; ablations share the full architecture.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Tapem,
    /// Pair validity replaced by a paper-author dot product.
    TapemNpv,
    /// Attentive pooling replaced by uniform pooling.
    TapemNoAttn,
    Baseline,
}

impl ModelKind {
    pub fn parse(s: &str) -> Result<ModelKind> {
        match s {
            "tapem" => Ok(ModelKind::Tapem),
            "tapem-npv" => Ok(ModelKind::TapemNpv),
            "tapem-no-attn" => Ok(ModelKind::TapemNoAttn),
            "baseline" => Ok(ModelKind::Baseline),
            _ => Err(TapemError::Config(format!("unknown model kind {s}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Tapem => "tapem",
            ModelKind::TapemNpv => "tapem-npv",
            ModelKind::TapemNoAttn => "tapem-no-attn",
            ModelKind::Baseline => "baseline",
        }
    }
}

/// Layer widths shared by the model components.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// Node embedding dimension.
    pub k: usize,
    /// Pair and path embedding dimension.
    pub d: usize,
    /// Hidden width of the pair MLP.
    pub pair_hidden: usize,
    /// Hidden width of the validity classifier.
    pub classifier_hidden: usize,
}

/// Entity counts the tables are sized for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityCounts {
    pub authors: usize,
    pub venues: usize,
    pub vocab: usize,
}

/// Parameter handles of one GRU cell.
#[derive(Clone, Copy, Debug)]
pub struct GruParams {
    pub wz: ParamId,
    pub uz: ParamId,
    pub bz: ParamId,
    pub wr: ParamId,
    pub ur: ParamId,
    pub br: ParamId,
    pub wh: ParamId,
    pub uh: ParamId,
    pub bh: ParamId,
}

fn init_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let bound = 1.0 / (cols as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    Tensor::matrix(rows, cols, data).expect("sized buffer")
}

fn init_embedding<R: Rng>(rows: usize, k: usize, rng: &mut R) -> Tensor {
    let bound = 0.5 / k as f64;
    let data = (0..rows * k).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::matrix(rows, k, data).expect("sized buffer")
}

fn register_gru<R: Rng>(
    store: &mut ParamStore,
    prefix: &str,
    input: usize,
    hidden: usize,
    rng: &mut R,
) -> GruParams {
    let mut mat = |name: &str, r: usize, c: usize, rng: &mut R| {
        store.add(&format!("{prefix}.{name}"), init_matrix(r, c, rng))
    };
    let wz = mat("wz", hidden, input, rng);
    let uz = mat("uz", hidden, hidden, rng);
    let wr = mat("wr", hidden, input, rng);
    let ur = mat("ur", hidden, hidden, rng);
    let wh = mat("wh", hidden, input, rng);
    let uh = mat("uh", hidden, hidden, rng);
    let bz = store.add(&format!("{prefix}.bz"), Tensor::zeros(Shape::Vector(hidden)));
    let br = store.add(&format!("{prefix}.br"), Tensor::zeros(Shape::Vector(hidden)));
    let bh = store.add(&format!("{prefix}.bh"), Tensor::zeros(Shape::Vector(hidden)));
    GruParams { wz, uz, bz, wr, ur, br, wh, uh, bh }
}

/// All trainable tensors of the pair-embedding model.
#[derive(Clone, Debug)]
pub struct TapemModel {
    pub store: ParamStore,
    pub dims: Dims,
    pub kind: ModelKind,
    pub pooling: Pooling,
    pub counts: EntityCounts,
    pub author_table: ParamId,
    pub venue_table: ParamId,
    pub word_table: ParamId,
    pub encoder: GruParams,
    pub path_fwd: GruParams,
    pub path_bwd: GruParams,
    pub proj_w: ParamId,
    pub proj_b: ParamId,
    pub attn_key: ParamId,
    pub attn_w: ParamId,
    pub pair_w1: ParamId,
    pub pair_b1: ParamId,
    pub pair_w2: ParamId,
    pub pair_b2: ParamId,
    pub cls_w1: ParamId,
    pub cls_b1: ParamId,
    pub cls_w2: ParamId,
    pub cls_b2: ParamId,
}

impl TapemModel {
    pub fn new(
        kind: ModelKind,
        dims: Dims,
        pooling: Pooling,
        counts: EntityCounts,
        seed: u64,
    ) -> TapemModel {
        assert_ne!(kind.as_str(), "baseline", "use BaselineModel for the baseline");
        let mut rng = seeds::stream_rng(seed, STREAM_INIT, 0, 0);
        let mut store = ParamStore::new();
        let k = dims.k;
        let d = dims.d;
        let author_table =
            store.add_row_sparse("emb.author", init_embedding(counts.authors, k, &mut rng));
        let venue_table =
            store.add_row_sparse("emb.venue", init_embedding(counts.venues.max(1), k, &mut rng));
        let word_table =
            store.add_row_sparse("emb.word", init_embedding(counts.vocab, k, &mut rng));
        let encoder = register_gru(&mut store, "enc", k, k, &mut rng);
        let path_fwd = register_gru(&mut store, "path.fwd", k, d, &mut rng);
        let path_bwd = register_gru(&mut store, "path.bwd", k, d, &mut rng);
        let proj_w = store.add("path.proj.w", init_matrix(d, 2 * d, &mut rng));
        let proj_b = store.add("path.proj.b", Tensor::zeros(Shape::Vector(d)));
        let attn_key = store.add("attn.key", {
            let bound = 1.0 / (d as f64).sqrt();
            Tensor::vector((0..d).map(|_| rng.gen_range(-bound..bound)).collect())
        });
        let attn_w = store.add("attn.w", init_matrix(d, d, &mut rng));
        let pair_w1 = store.add("pair.w1", init_matrix(dims.pair_hidden, 4 * k, &mut rng));
        let pair_b1 = store.add("pair.b1", Tensor::zeros(Shape::Vector(dims.pair_hidden)));
        let pair_w2 = store.add("pair.w2", init_matrix(d, dims.pair_hidden, &mut rng));
        let pair_b2 = store.add("pair.b2", Tensor::zeros(Shape::Vector(d)));
        let cls_w1 = store.add("cls.w1", init_matrix(dims.classifier_hidden, d, &mut rng));
        let cls_b1 = store.add("cls.b1", Tensor::zeros(Shape::Vector(dims.classifier_hidden)));
        let cls_w2 = store.add("cls.w2", init_matrix(1, dims.classifier_hidden, &mut rng));
        let cls_b2 = store.add("cls.b2", Tensor::zeros(Shape::Vector(1)));
        TapemModel {
            store,
            dims,
            kind,
            pooling,
            counts,
            author_table,
            venue_table,
            word_table,
            encoder,
            path_fwd,
            path_bwd,
            proj_w,
            proj_b,
            attn_key,
            attn_w,
            pair_w1,
            pair_b1,
            pair_w2,
            pair_b2,
            cls_w1,
            cls_b1,
            cls_w2,
            cls_b2,
        }
    }

    /// Embedding row for an author or venue node.
    pub fn table_row(&self, graph: &HeteroGraph, node: NodeId) -> Result<(ParamId, usize)> {
        match graph.node_type(node)? {
            NodeType::Author => Ok((self.author_table, graph.type_row(node))),
            NodeType::Venue => Ok((self.venue_table, graph.type_row(node))),
            NodeType::Paper => Err(TapemError::Contract(
                "papers are encoded from their abstracts, not table rows".into(),
            )),
        }
    }

    /// Whether attentive pooling is active (off for the no-attention ablation).
    pub fn attention_enabled(&self) -> bool {
        self.kind != ModelKind::TapemNoAttn
    }
}

/// Heterogeneous skip-gram baseline: center/context tables per node type,
/// with center-side papers produced by the same GRU encoder architecture.
#[derive(Clone, Debug)]
pub struct BaselineModel {
    pub store: ParamStore,
    pub k: usize,
    pub pooling: Pooling,
    pub counts: EntityCounts,
    pub word_table: ParamId,
    pub encoder: GruParams,
    pub center_author: ParamId,
    pub center_venue: ParamId,
    pub ctx_author: ParamId,
    pub ctx_paper: ParamId,
    pub ctx_venue: ParamId,
}

impl BaselineModel {
    pub fn new(k: usize, pooling: Pooling, counts: EntityCounts, papers: usize, seed: u64) -> BaselineModel {
        let mut rng = seeds::stream_rng(seed, STREAM_INIT, 1, 0);
        let mut store = ParamStore::new();
        let word_table =
            store.add_row_sparse("emb.word", init_embedding(counts.vocab, k, &mut rng));
        let encoder = register_gru(&mut store, "enc", k, k, &mut rng);
        let center_author = store.add_row_sparse(
            "base.center.author",
            init_embedding(counts.authors, k, &mut rng),
        );
        let center_venue = store.add_row_sparse(
            "base.center.venue",
            init_embedding(counts.venues.max(1), k, &mut rng),
        );
        let ctx_author = store.add_row_sparse(
            "base.ctx.author",
            init_embedding(counts.authors, k, &mut rng),
        );
        let ctx_paper =
            store.add_row_sparse("base.ctx.paper", init_embedding(papers.max(1), k, &mut rng));
        let ctx_venue = store.add_row_sparse(
            "base.ctx.venue",
            init_embedding(counts.venues.max(1), k, &mut rng),
        );
        BaselineModel {
            store,
            k,
            pooling,
            counts,
            word_table,
            encoder,
            center_author,
            center_venue,
            ctx_author,
            ctx_paper,
            ctx_venue,
        }
    }

    /// Context-side table and row for any node.
    pub fn context_row(&self, graph: &HeteroGraph, node: NodeId) -> Result<(ParamId, usize)> {
        let table = match graph.node_type(node)? {
            NodeType::Author => self.ctx_author,
            NodeType::Paper => self.ctx_paper,
            NodeType::Venue => self.ctx_venue,
        };
        Ok((table, graph.type_row(node)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> Dims {
        Dims { k: 4, d: 3, pair_hidden: 5, classifier_hidden: 6 }
    }

    #[test]
    fn construction_is_deterministic() {
        let counts = EntityCounts { authors: 3, venues: 2, vocab: 7 };
        let m1 = TapemModel::new(ModelKind::Tapem, dims(), Pooling::Mean, counts, 9);
        let m2 = TapemModel::new(ModelKind::Tapem, dims(), Pooling::Mean, counts, 9);
        for (a, b) in m1.store.ids().zip(m2.store.ids()) {
            assert_eq!(m1.store.value(a), m2.store.value(b));
            assert_eq!(m1.store.name(a), m2.store.name(b));
        }
    }

    #[test]
    fn shapes_follow_dims() {
        let counts = EntityCounts { authors: 3, venues: 2, vocab: 7 };
        let m = TapemModel::new(ModelKind::Tapem, dims(), Pooling::Mean, counts, 9);
        assert_eq!(m.store.value(m.author_table).shape(), Shape::Matrix(3, 4));
        assert_eq!(m.store.value(m.pair_w1).shape(), Shape::Matrix(5, 16));
        assert_eq!(m.store.value(m.pair_w2).shape(), Shape::Matrix(3, 5));
        assert_eq!(m.store.value(m.proj_w).shape(), Shape::Matrix(3, 6));
        assert_eq!(m.store.value(m.cls_w2).shape(), Shape::Matrix(1, 6));
        assert_eq!(m.store.value(m.encoder.wz).shape(), Shape::Matrix(4, 4));
        assert_eq!(m.store.value(m.path_fwd.wz).shape(), Shape::Matrix(3, 4));
    }
}
