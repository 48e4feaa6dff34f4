//! Author-identification ranking evaluation: candidate sampling, scoring,
//! Recall/Precision/F1@N, AUC, inactive-author slicing, rank violations.

use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TapemError};
use crate::hetgraph::{HeteroGraph, NodeId, NodeType};
use crate::model::checkpoint::AnyModel;
use crate::model::ops::{self, encode_paper};
use crate::model::{BaselineModel, ModelKind, TapemModel};
use crate::numerics::{ops::sigmoid, Tape};
use crate::par;
use crate::seeds::{self, STREAM_CANDIDATES};

/// Borrowed view over either model family.
#[derive(Clone, Copy)]
pub enum ModelRef<'a> {
    Tapem(&'a TapemModel),
    Baseline(&'a BaselineModel),
}

impl AnyModel {
    pub fn as_ref(&self) -> ModelRef<'_> {
        match self {
            AnyModel::Tapem(m) => ModelRef::Tapem(m),
            AnyModel::Baseline(m) => ModelRef::Baseline(m),
        }
    }
}

/// How candidate authors are scored against a paper.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoreMode {
    /// Sigmoid of the pair validity classifier logit.
    Classifier,
    /// Inner product of paper and author vectors.
    Dot,
}

/// Candidate authors for one paper: every true author plus sampled
/// negatives, deterministic per (seed, paper).
#[derive(Clone, Debug)]
pub struct CandidateSet {
    pub paper: NodeId,
    pub candidates: Vec<NodeId>,
    pub truth: BTreeSet<NodeId>,
}

/// Candidates sorted by descending score, ties broken by ascending id.
#[derive(Clone, Debug)]
pub struct RankedList {
    pub paper: NodeId,
    pub ranked: Vec<(NodeId, f64)>,
    pub truth: BTreeSet<NodeId>,
}

/// True authors plus a uniform sample of non-authors, without
/// replacement, clamped to the author population.
pub fn sample_candidates(
    graph: &HeteroGraph,
    paper: NodeId,
    pool_size: usize,
    seed: u64,
) -> Result<CandidateSet> {
    let truth: BTreeSet<NodeId> = graph
        .typed_neighbors(paper, NodeType::Author)?
        .iter()
        .copied()
        .collect();
    if truth.is_empty() {
        return Err(TapemError::Contract(format!(
            "paper {} has no true authors",
            graph.symbol(paper)
        )));
    }
    let all = graph.authors();
    let target = pool_size.min(all.len());
    let mut candidates: Vec<NodeId> = truth.iter().copied().collect();
    if target > candidates.len() {
        let mut rng = seeds::stream_rng(seed, STREAM_CANDIDATES, paper as u64, 0);
        let mut pool: Vec<NodeId> = all.iter().copied().filter(|a| !truth.contains(a)).collect();
        // partial Fisher-Yates: uniform sample without replacement
        let need = target - candidates.len();
        for i in 0..need {
            let j = rng.gen_range(i..pool.len());
            pool.swap(i, j);
        }
        candidates.extend_from_slice(&pool[..need]);
    }
    Ok(CandidateSet { paper, candidates, truth })
}

/// Whole-author-set candidates.
pub fn whole_set_candidates(graph: &HeteroGraph, paper: NodeId) -> Result<CandidateSet> {
    let truth: BTreeSet<NodeId> = graph
        .typed_neighbors(paper, NodeType::Author)?
        .iter()
        .copied()
        .collect();
    if truth.is_empty() {
        return Err(TapemError::Contract(format!(
            "paper {} has no true authors",
            graph.symbol(paper)
        )));
    }
    Ok(CandidateSet {
        paper,
        candidates: graph.authors().to_vec(),
        truth,
    })
}

/// Scoring mode a checkpoint ranks with unless overridden.
pub fn default_score_mode(kind: ModelKind) -> ScoreMode {
    match kind {
        ModelKind::Tapem | ModelKind::TapemNoAttn => ScoreMode::Classifier,
        ModelKind::TapemNpv | ModelKind::Baseline => ScoreMode::Dot,
    }
}

/// Score candidate authors for a paper given as a token-id sequence.
/// Inference mode: dropout off, deterministic.
pub fn score_candidates(
    model: ModelRef<'_>,
    graph: &HeteroGraph,
    token_ids: &[u32],
    candidates: &[NodeId],
    mode: ScoreMode,
) -> Result<Vec<f64>> {
    if token_ids.is_empty() {
        return Err(TapemError::Input("empty abstract".into()));
    }
    let mut tape = Tape::new();
    match model {
        ModelRef::Tapem(m) => {
            let store = &m.store;
            let p = encode_paper(&mut tape, store, &m.encoder, m.word_table, token_ids, m.pooling)?;
            let mut scores = Vec::with_capacity(candidates.len());
            for &author in candidates {
                if graph.node_type(author)? != NodeType::Author {
                    return Err(TapemError::Contract(format!(
                        "candidate {} is not an author",
                        graph.symbol(author)
                    )));
                }
                let q = tape.param_row(store, m.author_table, graph.type_row(author));
                let score = match mode {
                    ScoreMode::Classifier => {
                        let mut dummy = seeds::stream_rng(0, 0, 0, 0);
                        let g =
                            ops::embed_pair(&mut tape, store, m, p, q, 0.0, false, &mut dummy)?;
                        match m.kind {
                            ModelKind::TapemNpv => {
                                let d = tape.dot(p, q)?;
                                sigmoid(tape.scalar_value(d))
                            }
                            _ => {
                                let logit = ops::validity_logit(&mut tape, store, m, g)?;
                                sigmoid(tape.scalar_value(logit))
                            }
                        }
                    }
                    ScoreMode::Dot => {
                        let d = tape.dot(p, q)?;
                        tape.scalar_value(d)
                    }
                };
                scores.push(score);
            }
            Ok(scores)
        }
        ModelRef::Baseline(m) => {
            let store = &m.store;
            let p = encode_paper(&mut tape, store, &m.encoder, m.word_table, token_ids, m.pooling)?;
            candidates
                .iter()
                .map(|&author| {
                    if graph.node_type(author)? != NodeType::Author {
                        return Err(TapemError::Contract(format!(
                            "candidate {} is not an author",
                            graph.symbol(author)
                        )));
                    }
                    let q = tape.param_row(store, m.ctx_author, graph.type_row(author));
                    let d = tape.dot(p, q)?;
                    Ok(tape.scalar_value(d))
                })
                .collect()
        }
    }
}

/// Score every author embedding row against a token sequence, without a
/// graph; row index order. Used for ranking arbitrary abstracts.
pub fn score_author_rows(
    model: ModelRef<'_>,
    token_ids: &[u32],
    mode: ScoreMode,
) -> Result<Vec<f64>> {
    if token_ids.is_empty() {
        return Err(TapemError::Input("empty abstract".into()));
    }
    let mut tape = Tape::new();
    match model {
        ModelRef::Tapem(m) => {
            let store = &m.store;
            let p = encode_paper(&mut tape, store, &m.encoder, m.word_table, token_ids, m.pooling)?;
            (0..store.value(m.author_table).rows())
                .map(|row| {
                    let q = tape.param_row(store, m.author_table, row);
                    match mode {
                        ScoreMode::Classifier => {
                            let mut dummy = seeds::stream_rng(0, 0, 0, 0);
                            let g = ops::embed_pair(
                                &mut tape, store, m, p, q, 0.0, false, &mut dummy,
                            )?;
                            match m.kind {
                                ModelKind::TapemNpv => {
                                    let d = tape.dot(p, q)?;
                                    Ok(sigmoid(tape.scalar_value(d)))
                                }
                                _ => {
                                    let logit = ops::validity_logit(&mut tape, store, m, g)?;
                                    Ok(sigmoid(tape.scalar_value(logit)))
                                }
                            }
                        }
                        ScoreMode::Dot => {
                            let d = tape.dot(p, q)?;
                            Ok(tape.scalar_value(d))
                        }
                    }
                })
                .collect()
        }
        ModelRef::Baseline(m) => {
            let store = &m.store;
            let p = encode_paper(&mut tape, store, &m.encoder, m.word_table, token_ids, m.pooling)?;
            (0..store.value(m.ctx_author).rows())
                .map(|row| {
                    let q = tape.param_row(store, m.ctx_author, row);
                    let d = tape.dot(p, q)?;
                    Ok(tape.scalar_value(d))
                })
                .collect()
        }
    }
}

/// Rank one candidate set; descending score, ties by ascending author id.
pub fn rank_authors(
    model: ModelRef<'_>,
    graph: &HeteroGraph,
    token_ids: &[u32],
    cands: &CandidateSet,
    mode: ScoreMode,
) -> Result<RankedList> {
    let scores = score_candidates(model, graph, token_ids, &cands.candidates, mode)?;
    let mut ranked: Vec<(NodeId, f64)> = cands.candidates.iter().copied().zip(scores).collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("finite scores")
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok(RankedList {
        paper: cands.paper,
        ranked,
        truth: cands.truth.clone(),
    })
}

/// Recall/Precision/F1 at one cutoff.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AtN {
    pub n: usize,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

/// Macro-averaged ranking metrics plus per-slice labeling.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MetricsReport {
    pub split: String,
    pub mode: String,
    pub slice: String,
    pub papers: usize,
    pub skipped_papers: usize,
    pub at: Vec<AtN>,
    pub auc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank_violations: Option<f64>,
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Per-paper AUC by the rank-sum formula with 0.5 credit for ties.
fn auc_of(list: &RankedList) -> Option<f64> {
    let n_pos = list.truth.len();
    let n_neg = list.ranked.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    // ascending by score; average ranks over tied runs
    let mut asc: Vec<(f64, bool)> = list
        .ranked
        .iter()
        .map(|(id, s)| (*s, list.truth.contains(id)))
        .collect();
    asc.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores"));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < asc.len() {
        let mut j = i;
        while j + 1 < asc.len() && asc[j + 1].0 == asc[i].0 {
            j += 1;
        }
        // ranks are 1-based; tied block [i, j] shares the average rank
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for item in &asc[i..=j] {
            if item.1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let auc =
        (rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos as f64 * n_neg as f64);
    Some(auc)
}

/// Macro-averaged Recall@N / Precision@N / AUC over ranked lists; F1@N is
/// the harmonic mean of the averaged precision and recall. Papers whose
/// truth mask is empty are skipped and counted.
pub fn metrics(lists: &[RankedList], split: &str, mode: &str, slice: &str, n_values: &[usize]) -> MetricsReport {
    let mut recall_sums = vec![0.0; n_values.len()];
    let mut precision_sums = vec![0.0; n_values.len()];
    let mut auc_sum = 0.0;
    let mut auc_count = 0usize;
    let mut used = 0usize;
    let mut skipped = 0usize;

    for list in lists {
        if list.truth.is_empty() {
            skipped += 1;
            continue;
        }
        used += 1;
        let n_true = list.truth.len();
        for (slot, &n) in n_values.iter().enumerate() {
            let hits = list
                .ranked
                .iter()
                .take(n)
                .filter(|(id, _)| list.truth.contains(id))
                .count();
            recall_sums[slot] += hits as f64 / n_true as f64;
            precision_sums[slot] += hits as f64 / n as f64;
        }
        if let Some(a) = auc_of(list) {
            auc_sum += a;
            auc_count += 1;
        }
    }

    let denom = used.max(1) as f64;
    let at = n_values
        .iter()
        .enumerate()
        .map(|(slot, &n)| {
            let recall = recall_sums[slot] / denom;
            let precision = precision_sums[slot] / denom;
            AtN { n, recall, precision, f1: f1_score(precision, recall) }
        })
        .collect();
    MetricsReport {
        split: split.to_string(),
        mode: mode.to_string(),
        slice: slice.to_string(),
        papers: used,
        skipped_papers: skipped,
        at,
        auc: if auc_count > 0 { auc_sum / auc_count as f64 } else { 0.0 },
        rank_violations: None,
    }
}

/// Authors with at most `threshold` publications among the training papers.
pub fn inactive_authors(
    graph: &HeteroGraph,
    train_papers: &[NodeId],
    threshold: usize,
) -> Result<BTreeSet<NodeId>> {
    if threshold < 1 {
        return Err(TapemError::Config("inactive threshold must be at least 1".into()));
    }
    Ok(graph
        .authors()
        .iter()
        .copied()
        .filter(|&a| graph.publication_count(a, train_papers) <= threshold)
        .collect())
}

/// Restrict truth masks to inactive authors; papers left without true
/// authors keep an empty mask and are skipped by `metrics`.
pub fn slice_inactive(lists: &[RankedList], inactive: &BTreeSet<NodeId>) -> Vec<RankedList> {
    lists
        .iter()
        .map(|l| RankedList {
            paper: l.paper,
            ranked: l.ranked.clone(),
            truth: l.truth.intersection(inactive).copied().collect(),
        })
        .collect()
}

/// Average count of (frequent false author ranked above a true author)
/// pairs. For each paper the top-N most frequently co-occurring false
/// authors are compared, N being the number of true authors.
pub fn rank_violations(
    lists: &[RankedList],
    cooccurrence: &HashMap<NodeId, HashMap<NodeId, usize>>,
) -> Result<f64> {
    if lists.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0usize;
    for list in lists {
        let counts = cooccurrence.get(&list.paper).ok_or_else(|| {
            TapemError::Contract(format!(
                "no co-occurrence data for paper at node {}",
                list.paper
            ))
        })?;
        let mut frequent_false: Vec<(NodeId, usize)> = counts
            .iter()
            .filter(|(author, _)| !list.truth.contains(author))
            .map(|(a, c)| (*a, *c))
            .collect();
        frequent_false.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        frequent_false.truncate(list.truth.len());

        let position: HashMap<NodeId, usize> = list
            .ranked
            .iter()
            .enumerate()
            .map(|(i, (id, _))| (*id, i))
            .collect();
        for (false_author, _) in &frequent_false {
            let Some(&fp) = position.get(false_author) else { continue };
            for true_author in &list.truth {
                if let Some(&tp) = position.get(true_author) {
                    if fp < tp {
                        total += 1;
                    }
                }
            }
        }
    }
    Ok(total as f64 / lists.len() as f64)
}

/// Rank every paper of a split (parallel over papers, assembled in
/// ascending paper order).
pub fn rank_split<F>(
    model: ModelRef<'_>,
    graph: &HeteroGraph,
    papers: &[NodeId],
    tokens_of: F,
    pool_size: usize,
    whole_set: bool,
    seed: u64,
    mode: ScoreMode,
) -> Result<Vec<RankedList>>
where
    F: Fn(NodeId) -> Result<Vec<u32>> + Sync,
{
    let mut sorted: Vec<NodeId> = papers.to_vec();
    sorted.sort_unstable();
    let results: Vec<Result<RankedList>> = par::map_ordered(&sorted, |&paper| {
        let cands = if whole_set {
            whole_set_candidates(graph, paper)?
        } else {
            sample_candidates(graph, paper, pool_size, seed)?
        };
        rank_authors(model, graph, &tokens_of(paper)?, &cands, mode)
    });
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::toy_graph;
    use crate::model::{Dims, EntityCounts, Pooling, TapemModel};

    fn toy_model(graph: &HeteroGraph) -> AnyModel {
        AnyModel::Tapem(TapemModel::new(
            ModelKind::Tapem,
            Dims { k: 5, d: 4, pair_hidden: 6, classifier_hidden: 6 },
            Pooling::Mean,
            EntityCounts {
                authors: graph.authors().len(),
                venues: graph.venues().len(),
                vocab: graph.vocab().len(),
            },
            21,
        ))
    }

    fn list(paper: NodeId, ids_desc: &[NodeId], truth: &[NodeId]) -> RankedList {
        RankedList {
            paper,
            ranked: ids_desc
                .iter()
                .enumerate()
                .map(|(i, &id)| (id, 1.0 - i as f64 * 0.01))
                .collect(),
            truth: truth.iter().copied().collect(),
        }
    }

    #[test]
    fn candidate_sets_are_deterministic_and_complete() {
        let g = toy_graph();
        let p = g.node_by_symbol("p0").unwrap();
        let c1 = sample_candidates(&g, p, 3, 9).unwrap();
        let c2 = sample_candidates(&g, p, 3, 9).unwrap();
        assert_eq!(c1.candidates, c2.candidates);
        assert_eq!(c1.candidates.len(), 3);
        for t in &c1.truth {
            assert!(c1.candidates.contains(t));
        }
        let seen: BTreeSet<_> = c1.candidates.iter().collect();
        assert_eq!(seen.len(), c1.candidates.len(), "no duplicates");
        // pool larger than the author set clamps
        let big = sample_candidates(&g, p, 1000, 9).unwrap();
        assert_eq!(big.candidates.len(), g.authors().len());
        // whole-set mode uses every author
        let whole = whole_set_candidates(&g, p).unwrap();
        assert_eq!(whole.candidates.len(), g.authors().len());
    }

    #[test]
    fn negative_counts_are_forced_by_pool_size() {
        let g = crate::hetgraph::generate_synthetic(
            &crate::hetgraph::SynthConfig {
                authors: 150,
                papers: 30,
                venues: 3,
                topics: 3,
                vocab_size: 60,
                authors_per_paper: 3,
                ..Default::default()
            },
            5,
        )
        .unwrap()
        .0;
        let p = g.papers()[0];
        let c = sample_candidates(&g, p, 100, 1).unwrap();
        assert_eq!(c.candidates.len(), 100);
        assert_eq!(c.truth.len(), 3);
        let negs = c.candidates.iter().filter(|a| !c.truth.contains(a)).count();
        assert_eq!(negs, 97);
    }

    #[test]
    fn zero_classifier_ranks_by_id_order() {
        let g = toy_graph();
        let mut model = match toy_model(&g) {
            AnyModel::Tapem(m) => m,
            _ => unreachable!(),
        };
        for id in model.store.ids().collect::<Vec<_>>() {
            model.store.value_mut(id).data_mut().fill(0.0);
        }
        let model = AnyModel::Tapem(model);
        let p = g.node_by_symbol("p0").unwrap();
        let cands = whole_set_candidates(&g, p).unwrap();
        let ranked = rank_authors(
            model.as_ref(),
            &g,
            g.paper_token_ids(p).unwrap(),
            &cands,
            ScoreMode::Classifier,
        )
        .unwrap();
        for (id, score) in &ranked.ranked {
            assert_eq!(*score, 0.5);
            let _ = id;
        }
        let ids: Vec<NodeId> = ranked.ranked.iter().map(|(id, _)| *id).collect();
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        assert_eq!(ids, sorted, "ties break by ascending id");
    }

    #[test]
    fn bias_shift_leaves_ranking_unchanged() {
        let g = toy_graph();
        let model = toy_model(&g);
        let p = g.node_by_symbol("p1").unwrap();
        let cands = whole_set_candidates(&g, p).unwrap();
        let before = rank_authors(
            model.as_ref(),
            &g,
            g.paper_token_ids(p).unwrap(),
            &cands,
            ScoreMode::Classifier,
        )
        .unwrap();
        let model = match model {
            AnyModel::Tapem(mut m) => {
                m.store.value_mut(m.cls_b2).data_mut()[0] += 3.0;
                AnyModel::Tapem(m)
            }
            _ => unreachable!(),
        };
        let after = rank_authors(
            model.as_ref(),
            &g,
            g.paper_token_ids(p).unwrap(),
            &cands,
            ScoreMode::Classifier,
        )
        .unwrap();
        let order = |l: &RankedList| l.ranked.iter().map(|(id, _)| *id).collect::<Vec<_>>();
        assert_eq!(order(&before), order(&after));
    }

    #[test]
    fn recall_precision_definitions() {
        // 2 true authors, 1 inside the top 5 of 10 candidates
        let l = list(0, &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10], &[3, 9]);
        let report = metrics(&[l], "test", "sampled", "all", &[5]);
        assert_eq!(report.at[0].recall, 0.5);
        assert_eq!(report.at[0].precision, 0.2);
        let expected_f1 = f1_score(0.2, 0.5);
        assert_eq!(report.at[0].f1, expected_f1);
    }

    #[test]
    fn auc_extremes_and_midpoint() {
        let perfect = list(0, &[1, 2, 3, 4, 5], &[1, 2]);
        let report = metrics(&[perfect], "test", "sampled", "all", &[1]);
        assert_eq!(report.auc, 1.0);
        let reversed = list(0, &[1, 2, 3, 4, 5], &[4, 5]);
        let report = metrics(&[reversed], "test", "sampled", "all", &[1]);
        assert_eq!(report.auc, 0.0);
        // 1 positive ranked 3rd of 5: 2 negatives above, 2 below
        let mid = list(0, &[1, 2, 3, 4, 5], &[3]);
        let report = metrics(&[mid], "test", "sampled", "all", &[1]);
        assert_eq!(report.auc, 0.5);
    }

    #[test]
    fn f1_convention_matches_published_table() {
        let f1 = f1_score(0.2835, 0.6807);
        assert!((f1 - 0.4003).abs() < 5e-4, "f1 {f1}");
    }

    #[test]
    fn recall_is_monotone_in_n() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let n = rng.gen_range(5..30);
            let ids: Vec<NodeId> = (0..n).collect();
            let truth: Vec<NodeId> = ids
                .iter()
                .copied()
                .filter(|_| rng.gen_bool(0.3))
                .collect();
            if truth.is_empty() {
                continue;
            }
            let l = list(0, &ids, &truth);
            let ns: Vec<usize> = vec![1, 2, 5, 10];
            let report = metrics(&[l], "t", "s", "a", &ns);
            for w in report.at.windows(2) {
                assert!(w[1].recall >= w[0].recall - 1e-12);
            }
        }
    }

    #[test]
    fn inactive_slice_thresholds_at_boundary() {
        let g = crate::hetgraph::generate_synthetic(
            &crate::hetgraph::SynthConfig {
                authors: 30,
                papers: 60,
                venues: 3,
                topics: 3,
                vocab_size: 60,
                ..Default::default()
            },
            8,
        )
        .unwrap()
        .0;
        let papers = g.papers().to_vec();
        let inactive = inactive_authors(&g, &papers, 5).unwrap();
        for &a in g.authors() {
            let n = g.publication_count(a, &papers);
            assert_eq!(inactive.contains(&a), n <= 5, "author with {n} papers");
        }
        assert!(inactive_authors(&g, &papers, 0).is_err());
    }

    #[test]
    fn all_inactive_slice_equals_full_evaluation() {
        let l = list(0, &[1, 2, 3, 4], &[2, 4]);
        let everyone: BTreeSet<NodeId> = (0..10).collect();
        let sliced = slice_inactive(&[l.clone()], &everyone);
        assert_eq!(sliced[0].truth, l.truth);
    }

    #[test]
    fn violation_counting() {
        // paper 0: true {1}, frequent false {2}; false ranked above true
        let l = list(0, &[2, 1, 3], &[1]);
        let mut co = HashMap::new();
        co.insert(0usize, HashMap::from([(1usize, 5usize), (2, 9), (3, 1)]));
        let v = rank_violations(&[l], &co).unwrap();
        assert_eq!(v, 1.0);
        // true above the frequent false: no violation
        let l = list(0, &[1, 2, 3], &[1]);
        let v = rank_violations(&[l], &co).unwrap();
        assert_eq!(v, 0.0);
        // missing co-occurrence data is a contract violation
        let l = list(7, &[1, 2], &[1]);
        assert!(rank_violations(&[l], &co).is_err());
    }

    #[test]
    fn ranking_invariant_under_monotone_transforms() {
        let g = toy_graph();
        let model = toy_model(&g);
        let p = g.node_by_symbol("p2").unwrap();
        let cands = whole_set_candidates(&g, p).unwrap();
        let base = rank_authors(
            model.as_ref(),
            &g,
            g.paper_token_ids(p).unwrap(),
            &cands,
            ScoreMode::Classifier,
        )
        .unwrap();
        // strictly increasing transform of the scores, re-sorted with the
        // same tie-break, gives the same permutation
        let mut transformed: Vec<(NodeId, f64)> = base
            .ranked
            .iter()
            .map(|(id, s)| (*id, (3.0 * s + 1.0).exp()))
            .collect();
        transformed.sort_by(|a, b| {
            b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0))
        });
        let order_base: Vec<NodeId> = base.ranked.iter().map(|(id, _)| *id).collect();
        let order_t: Vec<NodeId> = transformed.iter().map(|(id, _)| *id).collect();
        assert_eq!(order_base, order_t);
    }
}
