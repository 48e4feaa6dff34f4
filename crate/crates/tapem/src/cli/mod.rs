//! Command implementations behind the binary's subcommands.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Result, TapemError};
use crate::eval::{
    self, default_score_mode, inactive_authors, metrics, rank_split, rank_violations,
    slice_inactive, MetricsReport, RankedList, ScoreMode,
};
use crate::hetgraph::io::{read_records, LoadOptions};
use crate::hetgraph::synth::{read_meta, write_dataset, SynthMeta};
use crate::hetgraph::{
    generate_synthetic, temporal_split, CorpusSplit, HeteroGraph, NodeId, SynthConfig,
};
use crate::model::checkpoint::{AnyModel, Checkpoint};
use crate::model::ops::{comb, embed_pair, encode_paper, validity_logit};
use crate::model::{BaselineModel, Dims, EntityCounts, ModelKind, TapemModel};
use crate::numerics::Tape;
use crate::objective::{train_baseline_epoch, train_epoch, ContextPathPool, TrainingConfig};
use crate::seeds::{self, STREAM_SPLIT, STREAM_WALK};
use crate::walker::{cooccurrence_counts, extract_all, generate_walks, MetaPath, Walk};

pub mod manifest;

use manifest::ManifestBuilder;

/// A dataset directory resolved into the full graph, the pre-split-year
/// training view, and the paper split. Training-view vocabulary is built
/// from training abstracts only.
pub struct Dataset {
    pub full: HeteroGraph,
    pub train_graph: HeteroGraph,
    pub split: CorpusSplit,
    pub meta: SynthMeta,
    pub dir: PathBuf,
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let meta = read_meta(dir)?;
    let nodes = dir.join("nodes.tsv");
    let edges = dir.join("edges.tsv");
    let abstracts = dir.join("abstracts.jsonl");
    let records = read_records(&nodes, &edges, &abstracts)?;
    let full = records.clone().build(LoadOptions::default())?;
    let split = temporal_split(
        &full,
        meta.config.split_year,
        seeds::derive(meta.seed, STREAM_SPLIT, 0, 0),
    )?;
    let train_graph = records
        .drop_papers_at_or_after(meta.config.split_year)
        .build(LoadOptions::default())?;
    Ok(Dataset {
        full,
        train_graph,
        split,
        meta,
        dir: dir.to_path_buf(),
    })
}

fn entity_counts(graph: &HeteroGraph) -> EntityCounts {
    EntityCounts {
        authors: graph.authors().len(),
        venues: graph.venues().len(),
        vocab: graph.vocab().len(),
    }
}

fn author_symbols(graph: &HeteroGraph) -> Vec<String> {
    graph
        .authors()
        .iter()
        .map(|&a| graph.symbol(a).to_string())
        .collect()
}

/// Generate the synthetic corpus files and a manifest under `out_dir`.
pub fn cmd_synth(config_path: Option<&Path>, out_dir: &Path, seed: u64) -> Result<PathBuf> {
    let cfg: SynthConfig = match config_path {
        Some(p) => {
            let raw = std::fs::read_to_string(p)?;
            serde_json::from_str(&raw)
                .map_err(|e| TapemError::Config(format!("invalid synth config: {e}")))?
        }
        None => SynthConfig::default(),
    };
    let mut mb = ManifestBuilder::new(
        "synth",
        seed,
        serde_json::to_value(&cfg).expect("serializable"),
    );
    if let Some(p) = config_path {
        mb.input(p)?;
    }
    let (graph, _split) = generate_synthetic(&cfg, seed)?;
    std::fs::create_dir_all(out_dir)?;
    write_dataset(&graph, &cfg, seed, out_dir)?;
    for name in ["nodes.tsv", "edges.tsv", "abstracts.jsonl", "meta.json"] {
        mb.output(&out_dir.join(name));
    }
    mb.write(out_dir)?;
    Ok(out_dir.to_path_buf())
}

fn walk_all_schemes(
    graph: &HeteroGraph,
    cfg: &TrainingConfig,
) -> Result<Vec<Walk>> {
    let mut walks = Vec::new();
    for (i, scheme) in cfg.schemes.iter().enumerate() {
        let mp = MetaPath::parse(scheme)?;
        let seed = seeds::derive(cfg.seed, STREAM_WALK, 0xABCD, i as u64);
        walks.extend(generate_walks(graph, &mp, cfg.walks_per_node, cfg.walk_length, seed)?);
    }
    Ok(walks)
}

#[derive(Serialize)]
struct TrainLogLine {
    epoch: usize,
    mean_ctx: f64,
    mean_pv: f64,
    mean_metric: f64,
    mean_total: f64,
    instances: usize,
    wall_ms: u64,
    val_recall5: f64,
}

pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub best_epoch: usize,
    pub best_val_recall5: f64,
    pub epochs_run: usize,
}

fn val_recall5(
    model: &AnyModel,
    ds: &Dataset,
    vocab: &crate::hetgraph::Vocabulary,
    pool_size: usize,
    mode: ScoreMode,
) -> Result<f64> {
    let lists = rank_split(
        model.as_ref(),
        &ds.full,
        &ds.split.validation,
        |p| Ok(vocab.encode(&ds.full.abstract_of(p)?.tokens)),
        pool_size,
        false,
        ds.meta.seed,
        mode,
    )?;
    let report = metrics(&lists, "val", "sampled", "all", &[5]);
    Ok(report.at[0].recall)
}

/// Train a model with validation-based early stopping; keeps the
/// checkpoint of the best validation Recall@5.
pub fn cmd_train(
    data_dir: &Path,
    cfg: &TrainingConfig,
    out_dir: &Path,
    kind: ModelKind,
    resume: Option<&Path>,
) -> Result<TrainSummary> {
    cfg.validate()?;
    let mut mb = ManifestBuilder::new(
        "train",
        cfg.seed,
        serde_json::to_value(cfg).expect("serializable"),
    );
    for name in ["nodes.tsv", "edges.tsv", "abstracts.jsonl", "meta.json"] {
        mb.input(&data_dir.join(name))?;
    }
    let ds = load_dataset(data_dir)?;
    let train_graph = &ds.train_graph;
    let vocab = train_graph.vocab().clone();
    let counts = entity_counts(train_graph);
    let symbols = author_symbols(train_graph);

    let walks = walk_all_schemes(train_graph, cfg)?;
    std::fs::create_dir_all(out_dir)?;
    let log_path = out_dir.join("train_log.jsonl");
    let ckpt_path = out_dir.join("checkpoint.json");
    let mut log = BufWriter::new(File::create(&log_path)?);

    let dims = Dims {
        k: cfg.k,
        d: cfg.d,
        pair_hidden: cfg.pair_hidden,
        classifier_hidden: cfg.classifier_hidden,
    };
    let mut best_recall = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut best_ckpt: Option<Checkpoint> = None;
    let mut since_best = 0usize;
    let mut epochs_run = 0usize;

    match kind {
        ModelKind::Baseline => {
            let (mut model, start_epoch) = match resume {
                Some(p) => {
                    mb.input(p)?;
                    let ck = Checkpoint::read(p)?;
                    match ck.instantiate()? {
                        AnyModel::Baseline(m) => (m, ck.epoch + 1),
                        _ => {
                            return Err(TapemError::Config(
                                "resume checkpoint is not a baseline model".into(),
                            ))
                        }
                    }
                }
                None => (
                    BaselineModel::new(
                        cfg.k,
                        cfg.pooling,
                        counts,
                        train_graph.papers().len(),
                        cfg.seed,
                    ),
                    0,
                ),
            };
            for epoch in start_epoch..cfg.epochs.max(start_epoch) {
                let stats = train_baseline_epoch(&mut model, train_graph, &walks, cfg, epoch)?;
                epochs_run += 1;
                let snapshot = Checkpoint::from_baseline(
                    &model,
                    epoch,
                    cfg,
                    symbols.clone(),
                    &vocab,
                    train_graph.papers().len(),
                );
                let holder = AnyModel::Baseline(model);
                let recall = val_recall5(&holder, &ds, &vocab, 100, ScoreMode::Dot)?;
                model = match holder {
                    AnyModel::Baseline(m) => m,
                    _ => unreachable!(),
                };
                writeln!(
                    log,
                    "{}",
                    serde_json::to_string(&TrainLogLine {
                        epoch,
                        mean_ctx: stats.mean_ctx,
                        mean_pv: stats.mean_pv,
                        mean_metric: stats.mean_metric,
                        mean_total: stats.mean_total,
                        instances: stats.instances,
                        wall_ms: stats.wall_ms,
                        val_recall5: recall,
                    })
                    .expect("serializable")
                )?;
                if recall > best_recall {
                    best_recall = recall;
                    best_epoch = epoch;
                    best_ckpt = Some(snapshot);
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best >= cfg.early_stop_patience {
                        break;
                    }
                }
            }
        }
        _ => {
            let instances = extract_all(&walks, cfg.tau, train_graph)?;
            if instances.is_empty() {
                return Err(TapemError::Config(
                    "walks produced no paper-author pairs to train on".into(),
                ));
            }
            let pool = ContextPathPool::from_instances(&instances);
            let (mut model, start_epoch) = match resume {
                Some(p) => {
                    mb.input(p)?;
                    let ck = Checkpoint::read(p)?;
                    match ck.instantiate()? {
                        AnyModel::Tapem(m) if m.kind == kind => (m, ck.epoch + 1),
                        AnyModel::Tapem(m) => {
                            return Err(TapemError::Config(format!(
                                "resume checkpoint holds {}, requested {}",
                                m.kind.as_str(),
                                kind.as_str()
                            )))
                        }
                        _ => {
                            return Err(TapemError::Config(
                                "resume checkpoint is a baseline model".into(),
                            ))
                        }
                    }
                }
                None => (
                    TapemModel::new(kind, dims, cfg.pooling, counts, cfg.seed),
                    0,
                ),
            };
            for epoch in start_epoch..cfg.epochs.max(start_epoch) {
                let stats = train_epoch(&mut model, train_graph, &instances, &pool, cfg, epoch)?;
                epochs_run += 1;
                let snapshot =
                    Checkpoint::from_tapem(&model, epoch, cfg, symbols.clone(), &vocab);
                let holder = AnyModel::Tapem(model);
                let recall =
                    val_recall5(&holder, &ds, &vocab, 100, default_score_mode(kind))?;
                model = match holder {
                    AnyModel::Tapem(m) => m,
                    _ => unreachable!(),
                };
                writeln!(
                    log,
                    "{}",
                    serde_json::to_string(&TrainLogLine {
                        epoch,
                        mean_ctx: stats.mean_ctx,
                        mean_pv: stats.mean_pv,
                        mean_metric: stats.mean_metric,
                        mean_total: stats.mean_total,
                        instances: stats.instances,
                        wall_ms: stats.wall_ms,
                        val_recall5: recall,
                    })
                    .expect("serializable")
                )?;
                if recall > best_recall {
                    best_recall = recall;
                    best_epoch = epoch;
                    best_ckpt = Some(snapshot);
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best >= cfg.early_stop_patience {
                        break;
                    }
                }
            }
        }
    }
    log.flush()?;

    let best = best_ckpt.ok_or_else(|| {
        TapemError::Config("no epochs were run; checkpoint not produced".into())
    })?;
    best.save(&ckpt_path)?;
    mb.output(&ckpt_path);
    mb.output(&log_path);
    mb.write(out_dir)?;
    Ok(TrainSummary {
        checkpoint: ckpt_path,
        log: log_path,
        best_epoch,
        best_val_recall5: best_recall,
        epochs_run,
    })
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SplitSel {
    Val,
    Test,
    Train,
}

impl SplitSel {
    pub fn parse(s: &str) -> Result<SplitSel> {
        match s {
            "val" => Ok(SplitSel::Val),
            "test" => Ok(SplitSel::Test),
            "train" => Ok(SplitSel::Train),
            _ => Err(TapemError::Config(format!("unknown split {s}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SplitSel::Val => "val",
            SplitSel::Test => "test",
            SplitSel::Train => "train",
        }
    }
}

pub struct EvalOptions {
    pub split: SplitSel,
    pub whole_set: bool,
    pub inactive: bool,
    pub inactive_threshold: usize,
    pub violations: bool,
    pub dot_scorer: bool,
    pub pool_size: usize,
    pub out: Option<PathBuf>,
    pub dump_rankings: Option<PathBuf>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            split: SplitSel::Test,
            whole_set: false,
            inactive: false,
            inactive_threshold: 5,
            violations: false,
            dot_scorer: false,
            pool_size: 100,
            out: None,
            dump_rankings: None,
        }
    }
}

fn dump_rankings(lists: &[RankedList], graph: &HeteroGraph, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "paper\trank\tauthor\tscore\tis_true")?;
    for l in lists {
        for (rank, (author, score)) in l.ranked.iter().enumerate() {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                graph.symbol(l.paper),
                rank + 1,
                graph.symbol(*author),
                score,
                l.truth.contains(author) as u8
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Evaluate a checkpoint on a split and write the metrics report.
pub fn cmd_eval(checkpoint: &Path, data_dir: &Path, opts: &EvalOptions) -> Result<MetricsReport> {
    let ck = Checkpoint::read(checkpoint)?;
    let model = ck.instantiate()?;
    let vocab = ck.vocabulary()?;
    let ds = load_dataset(data_dir)?;
    ck.check_vocab(ds.train_graph.vocab())?;

    let mut mb = ManifestBuilder::new(
        "eval",
        ds.meta.seed,
        serde_json::json!({
            "split": opts.split.as_str(),
            "candidates": if opts.whole_set { "whole" } else { "sampled" },
            "slice": if opts.inactive { "inactive" } else { "all" },
            "pool_size": opts.pool_size,
            "violations": opts.violations,
            "dot_scorer": opts.dot_scorer,
        }),
    );
    mb.input(checkpoint)?;
    for name in ["nodes.tsv", "edges.tsv", "abstracts.jsonl", "meta.json"] {
        mb.input(&data_dir.join(name))?;
    }

    let papers = match opts.split {
        SplitSel::Val => &ds.split.validation,
        SplitSel::Test => &ds.split.test,
        SplitSel::Train => &ds.split.train,
    };
    let mode = if opts.dot_scorer {
        ScoreMode::Dot
    } else {
        default_score_mode(model.kind())
    };
    let lists = rank_split(
        model.as_ref(),
        &ds.full,
        papers,
        |p| Ok(vocab.encode(&ds.full.abstract_of(p)?.tokens)),
        opts.pool_size,
        opts.whole_set,
        ds.meta.seed,
        mode,
    )?;
    let (slice_name, lists) = if opts.inactive {
        let inactive = inactive_authors(&ds.full, &ds.split.train, opts.inactive_threshold)?;
        ("inactive", slice_inactive(&lists, &inactive))
    } else {
        ("all", lists)
    };
    let n_values: Vec<usize> = if opts.whole_set {
        vec![10, 30, 50, 100, 200]
    } else {
        vec![1, 2, 5, 10]
    };
    let mut report = metrics(
        &lists,
        opts.split.as_str(),
        if opts.whole_set { "whole" } else { "sampled" },
        slice_name,
        &n_values,
    );

    if opts.violations {
        report.rank_violations = Some(eval_violations(&ck, &model, &ds, &vocab, opts, mode)?);
    }

    if let Some(path) = &opts.dump_rankings {
        dump_rankings(&lists, &ds.full, path)?;
        mb.output(path);
    }

    let out_path = opts.out.clone().unwrap_or_else(|| {
        let stem = format!(
            "metrics_{}_{}_{}.json",
            report.split, report.mode, report.slice
        );
        checkpoint.parent().unwrap_or(Path::new(".")).join(stem)
    });
    std::fs::write(
        &out_path,
        serde_json::to_string_pretty(&report).expect("serializable") + "\n",
    )?;
    mb.output(&out_path);
    if let Some(dir) = out_path.parent() {
        mb.write(dir)?;
    }
    Ok(report)
}

/// Average rank-violation count over training papers, using walk
/// co-occurrence from the checkpoint's own walk configuration.
fn eval_violations(
    ck: &Checkpoint,
    model: &AnyModel,
    ds: &Dataset,
    vocab: &crate::hetgraph::Vocabulary,
    opts: &EvalOptions,
    mode: ScoreMode,
) -> Result<f64> {
    let walks = walk_all_schemes(&ds.train_graph, &ck.config)?;
    let counts_train = cooccurrence_counts(&walks, ck.config.tau, &ds.train_graph)?;
    // map training-view node ids to full-graph ids through symbols
    let mut counts_full: HashMap<NodeId, HashMap<NodeId, usize>> = HashMap::new();
    for (paper, authors) in counts_train {
        let p_full = ds.full.node_by_symbol(ds.train_graph.symbol(paper))?;
        let entry = counts_full.entry(p_full).or_default();
        for (author, c) in authors {
            let a_full = ds.full.node_by_symbol(ds.train_graph.symbol(author))?;
            entry.insert(a_full, c);
        }
    }
    let mut papers: Vec<NodeId> = counts_full.keys().copied().collect();
    papers.sort_unstable();
    let lists = rank_split(
        model.as_ref(),
        &ds.full,
        &papers,
        |p| Ok(vocab.encode(&ds.full.abstract_of(p)?.tokens)),
        opts.pool_size,
        false,
        ds.meta.seed,
        mode,
    )?;
    rank_violations(&lists, &counts_full)
}

/// Rank all known authors for an abstract given as whitespace-separated
/// tokens; prints the top rows and returns them.
pub fn cmd_rank(
    checkpoint: &Path,
    abstract_file: &Path,
    top: usize,
) -> Result<Vec<(String, f64)>> {
    let ck = Checkpoint::read(checkpoint)?;
    let model = ck.instantiate()?;
    let vocab = ck.vocabulary()?;
    let raw = std::fs::read_to_string(abstract_file)?;
    let tokens: Vec<String> = raw.split_whitespace().map(str::to_string).collect();
    if tokens.is_empty() {
        return Err(TapemError::Input(format!(
            "abstract file {} has no tokens",
            abstract_file.display()
        )));
    }
    let token_ids = vocab.encode(&tokens);
    let mode = default_score_mode(model.kind());
    let scores = eval::score_author_rows(model.as_ref(), &token_ids, mode)?;
    let mut rows: Vec<(usize, f64)> = scores.into_iter().enumerate().collect();
    rows.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite").then_with(|| a.0.cmp(&b.0)));
    rows.truncate(top);
    Ok(rows
        .into_iter()
        .map(|(row, score)| (ck.author_symbols[row].clone(), score))
        .collect())
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ExportWhat {
    Authors,
    Pairs,
}

/// Export author embeddings (K columns) or pair embeddings (d columns)
/// as TSV.
pub fn cmd_export(
    checkpoint: &Path,
    out_path: &Path,
    what: ExportWhat,
    pairs_file: Option<&Path>,
    data_dir: Option<&Path>,
) -> Result<usize> {
    let ck = Checkpoint::read(checkpoint)?;
    let model = ck.instantiate()?;
    let mut out = BufWriter::new(File::create(out_path)?);
    match what {
        ExportWhat::Authors => {
            let table = match &model {
                AnyModel::Tapem(m) => m.store.value(m.author_table),
                AnyModel::Baseline(m) => m.store.value(m.ctx_author),
            };
            for (row, sym) in ck.author_symbols.iter().enumerate() {
                let values: Vec<String> =
                    table.row(row).iter().map(|v| v.to_string()).collect();
                writeln!(out, "{}\t{}", sym, values.join("\t"))?;
            }
            out.flush()?;
            Ok(ck.author_symbols.len())
        }
        ExportWhat::Pairs => {
            let m = match &model {
                AnyModel::Tapem(m) => m,
                AnyModel::Baseline(_) => {
                    return Err(TapemError::Config(
                        "pair export requires a pair-embedding checkpoint".into(),
                    ))
                }
            };
            let pairs_file = pairs_file.ok_or_else(|| {
                TapemError::Config("pair export needs --pairs FILE (paper<TAB>author)".into())
            })?;
            let data_dir = data_dir.ok_or_else(|| {
                TapemError::Config("pair export needs --data DIR for abstracts".into())
            })?;
            let ds = load_dataset(data_dir)?;
            let vocab = ck.vocabulary()?;
            let raw = std::fs::read_to_string(pairs_file)?;
            let mut count = 0;
            for (lineno, line) in raw.lines().enumerate() {
                if line.is_empty() {
                    continue;
                }
                let mut cols = line.split('\t');
                let (psym, asym) = match (cols.next(), cols.next()) {
                    (Some(p), Some(a)) => (p, a),
                    _ => {
                        return Err(TapemError::Parse {
                            path: pairs_file.display().to_string(),
                            line: lineno + 1,
                            msg: "expected paper<TAB>author".into(),
                        })
                    }
                };
                let paper = ds.full.node_by_symbol(psym)?;
                let author = ds.full.node_by_symbol(asym)?;
                let token_ids = vocab.encode(&ds.full.abstract_of(paper)?.tokens);
                let mut tape = Tape::new();
                let p = encode_paper(
                    &mut tape,
                    &m.store,
                    &m.encoder,
                    m.word_table,
                    &token_ids,
                    m.pooling,
                )?;
                let q = tape.param_row(&m.store, m.author_table, ds.full.type_row(author));
                let mut dummy = seeds::stream_rng(0, 0, 0, 0);
                let g = embed_pair(&mut tape, &m.store, m, p, q, 0.0, false, &mut dummy)?;
                let _ = (comb(&mut tape, p, q)?, validity_logit(&mut tape, &m.store, m, g)?);
                let values: Vec<String> =
                    tape.value(g).data().iter().map(|v| v.to_string()).collect();
                writeln!(out, "{}\t{}\t{}", psym, asym, values.join("\t"))?;
                count += 1;
            }
            out.flush()?;
            Ok(count)
        }
    }
}

pub struct GradcheckLine {
    pub group: String,
    pub max_relative_error: f64,
    pub probes: usize,
    pub skipped: usize,
}

/// Run the finite-difference check over every parameter group; errors
/// with a numeric failure when any group breaches 1e-4.
pub fn cmd_gradcheck(config_path: Option<&Path>) -> Result<Vec<GradcheckLine>> {
    let cfg = match config_path {
        Some(p) => TrainingConfig::from_json(&std::fs::read_to_string(p)?)?,
        None => TrainingConfig::default(),
    };
    let mut lines = Vec::new();
    for rep in crate::harness::gradcheck_tapem(cfg.seed, 24)? {
        lines.push(GradcheckLine {
            group: rep.group,
            max_relative_error: rep.report.max_relative_error,
            probes: rep.report.probes,
            skipped: rep.report.skipped_kinks,
        });
    }
    let base = crate::harness::gradcheck_baseline(cfg.seed, 40)?;
    lines.push(GradcheckLine {
        group: base.group,
        max_relative_error: base.report.max_relative_error,
        probes: base.report.probes,
        skipped: base.report.skipped_kinks,
    });
    let worst = lines
        .iter()
        .map(|l| l.max_relative_error)
        .fold(0.0f64, f64::max);
    if worst >= 1e-4 {
        return Err(TapemError::Numeric(format!(
            "gradient check breached tolerance: max relative error {worst:e}"
        )));
    }
    Ok(lines)
}
