use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tapem::cli::{
    cmd_eval, cmd_export, cmd_gradcheck, cmd_rank, cmd_synth, cmd_train, EvalOptions, ExportWhat,
    SplitSel,
};
use tapem::error::{Result, TapemError};
use tapem::model::ModelKind;
use tapem::objective::TrainingConfig;

#[derive(Parser)]
#[command(
    name = "tapem",
    about = "Task-guided pair embedding for author identification on heterogeneous academic networks",
    version
)]
struct Cli {
    /// Worker threads for walking, batching, and evaluation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArg {
    /// Dataset directory (defaults to $TAPEM_DATA_DIR).
    #[arg(long, env = "TAPEM_DATA_DIR")]
    data: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic planted-topic corpus.
    Synth {
        /// JSON config; omitted fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Train a model and keep the best-validation checkpoint.
    Train {
        #[command(flatten)]
        data: DataArg,
        /// JSON training config; omitted fields take published defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_model_kind, default_value = "tapem")]
        model: ModelKind,
        /// Continue from an existing checkpoint (epoch counter resumes).
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint: Recall/Precision/F1@N, AUC, slices, violations.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArg,
        #[arg(long, value_parser = SplitSel::parse, default_value = "test")]
        split: SplitSel,
        /// Candidate construction: sampled pool or the whole author set.
        #[arg(long, default_value = "sampled", value_parser = ["sampled", "whole"])]
        candidates: String,
        #[arg(long, default_value = "all", value_parser = ["all", "inactive"])]
        slice: String,
        /// Publication-count threshold for the inactive slice.
        #[arg(long, default_value_t = 5)]
        inactive_threshold: usize,
        /// Candidate pool size in sampled mode.
        #[arg(long, default_value_t = 100)]
        pool_size: usize,
        /// Also compute the average rank-violation count on training papers.
        #[arg(long)]
        violations: bool,
        /// Score by the paper-author dot product instead of the classifier.
        #[arg(long)]
        dot_scorer: bool,
        /// Report path (defaults next to the checkpoint).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dump per-paper rankings as TSV.
        #[arg(long)]
        dump_rankings: Option<PathBuf>,
    },
    /// Rank all known authors for an abstract (whitespace-separated tokens).
    Rank {
        #[arg(long)]
        checkpoint: PathBuf,
        /// File containing the abstract tokens.
        #[arg(long = "abstract")]
        abstract_file: PathBuf,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Export author or pair embeddings as TSV.
    Export {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = ["authors", "pairs"])]
        what: String,
        /// Pair list (paper<TAB>author), required for --what pairs.
        #[arg(long)]
        pairs: Option<PathBuf>,
        /// Dataset directory for abstracts, required for --what pairs.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Verify analytic gradients against finite differences.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn parse_model_kind(s: &str) -> std::result::Result<ModelKind, String> {
    ModelKind::parse(s).map_err(|e| e.to_string())
}

fn run(cli: Cli) -> Result<()> {
    #[cfg(feature = "parallel")]
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| TapemError::Config(format!("thread pool: {e}")))?;
    }
    #[cfg(not(feature = "parallel"))]
    if let Some(n) = cli.threads {
        if n > 1 {
            eprintln!("built without the parallel feature; running sequentially");
        }
    }

    match cli.command {
        Command::Synth { config, out, seed } => {
            let dir = cmd_synth(config.as_deref(), &out, seed)?;
            println!("dataset written to {}", dir.display());
        }
        Command::Train { data, config, out, model, resume, seed } => {
            let mut cfg = match config {
                Some(p) => TrainingConfig::from_json(&std::fs::read_to_string(&p)?)?,
                None => TrainingConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let summary = cmd_train(&data.data, &cfg, &out, model, resume.as_deref())?;
            println!(
                "trained {} epochs; best validation Recall@5 {:.4} at epoch {}; checkpoint {}",
                summary.epochs_run,
                summary.best_val_recall5,
                summary.best_epoch,
                summary.checkpoint.display()
            );
        }
        Command::Eval {
            checkpoint,
            data,
            split,
            candidates,
            slice,
            inactive_threshold,
            pool_size,
            violations,
            dot_scorer,
            out,
            dump_rankings,
        } => {
            let opts = EvalOptions {
                split,
                whole_set: candidates == "whole",
                inactive: slice == "inactive",
                inactive_threshold,
                violations,
                dot_scorer,
                pool_size,
                out,
                dump_rankings,
            };
            let report = cmd_eval(&checkpoint, &data.data, &opts)?;
            println!(
                "split={} candidates={} slice={} papers={}",
                report.split, report.mode, report.slice, report.papers
            );
            println!("{:>6} {:>10} {:>10} {:>10}", "N", "Recall", "Precision", "F1");
            for at in &report.at {
                println!(
                    "{:>6} {:>10.4} {:>10.4} {:>10.4}",
                    at.n, at.recall, at.precision, at.f1
                );
            }
            println!("{:>6} {:>10.4}", "AUC", report.auc);
            if let Some(v) = report.rank_violations {
                println!("average rank violations: {v:.4}");
            }
        }
        Command::Rank { checkpoint, abstract_file, top } => {
            let rows = cmd_rank(&checkpoint, &abstract_file, top)?;
            for (rank, (author, score)) in rows.iter().enumerate() {
                println!("{}\t{}\t{}", rank + 1, author, score);
            }
        }
        Command::Export { checkpoint, out, what, pairs, data } => {
            let what = match what.as_str() {
                "authors" => ExportWhat::Authors,
                _ => ExportWhat::Pairs,
            };
            let rows = cmd_export(&checkpoint, &out, what, pairs.as_deref(), data.as_deref())?;
            println!("wrote {rows} rows to {}", out.display());
        }
        Command::Gradcheck { config } => {
            let lines = cmd_gradcheck(config.as_deref())?;
            for l in &lines {
                println!(
                    "{:<14} max_rel_err={:.3e} probes={} kinks_skipped={}",
                    l.group, l.max_relative_error, l.probes, l.skipped
                );
            }
            println!("all parameter groups within 1e-4");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's default help/version exits are not errors
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
