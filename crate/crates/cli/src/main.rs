//! `spanfuse`: calibrate, fuse, evaluate and search ensembles of QA systems
//! from JSONL prediction files.
//!
//! Exit codes: 0 success, 1 data or compute failure, 2 usage or config error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spanfuse_core::aggregate::AggregationStrategy;
use spanfuse_core::calibrate::Normalization;
use spanfuse_core::fuse::TypeFusion;
use spanfuse_core::ingest::SplitMode;
use spanfuse_core::metrics::ShortMatch;
use spanfuse_core::search::Strategy;

use crate::config::{EvalOn, RunConfig};

/// A usage or configuration problem (exit code 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "spanfuse", version, about = "Span-level ensembling of extractive QA systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and cross-check gold and prediction files.
    Validate(DataCmd),
    /// Fit one logistic calibrator per system and answer type on the train split.
    Calibrate(FusionCmd),
    /// Fuse every given system into one ensemble and report F1.
    Fuse(FusionCmd),
    /// Search for the best ensemble over a pool of systems.
    Search(SearchCmd),
    /// Score a fused prediction file.
    Eval(EvalCmd),
    /// Generate a synthetic corpus.
    Synth(SynthCmd),
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// JSON or TOML run config; explicit flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Seed for cross-validation folds and synthetic data.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). `SPANFUSE_JOBS` overrides this.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct DataArgs {
    /// Gold file or directory of `*.jsonl` files (repeatable; order defines file splits).
    #[arg(long)]
    gold: Vec<PathBuf>,
    /// Prediction file or directory of `*.jsonl` files (repeatable).
    #[arg(long)]
    pred: Vec<PathBuf>,
    /// Use the first N gold files as the train split.
    #[arg(long, conflicts_with = "split_fraction")]
    split_files: Option<usize>,
    /// Use the first fraction of gold examples as the train split.
    #[arg(long)]
    split_fraction: Option<f64>,
    /// Annotations needed for an example to count as answerable.
    #[arg(long)]
    threshold: Option<usize>,
    /// Short-answer matching: strict or relaxed.
    #[arg(long)]
    short_match: Option<ShortMatch>,
    /// Keep the top K candidates per example and answer type.
    #[arg(long)]
    top_k: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct FusionArgs {
    /// Short-answer aggregation: max, exs, exs:<beta>, rrs, noisy-or.
    #[arg(long)]
    sa_agg: Option<AggregationStrategy>,
    /// Long-answer aggregation.
    #[arg(long)]
    la_agg: Option<AggregationStrategy>,
    /// Short-answer normalization: none or logreg.
    #[arg(long)]
    sa_norm: Option<Normalization>,
    /// Long-answer normalization.
    #[arg(long)]
    la_norm: Option<Normalization>,
    /// Only predict short answers inside the predicted long answer.
    #[arg(long)]
    restrict_short_to_long: bool,
    /// Directory of fitted calibrators (fitted on the train split if omitted).
    #[arg(long)]
    calibrators: Option<PathBuf>,
    /// Comma-separated inverse regularization strengths to cross-validate.
    #[arg(long, value_delimiter = ',')]
    c_grid: Option<Vec<f64>>,
    /// Cross-validation folds.
    #[arg(long)]
    folds: Option<usize>,
}

#[derive(Args, Debug)]
struct DataCmd {
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args, Debug)]
struct FusionCmd {
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    fusion: FusionArgs,
    /// Split to report on: train, test or all.
    #[arg(long)]
    eval_on: Option<EvalOn>,
}

#[derive(Args, Debug)]
struct SearchCmd {
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    fusion: FusionArgs,
    /// exhaustive, greedy or simple-greedy.
    #[arg(long)]
    strategy: Option<Strategy>,
    /// Ensemble size.
    #[arg(long)]
    k: Option<usize>,
    /// Greedy steps optimizing short-answer F1 (the rest optimize long-answer F1).
    #[arg(long)]
    ks: Option<usize>,
    /// Restrict the pool to the top N systems by single-model SA+LA train F1.
    #[arg(long)]
    pool_top_n: Option<usize>,
    /// Aggregation (unnormalized) used while selecting models.
    #[arg(long)]
    select_agg: Option<AggregationStrategy>,
    /// Aggregation for both answer types of the final predictions.
    #[arg(long)]
    predict_agg: Option<AggregationStrategy>,
    /// Maximum exhaustive subset evaluations.
    #[arg(long)]
    budget: Option<u128>,
    /// Ignore the exhaustive budget.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct EvalCmd {
    #[command(flatten)]
    run: RunArgs,
    /// Gold file or directory (repeatable).
    #[arg(long)]
    gold: Vec<PathBuf>,
    /// Fused prediction file to score.
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long, conflicts_with = "split_fraction")]
    split_files: Option<usize>,
    #[arg(long)]
    split_fraction: Option<f64>,
    #[arg(long)]
    threshold: Option<usize>,
    #[arg(long)]
    short_match: Option<ShortMatch>,
    /// Split to report on: train, test or all.
    #[arg(long)]
    eval_on: Option<EvalOn>,
}

#[derive(Args, Debug)]
struct SynthCmd {
    #[command(flatten)]
    run: RunArgs,
    /// JSON synthetic spec; preset flags are ignored when given.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// pool (default), clustered or seed-variants.
    #[arg(long)]
    preset: Option<String>,
    /// Number of systems (clustered: strong systems are the first half, rounded down).
    #[arg(long)]
    systems: Option<usize>,
    #[arg(long)]
    examples: Option<usize>,
    /// Within-cluster correlation.
    #[arg(long)]
    rho: Option<f64>,
    /// Score noise.
    #[arg(long)]
    sigma: Option<f64>,
    /// Candidates per example and answer type (at most 20).
    #[arg(long)]
    candidates: Option<usize>,
    /// Number of gold files.
    #[arg(long)]
    files: Option<usize>,
}

fn base_config(run: &RunArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = match &run.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &run.out_dir {
        cfg.out_dir = Some(dir.clone());
    }
    if let Some(seed) = run.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn apply_split(cfg: &mut RunConfig, files: Option<usize>, fraction: Option<f64>) {
    if let Some(train_files) = files {
        cfg.split = SplitMode::Files { train_files };
    }
    if let Some(ratio) = fraction {
        cfg.split = SplitMode::Fraction { ratio };
    }
}

fn apply_data(cfg: &mut RunConfig, data: &DataArgs) -> anyhow::Result<()> {
    if !data.gold.is_empty() {
        cfg.gold = commands::expand_jsonl(&data.gold)?;
    }
    if !data.pred.is_empty() {
        cfg.predictions = commands::expand_jsonl(&data.pred)?;
    }
    apply_split(cfg, data.split_files, data.split_fraction);
    if let Some(t) = data.threshold {
        cfg.metric.threshold = t;
    }
    if let Some(m) = data.short_match {
        cfg.metric.short_match = m;
    }
    if let Some(k) = data.top_k {
        cfg.top_k = k;
    }
    Ok(())
}

/// Sets one answer type's aggregation; noisy-or defaults its normalization
/// to logreg unless a normalization was given explicitly.
fn set_agg(tf: &mut TypeFusion, agg: AggregationStrategy, explicit_norm: Option<Normalization>) {
    tf.aggregation = agg;
    if agg == AggregationStrategy::NoisyOr && explicit_norm.is_none() {
        tf.normalization = Normalization::Logreg;
    }
}

fn apply_fusion(cfg: &mut RunConfig, f: &FusionArgs) {
    if let Some(n) = f.sa_norm {
        cfg.fusion.short.normalization = n;
    }
    if let Some(n) = f.la_norm {
        cfg.fusion.long.normalization = n;
    }
    if let Some(a) = f.sa_agg {
        set_agg(&mut cfg.fusion.short, a, f.sa_norm);
    }
    if let Some(a) = f.la_agg {
        set_agg(&mut cfg.fusion.long, a, f.la_norm);
    }
    if f.restrict_short_to_long {
        cfg.fusion.restrict_short_to_long = true;
    }
    if let Some(dir) = &f.calibrators {
        cfg.calibrators = Some(dir.clone());
    }
    if let Some(grid) = &f.c_grid {
        cfg.calibration.c_grid = grid.clone();
    }
    if let Some(folds) = f.folds {
        cfg.calibration.folds = folds;
    }
}

fn search_config(cmd: &SearchCmd) -> anyhow::Result<RunConfig> {
    let mut cfg = base_config(&cmd.run)?;
    apply_data(&mut cfg, &cmd.data)?;
    apply_fusion(&mut cfg, &cmd.fusion);
    if let Some(agg) = cmd.predict_agg {
        set_agg(&mut cfg.fusion.short, agg, cmd.fusion.sa_norm);
        set_agg(&mut cfg.fusion.long, agg, cmd.fusion.la_norm);
    }
    if let Some(agg) = cmd.select_agg {
        let unnormalized = TypeFusion {
            normalization: Normalization::None,
            aggregation: agg,
        };
        cfg.search.selection_fusion = Some(spanfuse_core::fuse::FusionConfig {
            long: unnormalized,
            short: unnormalized,
            restrict_short_to_long: cfg.fusion.restrict_short_to_long,
        });
    }
    let s = &mut cfg.search;
    if let Some(v) = cmd.strategy {
        s.strategy = v;
    }
    if let Some(v) = cmd.k {
        s.k = v;
    }
    if let Some(v) = cmd.ks {
        s.k_s = v;
    }
    if let Some(v) = cmd.pool_top_n {
        s.pool_top_n = Some(v);
    }
    if let Some(v) = cmd.budget {
        s.budget = v;
    }
    if cmd.force {
        s.force = true;
    }
    Ok(cfg)
}

fn resolve_jobs(flag: Option<usize>) -> anyhow::Result<Option<usize>> {
    match std::env::var("SPANFUSE_JOBS") {
        Ok(v) if !v.trim().is_empty() => {
            let n = v
                .trim()
                .parse()
                .map_err(|_| UsageError(format!("SPANFUSE_JOBS=`{v}` is not a thread count")))?;
            Ok(Some(n))
        }
        _ => Ok(flag),
    }
}

fn init_threads(jobs: Option<usize>) -> anyhow::Result<()> {
    if jobs == Some(0) {
        return Err(UsageError("--jobs must be at least 1".into()).into());
    }
    #[cfg(feature = "parallel")]
    if let Some(n) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow::anyhow!("starting worker threads: {e}"))?;
    }
    #[cfg(not(feature = "parallel"))]
    if jobs.is_some_and(|n| n > 1) {
        log::warn!("built without the `parallel` feature; --jobs is ignored");
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let run_args = match &cli.command {
        Command::Validate(c) => &c.run,
        Command::Calibrate(c) | Command::Fuse(c) => &c.run,
        Command::Search(c) => &c.run,
        Command::Eval(c) => &c.run,
        Command::Synth(c) => &c.run,
    };
    init_threads(resolve_jobs(run_args.jobs)?)?;

    match &cli.command {
        Command::Validate(c) => {
            let mut cfg = base_config(&c.run)?;
            apply_data(&mut cfg, &c.data)?;
            commands::validate(&cfg)
        }
        Command::Calibrate(c) => {
            let mut cfg = base_config(&c.run)?;
            apply_data(&mut cfg, &c.data)?;
            apply_fusion(&mut cfg, &c.fusion);
            commands::calibrate(&cfg)
        }
        Command::Fuse(c) => {
            let mut cfg = base_config(&c.run)?;
            apply_data(&mut cfg, &c.data)?;
            apply_fusion(&mut cfg, &c.fusion);
            if let Some(e) = c.eval_on {
                cfg.eval_on = e;
            }
            commands::fuse(&cfg)
        }
        Command::Search(c) => commands::search(&search_config(c)?),
        Command::Eval(c) => {
            let mut cfg = base_config(&c.run)?;
            if !c.gold.is_empty() {
                cfg.gold = commands::expand_jsonl(&c.gold)?;
            }
            if let Some(p) = &c.predictions {
                cfg.eval_predictions = Some(p.clone());
            }
            apply_split(&mut cfg, c.split_files, c.split_fraction);
            if let Some(t) = c.threshold {
                cfg.metric.threshold = t;
            }
            if let Some(m) = c.short_match {
                cfg.metric.short_match = m;
            }
            if let Some(e) = c.eval_on {
                cfg.eval_on = e;
            }
            commands::eval(&cfg)
        }
        Command::Synth(c) => {
            let mut cfg = base_config(&c.run)?;
            commands::synth(&mut cfg, c)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let usage = err.chain().any(|e| {
        e.is::<UsageError>() || matches!(e.downcast_ref::<spanfuse_core::Error>(), Some(spanfuse_core::Error::Config(_)))
    });
    if usage {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
