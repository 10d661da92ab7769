//! `tarsim`: run, aggregate and inspect simulated review experiments.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use tarsim_core::corpus::{self, assign_bins, BinThresholds, CategoryBin, CorpusFormat};
use tarsim_core::engine::timing_report;
use tarsim_core::experiment::{
    self, ExecuteOptions, RunOutcome, SynthSpec, OUTPUT_DIR_ENV,
};

#[derive(Debug, Parser)]
#[command(name = "tarsim", version, about = "Technology-assisted review simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Execute every run of a manifest.
    Run {
        manifest: PathBuf,
        /// Recompute runs that already have finished output.
        #[arg(long)]
        force: bool,
        /// Output directory when the manifest does not name one.
        #[arg(long, env = OUTPUT_DIR_ENV)]
        output_dir: Option<PathBuf>,
        /// Cache feature matrices under <output_dir>/features.
        #[arg(long)]
        feature_cache: bool,
    },
    /// Compare a results directory with a baseline directory.
    Aggregate {
        results: PathBuf,
        #[arg(long)]
        baseline: PathBuf,
        /// JSON list of {category, prevalence_bin, difficulty_bin}.
        #[arg(long)]
        bins: Option<PathBuf>,
        /// Print the report as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Generate a synthetic labeled corpus.
    Synth {
        spec: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        seed: u64,
    },
    /// Write the cost-per-iteration series of a category as TSV.
    Trajectory {
        results: PathBuf,
        #[arg(long)]
        category: String,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Assign categories to prevalence and difficulty bins.
    ///
    /// Prevalence comes from the corpus, difficulty from the final
    /// R-Precision of the baseline runs, cut at its terciles unless given.
    Bins {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        baseline: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Use only baseline runs with this sampling strategy.
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long, default_value_t = BinThresholds::DEFAULT_PREVALENCE_MEDIUM_FROM)]
        prevalence_medium_from: f64,
        #[arg(long, default_value_t = BinThresholds::DEFAULT_PREVALENCE_COMMON_FROM)]
        prevalence_common_from: f64,
        #[arg(long, requires = "difficulty_easy_from")]
        difficulty_medium_from: Option<f64>,
        #[arg(long, requires = "difficulty_medium_from")]
        difficulty_easy_from: Option<f64>,
    },
    /// Keep a random fraction of a corpus.
    Downsample {
        corpus: PathBuf,
        #[arg(long)]
        fraction: f64,
        #[arg(long)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Summarize wall-clock time of the runs in a results directory.
    Timing { results: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run {
            manifest,
            force,
            output_dir,
            feature_cache,
        } => cmd_run(&manifest, force, output_dir, feature_cache),
        Command::Aggregate {
            results,
            baseline,
            bins,
            json,
        } => cmd_aggregate(&results, &baseline, bins.as_deref(), json),
        Command::Synth { spec, output, seed } => cmd_synth(&spec, &output, seed),
        Command::Trajectory {
            results,
            category,
            output,
        } => {
            let runs: Vec<_> = experiment::read_run_dir(&results)?.into_iter().map(|(_, r)| r).collect();
            let points = experiment::trajectory(&runs, &category)?;
            experiment::write_trajectory(&points, &output)?;
            eprintln!("wrote {} rows to {}", points.len(), output.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Bins {
            corpus,
            baseline,
            output,
            strategy,
            prevalence_medium_from,
            prevalence_common_from,
            difficulty_medium_from,
            difficulty_easy_from,
        } => {
            let bins = compute_bins(
                &corpus,
                &baseline,
                strategy.as_deref(),
                (prevalence_medium_from, prevalence_common_from),
                difficulty_medium_from.zip(difficulty_easy_from),
            )?;
            let text = serde_json::to_string_pretty(&bins)?;
            std::fs::write(&output, text + "\n").with_context(|| format!("writing {}", output.display()))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Downsample {
            corpus,
            fraction,
            seed,
            output,
        } => {
            let c = corpus::load_corpus(&corpus, CorpusFormat::Jsonl)?;
            let sample = corpus::downsample(&c, fraction, seed)?;
            sample.save(&output)?;
            eprintln!("kept {} of {} documents", sample.len(), c.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Timing { results } => {
            let runs: Vec<_> = experiment::read_run_dir(&results)?.into_iter().map(|(_, r)| r).collect();
            println!("{}", serde_json::to_string_pretty(&timing_report(&runs))?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn cmd_run(manifest: &Path, force: bool, output_dir: Option<PathBuf>, feature_cache: bool) -> Result<ExitCode> {
    let mut m = experiment::load_manifest(manifest)?;
    if m.output_dir.is_none() {
        m.output_dir = output_dir;
    }
    let summary = experiment::execute(&m, ExecuteOptions { force, feature_cache })?;
    for outcome in &summary.outcomes {
        match outcome {
            RunOutcome::Completed { path, status } => {
                log::info!("{}: {status:?}", path.display());
            }
            RunOutcome::Skipped { path } => log::info!("{}: skipped", path.display()),
            RunOutcome::Failed { name, error } => eprintln!("run {name} failed: {error}"),
        }
    }
    eprintln!(
        "{} computed, {} skipped, {} failed",
        summary.computed(),
        summary.skipped(),
        summary.failures().len()
    );
    Ok(if summary.success() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_aggregate(results: &Path, baseline: &Path, bins: Option<&Path>, json: bool) -> Result<ExitCode> {
    let runs = experiment::read_metrics_dir(results)?;
    let base = experiment::read_metrics_dir(baseline)?;
    if runs.is_empty() {
        bail!("no metrics reports in {}", results.display());
    }
    if base.is_empty() {
        bail!("no metrics reports in {}", baseline.display());
    }
    let bins: Option<Vec<CategoryBin>> = bins
        .map(|p| -> Result<_> {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        })
        .transpose()?;
    let report = experiment::aggregate(&runs, &base, bins.as_deref())?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", experiment::render_table(&report));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_synth(spec: &Path, output: &Path, seed: u64) -> Result<ExitCode> {
    let text = std::fs::read_to_string(spec).with_context(|| format!("reading {}", spec.display()))?;
    let spec: SynthSpec = serde_json::from_str(&text).with_context(|| format!("parsing {}", spec.display()))?;
    let corpus = experiment::synthesize(&spec, seed)?;
    corpus.save(output)?;
    eprintln!("wrote {} documents to {}", corpus.len(), output.display());
    Ok(ExitCode::SUCCESS)
}

fn compute_bins(
    corpus_path: &Path,
    baseline: &Path,
    strategy: Option<&str>,
    prevalence_cuts: (f64, f64),
    difficulty_cuts: Option<(f64, f64)>,
) -> Result<Vec<CategoryBin>> {
    let c = corpus::load_corpus(corpus_path, CorpusFormat::Jsonl)?;
    let records = experiment::read_metrics_dir(baseline)?;
    // Final R-Precision of each baseline run.
    let mut by_run: HashMap<&str, (&str, usize, f64)> = HashMap::new();
    for r in records.iter().filter(|r| strategy.is_none_or(|s| s == r.strategy)) {
        let e = by_run.entry(&r.run).or_insert((&r.category, 0, 0.0));
        if r.iteration >= e.1 {
            *e = (&r.category, r.iteration, r.r_precision);
        }
    }
    let mut last: HashMap<String, (usize, f64)> = HashMap::new();
    for (run, (category, iteration, rp)) in by_run {
        if last.insert(category.to_owned(), (iteration, rp)).is_some() {
            bail!("several baseline runs for category {category:?} (e.g. {run}); pick one with --strategy");
        }
    }
    let mut categories: Vec<String> = last.keys().cloned().collect();
    categories.sort();
    if categories.is_empty() {
        bail!("no baseline metrics in {}", baseline.display());
    }
    let difficulty: HashMap<String, f64> = last.into_iter().map(|(k, (_, rp))| (k, rp)).collect();
    let prevalence: HashMap<String, f64> = categories
        .iter()
        .map(|cat| (cat.clone(), corpus::category_prevalence(&c, cat)))
        .collect();
    let mut thresholds = match difficulty_cuts {
        Some((medium, easy)) => BinThresholds {
            prevalence_medium_from: 0.0,
            prevalence_common_from: 0.0,
            difficulty_medium_from: medium,
            difficulty_easy_from: easy,
        },
        None => {
            let scores: Vec<f64> = categories.iter().map(|c| difficulty[c]).collect();
            BinThresholds::with_difficulty_terciles(&scores)
        }
    };
    thresholds.prevalence_medium_from = prevalence_cuts.0;
    thresholds.prevalence_common_from = prevalence_cuts.1;
    Ok(assign_bins(&categories, &prevalence, &difficulty, &thresholds)?)
}
