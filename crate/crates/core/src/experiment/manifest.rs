//! Experiment manifests and their execution.
//!
//! A manifest is a JSON document:
//!
//! ```json
//! {
//!   "output_dir": "results/rcv1-sample",
//!   "parallelism": 4,
//!   "runs": [
//!     {"corpus": "corpus.jsonl", "category": "C15",
//!      "strategy": {"kind": "relevance", "batch_size": 200}}
//!   ]
//! }
//! ```
//!
//! Each run accepts every [`RunConfig`] field; omitted ones take their
//! defaults (20 iterations, 80% recall, uniform and expensive-training
//! costs, logistic regression with C = 1). Relative paths are resolved
//! against the manifest's directory. When `output_dir` is absent the
//! `TARSIM_OUTPUT_DIR` environment variable is used.
//!
//! Every run writes `<name>.run.jsonl` (see [`crate::engine`]), a timing
//! sidecar, and `<name>.metrics.jsonl`. Runs whose finished output already
//! exists with the same config are skipped unless forced.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::aggregate::write_metrics_report;
use super::{io_error, ExperimentError};
use crate::corpus::{load_corpus, Corpus, CorpusFormat};
use crate::engine::{self, load_run, persist_run, ClassifierSpec, RunConfig, RunError, RunStatus};
use crate::features::{self, FeatureMatrix};

pub const OUTPUT_DIR_ENV: &str = "TARSIM_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    pub runs: Vec<RunConfig>,
}

fn default_parallelism() -> usize {
    1
}

impl ExperimentManifest {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.parallelism == 0 {
            return Err(ExperimentError::Manifest("parallelism must be at least 1".into()));
        }
        let mut triples = HashSet::new();
        let mut names = HashSet::new();
        for (i, run) in self.runs.iter().enumerate() {
            run.validate()
                .map_err(|e| ExperimentError::Manifest(format!("run {i}: {e}")))?;
            let classifier = serde_json::to_string(&run.classifier).expect("spec serializes");
            if !triples.insert((run.category.clone(), run.strategy, classifier)) {
                return Err(ExperimentError::Manifest(format!(
                    "run {i}: duplicate (category, strategy, classifier) for {:?}",
                    run.category
                )));
            }
            if !names.insert(run_name(run)) {
                return Err(ExperimentError::Manifest(format!(
                    "run {i}: output name {:?} collides with an earlier run",
                    run_name(run)
                )));
            }
        }
        Ok(())
    }
}

/// Reads a manifest and resolves relative paths against its directory.
pub fn load_manifest(path: &Path) -> Result<ExperimentManifest, ExperimentError> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    let mut manifest: ExperimentManifest =
        serde_json::from_str(&text).map_err(|e| ExperimentError::Parse {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
    let base = path.parent().unwrap_or(Path::new(""));
    let resolve = |p: &Path| if p.is_relative() { base.join(p) } else { p.to_owned() };
    manifest.output_dir = manifest.output_dir.as_deref().map(resolve);
    for run in &mut manifest.runs {
        run.corpus = resolve(&run.corpus);
    }
    manifest.validate()?;
    Ok(manifest)
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '.' | '_') { c } else { '_' })
        .collect()
}

/// Stable output name of a run, e.g. `C15__relevance-b200__logreg-c1__s0`.
pub fn run_name(run: &RunConfig) -> String {
    sanitize(&format!(
        "{}__{}-b{}__{}__s{}",
        run.category,
        run.strategy.kind,
        run.strategy.batch_size,
        run.classifier.label(),
        run.rng_seed
    ))
}

pub fn run_file_name(run: &RunConfig) -> String {
    format!("{}.run.jsonl", run_name(run))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExecuteOptions {
    /// Recompute runs whose output already exists.
    pub force: bool,
    /// Store feature matrices under `<output_dir>/features/` for reuse.
    pub feature_cache: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Completed { path: PathBuf, status: RunStatus },
    Skipped { path: PathBuf },
    Failed { name: String, error: String },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExecutionSummary {
    /// One entry per manifest run, in manifest order.
    pub outcomes: Vec<RunOutcome>,
}

impl ExecutionSummary {
    pub fn computed(&self) -> usize {
        self.outcomes
            .iter()
            .filter(|o| matches!(o, RunOutcome::Completed { .. }))
            .count()
    }

    pub fn skipped(&self) -> usize {
        self.outcomes
            .iter()
            .filter(|o| matches!(o, RunOutcome::Skipped { .. }))
            .count()
    }

    pub fn failures(&self) -> Vec<(&str, &str)> {
        self.outcomes
            .iter()
            .filter_map(|o| match o {
                RunOutcome::Failed { name, error } => Some((name.as_str(), error.as_str())),
                _ => None,
            })
            .collect()
    }

    pub fn success(&self) -> bool {
        self.failures().is_empty()
    }
}

fn resolve_output_dir(manifest: &ExperimentManifest) -> Result<PathBuf, ExperimentError> {
    if let Some(dir) = &manifest.output_dir {
        return Ok(dir.clone());
    }
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => Ok(PathBuf::from(dir)),
        _ => Err(ExperimentError::NoOutputDir),
    }
}

fn already_done(path: &Path, run: &RunConfig) -> bool {
    match load_run(path) {
        Ok(existing) => existing.is_finished() && existing.config == *run,
        Err(_) => false,
    }
}

type FeatureKey = (PathBuf, String);

/// Executes every run of the manifest. Individual run failures are reported
/// in the summary; the error result is reserved for problems that prevent
/// execution as a whole.
pub fn execute(manifest: &ExperimentManifest, options: ExecuteOptions) -> Result<ExecutionSummary, ExperimentError> {
    manifest.validate()?;
    let out_dir = resolve_output_dir(manifest)?;
    fs::create_dir_all(&out_dir).map_err(io_error(&out_dir))?;

    let pending: Vec<bool> = manifest
        .runs
        .iter()
        .map(|run| options.force || !already_done(&out_dir.join(run_file_name(run)), run))
        .collect();

    let mut corpora: HashMap<PathBuf, Result<Arc<Corpus>, String>> = HashMap::new();
    for (run, _) in manifest.runs.iter().zip(&pending).filter(|(_, p)| **p) {
        corpora.entry(run.corpus.clone()).or_insert_with(|| {
            load_corpus(&run.corpus, CorpusFormat::Jsonl)
                .map(Arc::new)
                .map_err(|e| format!("loading corpus {}: {e}", run.corpus.display()))
        });
    }

    let mut features: BTreeMap<FeatureKey, Result<Arc<FeatureMatrix>, String>> = BTreeMap::new();
    for (run, _) in manifest.runs.iter().zip(&pending).filter(|(_, p)| **p) {
        if !matches!(run.classifier, ClassifierSpec::Logreg { .. }) {
            continue;
        }
        let Some(Ok(corpus)) = corpora.get(&run.corpus) else {
            continue;
        };
        let key = (
            run.corpus.clone(),
            serde_json::to_string(&run.vectorizer).expect("config serializes"),
        );
        if features.contains_key(&key) {
            continue;
        }
        let matrix = build_features(corpus, run, &out_dir, options.feature_cache);
        features.insert(key, matrix);
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(manifest.parallelism)
        .build()
        .map_err(|e| ExperimentError::Manifest(format!("thread pool: {e}")))?;
    let outcomes = pool.install(|| {
        manifest
            .runs
            .par_iter()
            .zip(pending.par_iter())
            .map(|(run, &todo)| {
                let path = out_dir.join(run_file_name(run));
                if !todo {
                    log::info!("skipping {} (already complete)", path.display());
                    return RunOutcome::Skipped { path };
                }
                execute_one(run, &path, &out_dir, &corpora, &features)
            })
            .collect()
    });
    Ok(ExecutionSummary { outcomes })
}

fn build_features(
    corpus: &Corpus,
    run: &RunConfig,
    out_dir: &Path,
    use_cache: bool,
) -> Result<Arc<FeatureMatrix>, String> {
    let key = features::cache_key(corpus, &run.vectorizer);
    let cache_path = out_dir.join("features").join(format!("{key}.features"));
    if use_cache {
        match features::load_cache(&cache_path, &key) {
            Ok(Some(m)) if m.n_rows() == corpus.len() => return Ok(Arc::new(m)),
            Ok(_) => {}
            Err(e) => log::warn!("ignoring feature cache: {e}"),
        }
    }
    let matrix = features::featurize(corpus, &run.vectorizer).map_err(|e| e.to_string())?;
    if use_cache {
        let saved = fs::create_dir_all(cache_path.parent().expect("has parent"))
            .map_err(|e| e.to_string())
            .and_then(|()| features::save_cache(&matrix, &key, &cache_path).map_err(|e| e.to_string()));
        if let Err(e) = saved {
            log::warn!("could not write feature cache: {e}");
        }
    }
    Ok(Arc::new(matrix))
}

fn execute_one(
    run: &RunConfig,
    path: &Path,
    out_dir: &Path,
    corpora: &HashMap<PathBuf, Result<Arc<Corpus>, String>>,
    features: &BTreeMap<FeatureKey, Result<Arc<FeatureMatrix>, String>>,
) -> RunOutcome {
    let name = run_name(run);
    let fail = |error: String| {
        log::error!("{name}: {error}");
        RunOutcome::Failed {
            name: name.clone(),
            error,
        }
    };
    let corpus = match corpora.get(&run.corpus) {
        Some(Ok(c)) => Arc::clone(c),
        Some(Err(e)) => return fail(e.clone()),
        None => return fail(format!("corpus {} was not loaded", run.corpus.display())),
    };
    if corpus.relevant_count(&run.category) == 0 {
        return fail(format!(
            "category {:?} has no relevant documents in {}",
            run.category,
            run.corpus.display()
        ));
    }
    let matrix = match &run.classifier {
        ClassifierSpec::Logreg { .. } => {
            let key = (
                run.corpus.clone(),
                serde_json::to_string(&run.vectorizer).expect("config serializes"),
            );
            match features.get(&key) {
                Some(Ok(m)) => Some(Arc::clone(m)),
                Some(Err(e)) => return fail(format!("features: {e}")),
                None => None,
            }
        }
        ClassifierSpec::Plugin(_) => None,
    };
    log::info!("running {name}");
    let result = engine::build_scorer(run, &corpus, matrix)
        .and_then(|mut scorer| engine::run_with_scorer(run, &corpus, scorer.as_mut()));
    match result {
        Ok(result) => {
            if let Err(e) = persist_run(&result, path) {
                return fail(e.to_string());
            }
            let metrics_path = out_dir.join(format!("{name}.metrics.jsonl"));
            if let Err(e) = write_metrics_report(&result, &name, &metrics_path) {
                return fail(e.to_string());
            }
            RunOutcome::Completed {
                path: path.to_owned(),
                status: result.status,
            }
        }
        Err(RunError::Aborted { partial, source, .. }) => {
            if let Err(e) = persist_run(&partial, path) {
                log::error!("{name}: could not persist partial run: {e}");
            }
            fail(format!("aborted: {source}"))
        }
        Err(e) => fail(e.to_string()),
    }
}
