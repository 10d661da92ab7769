//! The review loop.
//!
//! Iteration 0 labels a random relevant seed. Each iteration `k >= 1` then
//! trains on everything labeled so far, scores the collection, records the
//! metrics of that model, selects the next batch and reveals its gold
//! labels. The metrics of iteration `k` therefore describe a model trained on
//! `1 + (k - 1) * B` documents.
//!
//! # Run file format
//!
//! A run is stored as JSON Lines: the [`RunConfig`] on the first line, one
//! [`IterationRecord`] per line, and a final `{"summary": ..}` line holding
//! the status and per-cost-structure minimum. Wall-clock timings are not
//! part of it (they would break byte-for-byte reproducibility); they go to a
//! sidecar file, see [`timings_path`].

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classifier::plugin::{plugin_corpus_path, PluginLaunchSpec, PluginScorer};
use crate::classifier::{ClassifierError, LabeledSet, LogRegScorer, ScoreVector, Scorer};
use crate::corpus::Corpus;
use crate::features::{featurize, FeatureError, FeatureMatrix, VectorizerConfig};
use crate::metrics::{self, CostBreakdown, CostStructure, MetricsError, RunState};
use crate::sampling::{self, SamplingError, SamplingStrategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassifierSpec {
    Logreg {
        #[serde(default = "default_penalty")]
        penalty: f64,
    },
    Plugin(PluginLaunchSpec),
}

fn default_penalty() -> f64 {
    1.0
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        ClassifierSpec::Logreg {
            penalty: default_penalty(),
        }
    }
}

impl ClassifierSpec {
    /// Short filesystem-safe name, e.g. `logreg-c1` or `plugin-bert`.
    pub fn label(&self) -> String {
        match self {
            ClassifierSpec::Logreg { penalty } => format!("logreg-c{penalty}"),
            ClassifierSpec::Plugin(spec) => {
                let program = Path::new(&spec.program)
                    .file_stem()
                    .map_or_else(|| spec.program.clone(), |s| s.to_string_lossy().into_owned());
                let script = spec
                    .args
                    .iter()
                    .find(|a| !a.starts_with('-'))
                    .and_then(|a| Path::new(a).file_stem())
                    .map(|s| format!("-{}", s.to_string_lossy()))
                    .unwrap_or_default();
                format!("plugin-{program}{script}")
            }
        }
    }
}

fn default_iterations() -> usize {
    20
}

fn default_recall_target() -> f64 {
    0.8
}

fn default_cost_structures() -> Vec<CostStructure> {
    vec![CostStructure::uniform(), CostStructure::expensive_training()]
}

/// Every setting of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub category: String,
    pub strategy: SamplingStrategy,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_recall_target")]
    pub recall_target: f64,
    #[serde(default = "default_cost_structures")]
    pub cost_structures: Vec<CostStructure>,
    #[serde(default)]
    pub classifier: ClassifierSpec,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub vectorizer: VectorizerConfig,
}

impl RunConfig {
    pub fn new(corpus: impl Into<PathBuf>, category: impl Into<String>, strategy: SamplingStrategy) -> Self {
        Self {
            corpus: corpus.into(),
            category: category.into(),
            strategy,
            iterations: default_iterations(),
            recall_target: default_recall_target(),
            cost_structures: default_cost_structures(),
            classifier: ClassifierSpec::default(),
            rng_seed: 0,
            vectorizer: VectorizerConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if !(self.recall_target > 0.0 && self.recall_target <= 1.0) {
            return bad(format!("recall_target must be in (0, 1], got {}", self.recall_target));
        }
        if self.strategy.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.cost_structures.is_empty() {
            return bad("at least one cost structure is required".into());
        }
        if let Some(cs) = self.cost_structures.iter().find(|c| !c.is_valid()) {
            return bad(format!("cost structure {cs:?} has a negative or non-finite entry"));
        }
        if let ClassifierSpec::Logreg { penalty } = self.classifier {
            if !(penalty > 0.0 && penalty.is_finite()) {
                return bad(format!("logreg penalty must be positive, got {penalty}"));
            }
        }
        self.vectorizer
            .validate()
            .map_err(|e| RunError::Config(e.to_string()))
    }
}

/// Wall-clock seconds spent in the classifier during one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub fit_seconds: f64,
    pub score_seconds: f64,
    /// Training time as reported by a plugin, when available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reported_train_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Labeled documents the model of this iteration was trained on.
    pub n_labeled: usize,
    pub n_labeled_pos: usize,
    pub n_labeled_neg: usize,
    pub r_precision: f64,
    /// Optimal second-phase review depth.
    pub d_star: usize,
    pub breakdown: CostBreakdown,
    /// Total cost under each of the run's cost structures, in config order.
    pub costs: Vec<f64>,
    pub dfr: f64,
    pub wss: f64,
    /// First 16 hex digits of the SHA-256 of the score bits.
    pub scores_digest: String,
    /// Documents chosen for review after this iteration's evaluation.
    pub batch_selected: Vec<String>,
    #[serde(skip)]
    pub timings: Option<Timings>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    /// Ran every configured iteration.
    Complete,
    /// Stopped early because every document was labeled.
    Exhausted,
    /// The classifier failed; records up to the failure are kept.
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinCost {
    pub cost_structure: CostStructure,
    pub iteration: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub config: RunConfig,
    pub records: Vec<IterationRecord>,
    /// One entry per cost structure; empty if no iteration was recorded.
    pub min_cost: Vec<MinCost>,
    pub status: RunStatus,
    pub error: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Summary {
    status: RunStatus,
    min_cost: Vec<MinCost>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SummaryLine {
    summary: Summary,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid run config: {0}")]
    Config(String),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("classifier setup failed: {0}")]
    Setup(#[source] ClassifierError),
    #[error("run aborted at iteration {iteration}: {source}")]
    Aborted {
        iteration: usize,
        partial: Box<RunResult>,
        #[source]
        source: ClassifierError,
    },
}

impl RunError {
    /// The partial result of an aborted run.
    pub fn partial(&self) -> Option<&RunResult> {
        match self {
            RunError::Aborted { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

fn scores_digest(scores: &ScoreVector) -> String {
    let mut hasher = Sha256::new();
    for v in scores.values() {
        hasher.update(v.to_le_bytes());
    }
    hex::encode(&hasher.finalize()[..8])
}

/// Builds the configured classifier. `features` is reused for logistic
/// regression when given, and computed from the corpus otherwise.
pub fn build_scorer(
    config: &RunConfig,
    corpus: &Arc<Corpus>,
    features: Option<Arc<FeatureMatrix>>,
) -> Result<Box<dyn Scorer>, RunError> {
    match &config.classifier {
        ClassifierSpec::Logreg { penalty } => {
            let features = match features {
                Some(f) => f,
                None => Arc::new(featurize(corpus, &config.vectorizer)?),
            };
            Ok(Box::new(LogRegScorer::new(Arc::clone(corpus), features, *penalty)))
        }
        ClassifierSpec::Plugin(spec) => {
            let path = plugin_corpus_path(&config.corpus);
            let scorer = PluginScorer::start(spec, &path, &config.category, corpus)
                .map_err(|e| RunError::Setup(e.into()))?;
            Ok(Box::new(scorer))
        }
    }
}

/// Runs one simulated review with the classifier named in `config`.
pub fn run_tar(config: &RunConfig, corpus: Arc<Corpus>) -> Result<RunResult, RunError> {
    config.validate()?;
    if corpus.relevant_count(&config.category) == 0 {
        return Err(SamplingError::EmptyCategory(config.category.clone()).into());
    }
    let mut scorer = build_scorer(config, &corpus, None)?;
    run_with_scorer(config, &corpus, scorer.as_mut())
}

/// Runs one simulated review with a caller-supplied classifier.
pub fn run_with_scorer(config: &RunConfig, corpus: &Corpus, scorer: &mut dyn Scorer) -> Result<RunResult, RunError> {
    config.validate()?;
    let qrels = corpus.relevant(&config.category);
    let seed = sampling::select_seed(corpus, &config.category, config.rng_seed)?;
    let mut labeled = LabeledSet::new();
    labeled.insert(seed, true, 0).expect("empty set");

    let mut records: Vec<IterationRecord> = Vec::with_capacity(config.iterations);
    let mut status = RunStatus::Complete;
    let abort = |records: Vec<IterationRecord>, iteration: usize, source: ClassifierError| {
        let partial = finish(config, records, RunStatus::Aborted, Some(source.to_string()));
        RunError::Aborted {
            iteration,
            partial: Box::new(partial),
            source,
        }
    };

    for k in 1..=config.iterations {
        let started = Instant::now();
        let reported = match scorer.fit(&labeled) {
            Ok(r) => r,
            Err(e) => {
                let _ = scorer.close();
                return Err(abort(records, k, e));
            }
        };
        let fit_seconds = started.elapsed().as_secs_f64();
        let started = Instant::now();
        let scores = match scorer.score() {
            Ok(s) if s.len() == corpus.len() => s,
            Ok(s) => {
                let _ = scorer.close();
                let e = ClassifierError::Plugin(crate::classifier::PluginError::ScoreCount {
                    expected: corpus.len(),
                    got: s.len(),
                });
                return Err(abort(records, k, e));
            }
            Err(e) => {
                let _ = scorer.close();
                return Err(abort(records, k, e));
            }
        };
        let score_seconds = started.elapsed().as_secs_f64();

        let state = RunState {
            corpus,
            labeled: &labeled,
            scores: &scores,
            qrels: &qrels,
            recall_target: config.recall_target,
        };
        let breakdown = metrics::cost_breakdown(&state)?;
        let ranking: Vec<&str> = metrics::rank(corpus, &scores)?
            .into_iter()
            .map(|i| corpus.doc_id(i))
            .collect();
        let dfr = metrics::dfr(&ranking, &qrels, config.recall_target)?;
        let mut record = IterationRecord {
            iteration: k,
            n_labeled: labeled.len(),
            n_labeled_pos: labeled.positives(),
            n_labeled_neg: labeled.negatives(),
            r_precision: metrics::r_precision(corpus, &scores, &qrels)?,
            d_star: breakdown.depth(),
            breakdown,
            costs: config.cost_structures.iter().map(|cs| breakdown.cost(cs)).collect(),
            dfr,
            wss: metrics::wss(dfr, config.recall_target),
            scores_digest: scores_digest(&scores),
            batch_selected: Vec::new(),
            timings: Some(Timings {
                fit_seconds,
                score_seconds,
                reported_train_seconds: reported,
            }),
        };

        let selection = match sampling::select_batch(corpus, &scores, &labeled, &config.strategy) {
            Ok(sel) => sel,
            Err(SamplingError::Exhausted) => {
                records.push(record);
                if k < config.iterations {
                    status = RunStatus::Exhausted;
                }
                break;
            }
            Err(e) => return Err(e.into()),
        };
        for id in &selection.doc_ids {
            let label = qrels.contains(id);
            labeled.insert(id.clone(), label, k).expect("selection excludes labeled documents");
        }
        record.batch_selected = selection.doc_ids;
        records.push(record);
    }

    if let Err(e) = scorer.close() {
        log::warn!("closing classifier: {e}");
    }
    Ok(finish(config, records, status, None))
}

fn finish(config: &RunConfig, records: Vec<IterationRecord>, status: RunStatus, error: Option<String>) -> RunResult {
    let min_cost = if records.is_empty() {
        Vec::new()
    } else {
        config
            .cost_structures
            .iter()
            .enumerate()
            .map(|(j, cs)| {
                let (iteration, cost) =
                    metrics::min_cost_over_run(records.iter().map(|r| (r.iteration, r.costs[j])))
                        .expect("records are non-empty");
                MinCost {
                    cost_structure: *cs,
                    iteration,
                    cost,
                }
            })
            .collect()
    };
    RunResult {
        config: config.clone(),
        records,
        min_cost,
        status,
        error,
    }
}

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: line {line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl RunResult {
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.config).expect("config serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        let summary = SummaryLine {
            summary: Summary {
                status: self.status,
                min_cost: self.min_cost.clone(),
                error: self.error.clone(),
            },
        };
        out.push_str(&serde_json::to_string(&summary).expect("summary serializes"));
        out.push('\n');
        out
    }

    /// Whether the run finished (completely or by exhaustion).
    pub fn is_finished(&self) -> bool {
        self.status != RunStatus::Aborted
    }

    /// Minimum cost entry for `cs`, if the run used it.
    pub fn min_cost_for(&self, cs: &CostStructure) -> Option<&MinCost> {
        self.min_cost.iter().find(|m| m.cost_structure == *cs)
    }
}

/// Sidecar file holding per-iteration timings for a run file.
pub fn timings_path(run_path: &Path) -> PathBuf {
    let mut name = run_path.file_name().unwrap_or_default().to_os_string();
    name.push(".timings");
    run_path.with_file_name(name)
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), PersistError> {
    let io_err = |source| PersistError::Io {
        path: path.to_owned(),
        source,
    };
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = BufWriter::new(File::create(&tmp).map_err(io_err)?);
        f.write_all(contents).map_err(io_err)?;
        f.flush().map_err(io_err)?;
    }
    fs::rename(&tmp, path).map_err(io_err)
}

/// Writes the run file and, when any record has timings, its sidecar.
pub fn persist_run(result: &RunResult, path: &Path) -> Result<(), PersistError> {
    let timings: Vec<_> = result
        .records
        .iter()
        .filter_map(|r| r.timings.map(|t| (r.iteration, t)))
        .collect();
    if !timings.is_empty() {
        let mut out = String::new();
        for (iteration, t) in timings {
            let line = serde_json::json!({
                "iteration": iteration,
                "timings": t,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        write_atomic(&timings_path(path), out.as_bytes())?;
    }
    write_atomic(path, result.to_jsonl().as_bytes())
}

pub fn load_run(path: &Path) -> Result<RunResult, PersistError> {
    let io_err = |source| PersistError::Io {
        path: path.to_owned(),
        source,
    };
    let parse_err = |line: usize, message: String| PersistError::Parse {
        path: path.to_owned(),
        line,
        message,
    };
    let file = File::open(path).map_err(io_err)?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(io_err)?;
    if lines.len() < 2 {
        return Err(parse_err(lines.len(), "truncated run file".into()));
    }
    let config: RunConfig =
        serde_json::from_str(&lines[0]).map_err(|e| parse_err(1, format!("config: {e}")))?;
    let last = lines.len() - 1;
    let summary: SummaryLine = serde_json::from_str(&lines[last])
        .map_err(|e| parse_err(last + 1, format!("missing or invalid summary line: {e}")))?;
    let mut records = Vec::with_capacity(last - 1);
    for (i, line) in lines[1..last].iter().enumerate() {
        let record: IterationRecord =
            serde_json::from_str(line).map_err(|e| parse_err(i + 2, format!("record: {e}")))?;
        if record.costs.len() != config.cost_structures.len() {
            return Err(parse_err(i + 2, "cost count does not match config".into()));
        }
        records.push(record);
    }
    let sidecar = timings_path(path);
    if sidecar.exists() {
        #[derive(Deserialize)]
        struct TimingLine {
            iteration: usize,
            timings: Timings,
        }
        let text = fs::read_to_string(&sidecar).map_err(|source| PersistError::Io {
            path: sidecar.clone(),
            source,
        })?;
        for (i, line) in text.lines().enumerate() {
            let t: TimingLine = serde_json::from_str(line).map_err(|e| PersistError::Parse {
                path: sidecar.clone(),
                line: i + 1,
                message: e.to_string(),
            })?;
            if let Some(r) = records.iter_mut().find(|r| r.iteration == t.iteration) {
                r.timings = Some(t.timings);
            }
        }
    }
    Ok(RunResult {
        config,
        records,
        min_cost: summary.summary.min_cost,
        status: summary.summary.status,
        error: summary.summary.error,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTiming {
    pub category: String,
    pub classifier: String,
    pub iterations: usize,
    pub total_fit_seconds: Option<f64>,
    pub total_score_seconds: Option<f64>,
    pub mean_fit_seconds: Option<f64>,
    pub mean_score_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingReport {
    pub runs: Vec<RunTiming>,
    pub total_fit_seconds: Option<f64>,
    pub total_score_seconds: Option<f64>,
    /// Mean of the per-run totals.
    pub mean_run_seconds: Option<f64>,
}

/// Wall-clock summary per run. Runs without timings report `None` rather
/// than zero.
pub fn timing_report(results: &[RunResult]) -> TimingReport {
    let runs: Vec<RunTiming> = results
        .iter()
        .map(|r| {
            let timed: Vec<Timings> = r.records.iter().filter_map(|rec| rec.timings).collect();
            let (total_fit, total_score) = if timed.is_empty() {
                (None, None)
            } else {
                (
                    Some(timed.iter().map(|t| t.fit_seconds).sum::<f64>()),
                    Some(timed.iter().map(|t| t.score_seconds).sum::<f64>()),
                )
            };
            let n = timed.len() as f64;
            RunTiming {
                category: r.config.category.clone(),
                classifier: r.config.classifier.label(),
                iterations: timed.len(),
                total_fit_seconds: total_fit,
                total_score_seconds: total_score,
                mean_fit_seconds: total_fit.map(|t| t / n),
                mean_score_seconds: total_score.map(|t| t / n),
            }
        })
        .collect();
    let sum = |f: fn(&RunTiming) -> Option<f64>| {
        let vals: Vec<f64> = runs.iter().filter_map(f).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>())
    };
    let total_fit_seconds = sum(|r| r.total_fit_seconds);
    let total_score_seconds = sum(|r| r.total_score_seconds);
    let timed_runs = runs.iter().filter(|r| r.total_fit_seconds.is_some()).count();
    let mean_run_seconds = match (total_fit_seconds, total_score_seconds) {
        (Some(f), Some(s)) if timed_runs > 0 => Some((f + s) / timed_runs as f64),
        _ => None,
    };
    TimingReport {
        runs,
        total_fit_seconds,
        total_score_seconds,
        mean_run_seconds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    fn toy_corpus() -> Arc<Corpus> {
        let mut docs = Vec::new();
        for i in 0..40 {
            let relevant = i % 5 == 0;
            let text = if relevant {
                format!("signal word{i} common")
            } else {
                format!("noise word{i} common filler")
            };
            let cats: Vec<&str> = if relevant { vec!["c"] } else { vec![] };
            docs.push(Document::new(format!("d{i:02}"), text, cats));
        }
        Arc::new(Corpus::from_documents(docs).unwrap())
    }

    fn config(kind: SamplingStrategy) -> RunConfig {
        RunConfig {
            iterations: 4,
            ..RunConfig::new("unused.jsonl", "c", kind)
        }
    }

    #[test]
    fn bookkeeping_and_nesting() {
        let corpus = toy_corpus();
        let cfg = config(SamplingStrategy::relevance(3));
        let result = run_tar(&cfg, Arc::clone(&corpus)).unwrap();
        assert_eq!(result.status, RunStatus::Complete);
        assert_eq!(result.records.len(), 4);
        let mut seen = std::collections::HashSet::new();
        for (k, r) in result.records.iter().enumerate() {
            assert_eq!(r.iteration, k + 1);
            assert_eq!(r.n_labeled, 1 + k * 3);
            assert_eq!(r.batch_selected.len(), 3);
            assert_eq!(r.costs[0], (r.n_labeled + r.d_star) as f64);
            for id in &r.batch_selected {
                assert!(seen.insert(id.clone()));
            }
        }
        for (j, m) in result.min_cost.iter().enumerate() {
            let best = result.records.iter().map(|r| r.costs[j]).fold(f64::INFINITY, f64::min);
            assert_eq!(m.cost, best);
        }
    }

    #[test]
    fn exhaustion_stops_cleanly() {
        let corpus = toy_corpus();
        let cfg = RunConfig {
            iterations: 10,
            ..config(SamplingStrategy::uncertainty(15))
        };
        let result = run_tar(&cfg, corpus).unwrap();
        assert_eq!(result.status, RunStatus::Exhausted);
        // 1 + 15 + 15 + 9 labeled after three selections; the fourth model
        // sees everything and nothing is left to select.
        assert_eq!(result.records.len(), 4);
        let last = result.records.last().unwrap();
        assert_eq!(last.n_labeled, 40);
        assert_eq!(last.d_star, 0);
        assert!(last.batch_selected.is_empty());
    }

    #[test]
    fn empty_category_is_rejected() {
        let cfg = RunConfig::new("x", "missing", SamplingStrategy::relevance(2));
        assert!(matches!(
            run_tar(&cfg, toy_corpus()),
            Err(RunError::Sampling(SamplingError::EmptyCategory(_)))
        ));
    }

    #[test]
    fn invalid_configs() {
        let base = config(SamplingStrategy::relevance(2));
        for cfg in [
            RunConfig { iterations: 0, ..base.clone() },
            RunConfig { recall_target: 0.0, ..base.clone() },
            RunConfig { recall_target: 1.2, ..base.clone() },
            RunConfig { cost_structures: vec![], ..base.clone() },
            RunConfig { classifier: ClassifierSpec::Logreg { penalty: -1.0 }, ..base.clone() },
        ] {
            assert!(matches!(cfg.validate(), Err(RunError::Config(_))), "{cfg:?}");
        }
    }

    struct FailingScorer {
        fits: usize,
        fail_at: usize,
        len: usize,
    }

    impl Scorer for FailingScorer {
        fn name(&self) -> String {
            "failing".into()
        }
        fn fit(&mut self, _: &LabeledSet) -> Result<Option<f64>, ClassifierError> {
            self.fits += 1;
            if self.fits == self.fail_at {
                return Err(ClassifierError::NoPositive);
            }
            Ok(None)
        }
        fn score(&mut self) -> Result<ScoreVector, ClassifierError> {
            Ok(ScoreVector::constant(0.5, self.len))
        }
    }

    #[test]
    fn classifier_failure_keeps_partial_records() {
        let corpus = toy_corpus();
        let cfg = config(SamplingStrategy::relevance(2));
        let mut scorer = FailingScorer { fits: 0, fail_at: 3, len: corpus.len() };
        let err = run_with_scorer(&cfg, &corpus, &mut scorer).unwrap_err();
        let partial = err.partial().unwrap();
        assert_eq!(partial.status, RunStatus::Aborted);
        assert_eq!(partial.records.len(), 2);
        assert!(partial.error.as_deref().unwrap().contains("positive"));
        assert!(matches!(err, RunError::Aborted { iteration: 3, .. }));
    }

    #[test]
    fn persist_round_trip_and_truncation() {
        let corpus = toy_corpus();
        let cfg = config(SamplingStrategy::relevance(3));
        let result = run_tar(&cfg, corpus).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.run.jsonl");
        persist_run(&result, &path).unwrap();
        assert!(timings_path(&path).exists());
        let loaded = load_run(&path).unwrap();
        assert_eq!(loaded, result);

        let text = fs::read_to_string(&path).unwrap();
        let without_summary: String = text.lines().take(text.lines().count() - 1).map(|l| format!("{l}\n")).collect();
        fs::write(&path, &without_summary).unwrap();
        assert!(matches!(load_run(&path), Err(PersistError::Parse { .. })));
        fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_run(&path), Err(PersistError::Parse { .. })));
    }

    #[test]
    fn identical_configs_serialize_identically() {
        let corpus = toy_corpus();
        let cfg = config(SamplingStrategy::uncertainty(4));
        let a = run_tar(&cfg, Arc::clone(&corpus)).unwrap();
        let b = run_tar(&cfg, corpus).unwrap();
        assert_eq!(a.to_jsonl(), b.to_jsonl());
    }

    fn timed_result(fit: &[f64], score: &[f64]) -> RunResult {
        let records = fit
            .iter()
            .zip(score)
            .enumerate()
            .map(|(i, (&f, &s))| IterationRecord {
                iteration: i + 1,
                n_labeled: 1,
                n_labeled_pos: 1,
                n_labeled_neg: 0,
                r_precision: 0.0,
                d_star: 0,
                breakdown: CostBreakdown::default(),
                costs: vec![1.0],
                dfr: 0.1,
                wss: 0.7,
                scores_digest: String::new(),
                batch_selected: vec![],
                timings: Some(Timings { fit_seconds: f, score_seconds: s, reported_train_seconds: None }),
            })
            .collect();
        RunResult {
            config: RunConfig {
                cost_structures: vec![CostStructure::uniform()],
                ..RunConfig::new("c", "cat", SamplingStrategy::relevance(1))
            },
            records,
            min_cost: vec![],
            status: RunStatus::Complete,
            error: None,
        }
    }

    #[test]
    fn timing_means_and_totals() {
        let one = timed_result(&[1.0, 1.0], &[2.0, 2.0]);
        let report = timing_report(std::slice::from_ref(&one));
        assert_eq!(report.runs[0].mean_fit_seconds, Some(1.0));
        assert_eq!(report.runs[0].mean_score_seconds, Some(2.0));

        let mut untimed = one.clone();
        for r in &mut untimed.records {
            r.timings = None;
        }
        let report = timing_report(std::slice::from_ref(&untimed));
        assert_eq!(report.runs[0].mean_fit_seconds, None);
        assert_eq!(report.total_fit_seconds, None);

        let two = timed_result(&[0.5, 0.25, 0.25], &[1.0, 1.0, 3.0]);
        let report = timing_report(&[one, two, untimed]);
        let parts: f64 = report.runs.iter().filter_map(|r| r.total_fit_seconds).sum();
        assert_eq!(report.total_fit_seconds, Some(parts));
        assert_eq!(report.total_fit_seconds, Some(3.0));
        assert_eq!(report.total_score_seconds, Some(9.0));
        assert_eq!(report.mean_run_seconds, Some(6.0));
    }
}
