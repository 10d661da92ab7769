//! Metrics reports and cross-category aggregation.
//!
//! A metrics report is JSON Lines with one record per (run, iteration). The
//! fields `category, iteration, n_labeled, n_labeled_pos, r_precision,
//! d_star, cost_uniform, cost_expensive, dfr, wss` are the stable contract;
//! `run`, `strategy` and `classifier` identify the producing run.
//!
//! Aggregation compares every (strategy, classifier) group of a results
//! directory with the baseline run of the same category and strategy. Per
//! category it takes the minimal cost over the run (earliest on ties) and the
//! R-Precision of the final iteration.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_error, ExperimentError};
use crate::corpus::{CategoryBin, DifficultyBin, PrevalenceBin};
use crate::engine::RunResult;
use crate::metrics::{self, CostStructure, MetricsError, TTest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReportRecord {
    pub category: String,
    pub iteration: usize,
    pub n_labeled: usize,
    pub n_labeled_pos: usize,
    pub r_precision: f64,
    pub d_star: usize,
    pub cost_uniform: f64,
    pub cost_expensive: f64,
    pub dfr: f64,
    pub wss: f64,
    pub run: String,
    pub strategy: String,
    pub classifier: String,
}

pub fn metrics_records(result: &RunResult, run: &str) -> Vec<MetricsReportRecord> {
    let (uniform, expensive) = (CostStructure::uniform(), CostStructure::expensive_training());
    result
        .records
        .iter()
        .map(|r| MetricsReportRecord {
            category: result.config.category.clone(),
            iteration: r.iteration,
            n_labeled: r.n_labeled,
            n_labeled_pos: r.n_labeled_pos,
            r_precision: r.r_precision,
            d_star: r.d_star,
            cost_uniform: r.breakdown.cost(&uniform),
            cost_expensive: r.breakdown.cost(&expensive),
            dfr: r.dfr,
            wss: r.wss,
            run: run.to_owned(),
            strategy: result.config.strategy.kind.to_string(),
            classifier: result.config.classifier.label(),
        })
        .collect()
}

pub fn write_metrics_report(result: &RunResult, run: &str, path: &Path) -> Result<(), ExperimentError> {
    let mut out = String::new();
    for rec in metrics_records(result, run) {
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_error(path))
}

/// Reads every `*.metrics.jsonl` file in `dir`, in file name order.
pub fn read_metrics_dir(dir: &Path) -> Result<Vec<MetricsReportRecord>, ExperimentError> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .map_err(io_error(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".metrics.jsonl"))
        .collect();
    files.sort();
    let mut records = Vec::new();
    for path in files {
        let text = fs::read_to_string(&path).map_err(io_error(&path))?;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let rec = serde_json::from_str(line).map_err(|e| ExperimentError::Parse {
                path: path.clone(),
                message: format!("line {}: {e}", i + 1),
            })?;
            records.push(rec);
        }
    }
    Ok(records)
}

/// One run reduced to the quantities that are compared across categories.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategorySummary {
    pub category: String,
    pub run: String,
    pub strategy: String,
    pub classifier: String,
    pub min_cost_uniform: f64,
    pub min_cost_expensive: f64,
    /// R-Precision of the last recorded iteration.
    pub r_precision: f64,
}

fn summarize(records: &[MetricsReportRecord]) -> Result<Vec<CategorySummary>, ExperimentError> {
    let mut by_run: BTreeMap<&str, Vec<&MetricsReportRecord>> = BTreeMap::new();
    for r in records {
        by_run.entry(r.run.as_str()).or_default().push(r);
    }
    by_run
        .into_iter()
        .map(|(run, mut recs)| {
            recs.sort_by_key(|r| r.iteration);
            let first = recs[0];
            if recs.iter().any(|r| r.category != first.category) {
                return Err(ExperimentError::Inconsistent(format!("run {run} mixes categories")));
            }
            let min = |f: fn(&MetricsReportRecord) -> f64| {
                metrics::min_cost_over_run(recs.iter().map(|r| (r.iteration, f(r))))
                    .map(|(_, c)| c)
                    .expect("non-empty")
            };
            Ok(CategorySummary {
                category: first.category.clone(),
                run: run.to_owned(),
                strategy: first.strategy.clone(),
                classifier: first.classifier.clone(),
                min_cost_uniform: min(|r| r.cost_uniform),
                min_cost_expensive: min(|r| r.cost_expensive),
                r_precision: recs.last().expect("non-empty").r_precision,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryComparison {
    pub category: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bin: Option<(PrevalenceBin, DifficultyBin)>,
    pub run: CategorySummary,
    pub baseline: CategorySummary,
    pub ratio_uniform: f64,
    pub ratio_expensive: f64,
}

/// Means over the categories of one cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub n_categories: usize,
    pub mean_ratio_uniform: f64,
    pub mean_ratio_expensive: f64,
    pub mean_r_precision: f64,
    pub baseline_mean_r_precision: f64,
}

/// A row of the bin table. `None` on an axis means all bins of that axis,
/// so (None, None) is the overall row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinCell {
    pub prevalence: Option<PrevalenceBin>,
    pub difficulty: Option<DifficultyBin>,
    pub summary: CellSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "lowercase")]
pub enum TestOutcome {
    Tested(TTest),
    /// The test is undefined, e.g. every cost difference is equal.
    Degenerate { reason: String },
}

impl TestOutcome {
    fn from_result(r: Result<TTest, MetricsError>) -> Self {
        match r {
            Ok(t) => TestOutcome::Tested(t),
            Err(e) => TestOutcome::Degenerate { reason: e.to_string() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupReport {
    pub strategy: String,
    pub classifier: String,
    pub comparisons: Vec<CategoryComparison>,
    /// Grid cells, then prevalence rows, then difficulty rows; only cells
    /// holding at least one category. Empty without bin assignments.
    pub cells: Vec<BinCell>,
    pub overall: CellSummary,
    /// Paired t-tests on raw minimal costs, run against baseline.
    pub t_test_uniform: TestOutcome,
    pub t_test_expensive: TestOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateReport {
    pub groups: Vec<GroupReport>,
    pub warnings: Vec<String>,
}

fn cell(comparisons: &[&CategoryComparison]) -> CellSummary {
    let mean = |f: &dyn Fn(&CategoryComparison) -> f64| {
        comparisons.iter().map(|c| f(c)).sum::<f64>() / comparisons.len() as f64
    };
    let ratios = |f: fn(&CategoryComparison) -> f64| {
        let v: Vec<f64> = comparisons.iter().map(|c| f(c)).collect();
        metrics::aggregate_relative_costs(&v).expect("cells are non-empty")
    };
    CellSummary {
        n_categories: comparisons.len(),
        mean_ratio_uniform: ratios(|c| c.ratio_uniform),
        mean_ratio_expensive: ratios(|c| c.ratio_expensive),
        mean_r_precision: mean(&|c| c.run.r_precision),
        baseline_mean_r_precision: mean(&|c| c.baseline.r_precision),
    }
}

/// Compares `results` with `baseline`. Categories missing from the baseline
/// (or whose baseline cost is zero) are excluded with a warning, as are
/// categories missing from `bins` when bins are given.
pub fn aggregate(
    results: &[MetricsReportRecord],
    baseline: &[MetricsReportRecord],
    bins: Option<&[CategoryBin]>,
) -> Result<AggregateReport, ExperimentError> {
    let runs = summarize(results)?;
    let base_runs = summarize(baseline)?;
    let mut base: HashMap<(&str, &str), &CategorySummary> = HashMap::new();
    for b in &base_runs {
        if base.insert((&b.category, &b.strategy), b).is_some() {
            return Err(ExperimentError::Inconsistent(format!(
                "baseline holds several runs for category {:?} with {} sampling",
                b.category, b.strategy
            )));
        }
    }
    let bin_of: Option<HashMap<&str, (PrevalenceBin, DifficultyBin)>> = bins.map(|bins| {
        bins.iter()
            .map(|b| (b.category.as_str(), (b.prevalence_bin, b.difficulty_bin)))
            .collect()
    });

    let mut groups: BTreeMap<(String, String), Vec<&CategorySummary>> = BTreeMap::new();
    for r in &runs {
        groups
            .entry((r.strategy.clone(), r.classifier.clone()))
            .or_default()
            .push(r);
    }

    let mut warnings = Vec::new();
    let mut reports = Vec::new();
    for ((strategy, classifier), members) in groups {
        let mut seen = BTreeSet::new();
        let mut comparisons = Vec::new();
        for r in members {
            if !seen.insert(r.category.as_str()) {
                return Err(ExperimentError::Inconsistent(format!(
                    "results hold several {strategy}/{classifier} runs for category {:?}",
                    r.category
                )));
            }
            let Some(b) = base.get(&(r.category.as_str(), r.strategy.as_str())) else {
                warnings.push(format!(
                    "category {:?} ({strategy}, {classifier}) has no baseline run; excluded",
                    r.category
                ));
                continue;
            };
            let ratios = metrics::relative_cost(r.min_cost_uniform, b.min_cost_uniform)
                .and_then(|u| Ok((u, metrics::relative_cost(r.min_cost_expensive, b.min_cost_expensive)?)));
            let (ratio_uniform, ratio_expensive) = match ratios {
                Ok(x) => x,
                Err(e) => {
                    warnings.push(format!("category {:?}: {e}; excluded", r.category));
                    continue;
                }
            };
            let bin = match &bin_of {
                None => None,
                Some(map) => match map.get(r.category.as_str()) {
                    Some(&bin) => Some(bin),
                    None => {
                        warnings.push(format!("category {:?} has no bin assignment; excluded", r.category));
                        continue;
                    }
                },
            };
            comparisons.push(CategoryComparison {
                category: r.category.clone(),
                bin,
                run: r.clone(),
                baseline: (*b).clone(),
                ratio_uniform,
                ratio_expensive,
            });
        }
        if comparisons.is_empty() {
            warnings.push(format!("{strategy}/{classifier}: no category could be compared"));
            continue;
        }

        let all: Vec<&CategoryComparison> = comparisons.iter().collect();
        let mut cells = Vec::new();
        if bin_of.is_some() {
            let pick = |p: Option<PrevalenceBin>, d: Option<DifficultyBin>| -> Vec<&CategoryComparison> {
                all.iter()
                    .copied()
                    .filter(|c| {
                        let (cp, cd) = c.bin.expect("binned");
                        p.is_none_or(|p| p == cp) && d.is_none_or(|d| d == cd)
                    })
                    .collect()
            };
            let prevalence = [PrevalenceBin::Rare, PrevalenceBin::Medium, PrevalenceBin::Common];
            let difficulty = [DifficultyBin::Hard, DifficultyBin::Medium, DifficultyBin::Easy];
            let mut keys: Vec<(Option<PrevalenceBin>, Option<DifficultyBin>)> = Vec::new();
            for p in prevalence {
                for d in difficulty {
                    keys.push((Some(p), Some(d)));
                }
            }
            keys.extend(prevalence.map(|p| (Some(p), None)));
            keys.extend(difficulty.map(|d| (None, Some(d))));
            for (p, d) in keys {
                let members = pick(p, d);
                if !members.is_empty() {
                    cells.push(BinCell {
                        prevalence: p,
                        difficulty: d,
                        summary: cell(&members),
                    });
                }
            }
        }
        let raw = |f: fn(&CategorySummary) -> f64| -> (Vec<f64>, Vec<f64>) {
            comparisons.iter().map(|c| (f(&c.run), f(&c.baseline))).unzip()
        };
        let (u_run, u_base) = raw(|s| s.min_cost_uniform);
        let (e_run, e_base) = raw(|s| s.min_cost_expensive);
        reports.push(GroupReport {
            strategy,
            classifier,
            overall: cell(&all),
            cells,
            t_test_uniform: TestOutcome::from_result(metrics::paired_t_test(&u_run, &u_base)),
            t_test_expensive: TestOutcome::from_result(metrics::paired_t_test(&e_run, &e_base)),
            comparisons,
        });
    }
    if reports.is_empty() {
        return Err(ExperimentError::Inconsistent(format!(
            "nothing to aggregate: {}",
            if warnings.is_empty() { "no runs found".to_owned() } else { warnings.join("; ") }
        )));
    }
    Ok(AggregateReport {
        groups: reports,
        warnings,
    })
}

fn render_test(out: &mut String, name: &str, t: &TestOutcome) {
    match t {
        TestOutcome::Tested(t) => {
            let _ = writeln!(out, "paired t-test ({name}): t = {:.4}, df = {}, p = {:.4}", t.t, t.df, t.p);
        }
        TestOutcome::Degenerate { reason } => {
            let _ = writeln!(out, "paired t-test ({name}): degenerate ({reason})");
        }
    }
}

/// Plain-text table, one block per (strategy, classifier) group.
pub fn render_table(report: &AggregateReport) -> String {
    let mut out = String::new();
    for g in &report.groups {
        let _ = writeln!(out, "strategy: {}  classifier: {}", g.strategy, g.classifier);
        let _ = writeln!(
            out,
            "{:<16} {:>4} {:>10} {:>10} {:>8} {:>8}",
            "bin", "n", "uniform", "expensive", "R-Prec", "base"
        );
        let row = |out: &mut String, label: &str, c: &CellSummary| {
            let _ = writeln!(
                out,
                "{:<16} {:>4} {:>10.4} {:>10.4} {:>8.4} {:>8.4}",
                label,
                c.n_categories,
                c.mean_ratio_uniform,
                c.mean_ratio_expensive,
                c.mean_r_precision,
                c.baseline_mean_r_precision
            );
        };
        for c in &g.cells {
            let label = format!(
                "{}/{}",
                c.prevalence.map_or("*".to_owned(), |p| p.to_string()),
                c.difficulty.map_or("*".to_owned(), |d| d.to_string())
            );
            row(&mut out, &label, &c.summary);
        }
        row(&mut out, "overall", &g.overall);
        render_test(&mut out, "uniform", &g.t_test_uniform);
        render_test(&mut out, "expensive", &g.t_test_expensive);
        out.push('\n');
    }
    for w in &report.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}
