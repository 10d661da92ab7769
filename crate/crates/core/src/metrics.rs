//! High-recall retrieval evaluation.
//!
//! Recall is reached at a depth when `found / R >= target` holds in floating
//! point, with `R` the number of relevant documents. Rankings order by
//! descending score and then ascending `doc_id`.
//!
//! The two-phase cost of a review state is the cost of every document
//! reviewed for training plus the cost of the shortest prefix of the
//! remaining, model-ranked documents that brings recall to the target.
//! Relevant documents already reviewed count toward that recall.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::classifier::{LabeledSet, ScoreVector};
use crate::corpus::Corpus;
use crate::sampling::compare_by_score;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("metric is undefined with no relevant documents")]
    NoRelevant,
    #[error("recall target must be in (0, 1], got {0}")]
    InvalidTarget(f64),
    #[error("recall target cannot be reached: {found} of {relevant} relevant documents are rankable")]
    Unreachable { found: usize, relevant: usize },
    #[error("{0} needs at least one value")]
    Empty(&'static str),
    #[error("baseline cost must be positive, got {0}")]
    NonPositiveBaseline(f64),
    #[error("paired samples differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("paired t-test needs at least 2 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("paired differences have zero variance")]
    ZeroVariance,
    #[error("{scores} scores for a corpus of {docs} documents")]
    Misaligned { scores: usize, docs: usize },
    #[error("document {0:?} is not in the corpus")]
    UnknownDocument(String),
}

/// Per-document review costs for the training and second review phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostStructure {
    pub train_pos: f64,
    pub train_neg: f64,
    pub review_pos: f64,
    pub review_neg: f64,
}

impl CostStructure {
    pub const fn new(train_pos: f64, train_neg: f64, review_pos: f64, review_neg: f64) -> Self {
        Self {
            train_pos,
            train_neg,
            review_pos,
            review_neg,
        }
    }

    pub const fn uniform() -> Self {
        Self::new(1.0, 1.0, 1.0, 1.0)
    }

    /// Training reviews cost ten times a second-phase review.
    pub const fn expensive_training() -> Self {
        Self::new(10.0, 10.0, 1.0, 1.0)
    }

    pub fn label(&self) -> String {
        if *self == Self::uniform() {
            "uniform".into()
        } else if *self == Self::expensive_training() {
            "expensive-training".into()
        } else {
            format!(
                "cost({},{},{},{})",
                self.train_pos, self.train_neg, self.review_pos, self.review_neg
            )
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.train_pos, self.train_neg, self.review_pos, self.review_neg]
            .iter()
            .all(|c| c.is_finite() && *c >= 0.0)
    }
}

fn check_target(target: f64) -> Result<(), MetricsError> {
    if target > 0.0 && target <= 1.0 {
        Ok(())
    } else {
        Err(MetricsError::InvalidTarget(target))
    }
}

/// Whether `found` of `relevant` documents meets `target`.
pub fn recall_reached(found: usize, relevant: usize, target: f64) -> bool {
    found as f64 / relevant as f64 >= target
}

/// Corpus positions ordered by descending score, ties by `doc_id`.
pub fn rank(corpus: &Corpus, scores: &ScoreVector) -> Result<Vec<usize>, MetricsError> {
    if scores.len() != corpus.len() {
        return Err(MetricsError::Misaligned {
            scores: scores.len(),
            docs: corpus.len(),
        });
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.sort_unstable_by(compare_by_score(corpus, scores.values()));
    Ok(order)
}

pub fn r_precision(corpus: &Corpus, scores: &ScoreVector, qrels: &BTreeSet<String>) -> Result<f64, MetricsError> {
    let r = qrels.len();
    if r == 0 {
        return Err(MetricsError::NoRelevant);
    }
    let order = rank(corpus, scores)?;
    let hits = order
        .iter()
        .take(r)
        .filter(|&&i| qrels.contains(corpus.doc_id(i)))
        .count();
    Ok(hits as f64 / r as f64)
}

/// Depth for recall: the fraction of the ranked collection that must be
/// reviewed to reach `target`.
pub fn dfr<S: AsRef<str>>(ranking: &[S], qrels: &BTreeSet<String>, target: f64) -> Result<f64, MetricsError> {
    check_target(target)?;
    let r = qrels.len();
    if r == 0 {
        return Err(MetricsError::NoRelevant);
    }
    let mut found = 0;
    for (depth, id) in ranking.iter().enumerate() {
        if qrels.contains(id.as_ref()) {
            found += 1;
            if recall_reached(found, r, target) {
                return Ok((depth + 1) as f64 / ranking.len() as f64);
            }
        }
    }
    Err(MetricsError::Unreachable { found, relevant: r })
}

/// Work saved over sampling, `target - dfr`.
pub fn wss(dfr_value: f64, target: f64) -> f64 {
    target - dfr_value
}

/// A review in progress: what has been labeled and how the current model
/// scores the collection.
#[derive(Debug, Clone, Copy)]
pub struct RunState<'a> {
    pub corpus: &'a Corpus,
    pub labeled: &'a LabeledSet,
    pub scores: &'a ScoreVector,
    pub qrels: &'a BTreeSet<String>,
    pub recall_target: f64,
}

/// Document counts behind a two-phase cost: reviewed for training, and
/// reviewed in the optimal second phase, split by gold relevance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub train_pos: usize,
    pub train_neg: usize,
    pub review_pos: usize,
    pub review_neg: usize,
}

impl CostBreakdown {
    /// Optimal second-phase depth.
    pub fn depth(&self) -> usize {
        self.review_pos + self.review_neg
    }

    pub fn cost(&self, cs: &CostStructure) -> f64 {
        self.train_pos as f64 * cs.train_pos
            + self.train_neg as f64 * cs.train_neg
            + self.review_pos as f64 * cs.review_pos
            + self.review_neg as f64 * cs.review_neg
    }
}

pub fn cost_breakdown(state: &RunState<'_>) -> Result<CostBreakdown, MetricsError> {
    check_target(state.recall_target)?;
    let corpus = state.corpus;
    let r = state.qrels.len();
    if r == 0 {
        return Err(MetricsError::NoRelevant);
    }
    if state.scores.len() != corpus.len() {
        return Err(MetricsError::Misaligned {
            scores: state.scores.len(),
            docs: corpus.len(),
        });
    }
    let mut out = CostBreakdown::default();
    let mut is_labeled = vec![false; corpus.len()];
    for e in state.labeled.entries() {
        let i = corpus
            .index_of(&e.doc_id)
            .ok_or_else(|| MetricsError::UnknownDocument(e.doc_id.clone()))?;
        is_labeled[i] = true;
        if state.qrels.contains(&e.doc_id) {
            out.train_pos += 1;
        } else {
            out.train_neg += 1;
        }
    }
    let mut found = out.train_pos;
    if recall_reached(found, r, state.recall_target) {
        return Ok(out);
    }
    let mut unlabeled: Vec<usize> = (0..corpus.len()).filter(|&i| !is_labeled[i]).collect();
    unlabeled.sort_unstable_by(compare_by_score(corpus, state.scores.values()));
    for i in unlabeled {
        if state.qrels.contains(corpus.doc_id(i)) {
            out.review_pos += 1;
            found += 1;
            if recall_reached(found, r, state.recall_target) {
                return Ok(out);
            }
        } else {
            out.review_neg += 1;
        }
    }
    Err(MetricsError::Unreachable { found, relevant: r })
}

/// Smallest number of top-ranked unlabeled documents whose review, together
/// with the labeled set, reaches the recall target.
pub fn optimal_second_phase_depth(state: &RunState<'_>) -> Result<usize, MetricsError> {
    cost_breakdown(state).map(|b| b.depth())
}

pub fn total_cost(state: &RunState<'_>, cs: &CostStructure) -> Result<f64, MetricsError> {
    cost_breakdown(state).map(|b| b.cost(cs))
}

/// Earliest `(iteration, cost)` with the lowest cost.
pub fn min_cost_over_run<I>(costs: I) -> Result<(usize, f64), MetricsError>
where
    I: IntoIterator<Item = (usize, f64)>,
{
    costs
        .into_iter()
        .fold(None, |best: Option<(usize, f64)>, (it, cost)| match best {
            Some((_, b)) if b <= cost => best,
            _ => Some((it, cost)),
        })
        .ok_or(MetricsError::Empty("min_cost_over_run"))
}

/// `cost_run / cost_baseline`; below 1 is a saving.
pub fn relative_cost(cost_run: f64, cost_baseline: f64) -> Result<f64, MetricsError> {
    if cost_baseline.is_nan() || cost_baseline <= 0.0 {
        return Err(MetricsError::NonPositiveBaseline(cost_baseline));
    }
    Ok(cost_run / cost_baseline)
}

/// Macro average of per-category cost ratios.
pub fn aggregate_relative_costs(ratios: &[f64]) -> Result<f64, MetricsError> {
    if ratios.is_empty() {
        return Err(MetricsError::Empty("aggregate_relative_costs"));
    }
    Ok(ratios.iter().sum::<f64>() / ratios.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub df: usize,
}

/// Two-sided paired Student t-test on `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(MetricsError::TooFewPairs(n));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if diffs.iter().all(|&d| d == diffs[0]) {
        return Err(MetricsError::ZeroVariance);
    }
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = mean / (var / n as f64).sqrt();
    let df = n - 1;
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1");
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TTest { t, p, df })
}
