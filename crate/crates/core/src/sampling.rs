//! Seed and batch selection.
//!
//! All rankings break score ties by ascending `doc_id`, so selection is a
//! pure function of its inputs.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{LabeledSet, ScoreVector};
use crate::corpus::Corpus;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SamplingError {
    #[error("category {0:?} has no relevant documents")]
    EmptyCategory(String),
    #[error("every document is already labeled")]
    Exhausted,
    #[error("batch size must be at least 1")]
    ZeroBatch,
    #[error("{scores} scores for a corpus of {docs} documents")]
    Misaligned { scores: usize, docs: usize },
    #[error("labeled document {0:?} is not in the corpus")]
    UnknownDocument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingKind {
    /// Highest-scored unlabeled documents first.
    Relevance,
    /// Unlabeled documents with score closest to 0.5 first.
    Uncertainty,
}

impl std::fmt::Display for SamplingKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SamplingKind::Relevance => "relevance",
            SamplingKind::Uncertainty => "uncertainty",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingStrategy {
    pub kind: SamplingKind,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
}

fn default_batch_size() -> usize {
    200
}

impl SamplingStrategy {
    pub fn relevance(batch_size: usize) -> Self {
        Self {
            kind: SamplingKind::Relevance,
            batch_size,
        }
    }

    pub fn uncertainty(batch_size: usize) -> Self {
        Self {
            kind: SamplingKind::Uncertainty,
            batch_size,
        }
    }
}

/// Picks the seed uniformly among the category's relevant documents,
/// ordered by `doc_id`.
pub fn select_seed(corpus: &Corpus, category: &str, rng_seed: u64) -> Result<String, SamplingError> {
    let relevant = corpus.relevant(category);
    if relevant.is_empty() {
        return Err(SamplingError::EmptyCategory(category.to_owned()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let pick = rng.random_range(0..relevant.len());
    Ok(relevant.into_iter().nth(pick).expect("index in range"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchSelection {
    /// Selected documents in priority order.
    pub doc_ids: Vec<String>,
    /// Set when fewer than `batch_size` unlabeled documents remained.
    pub exhausted: bool,
}

/// Orders document positions by descending score, then ascending `doc_id`.
pub fn compare_by_score<'a>(corpus: &'a Corpus, scores: &'a [f64]) -> impl Fn(&usize, &usize) -> Ordering + 'a {
    move |&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| corpus.doc_id(a).cmp(corpus.doc_id(b)))
    }
}

pub fn select_batch(
    corpus: &Corpus,
    scores: &ScoreVector,
    labeled: &LabeledSet,
    strategy: &SamplingStrategy,
) -> Result<BatchSelection, SamplingError> {
    if strategy.batch_size == 0 {
        return Err(SamplingError::ZeroBatch);
    }
    if scores.len() != corpus.len() {
        return Err(SamplingError::Misaligned {
            scores: scores.len(),
            docs: corpus.len(),
        });
    }
    let mut is_labeled = vec![false; corpus.len()];
    for e in labeled.entries() {
        let i = corpus
            .index_of(&e.doc_id)
            .ok_or_else(|| SamplingError::UnknownDocument(e.doc_id.clone()))?;
        is_labeled[i] = true;
    }
    let mut candidates: Vec<usize> = (0..corpus.len()).filter(|&i| !is_labeled[i]).collect();
    if candidates.is_empty() {
        return Err(SamplingError::Exhausted);
    }
    let s = scores.values();
    let priority = |a: &usize, b: &usize| -> Ordering {
        let primary = match strategy.kind {
            SamplingKind::Relevance => s[*b].total_cmp(&s[*a]),
            SamplingKind::Uncertainty => (s[*a] - 0.5).abs().total_cmp(&(s[*b] - 0.5).abs()),
        };
        primary.then_with(|| corpus.doc_id(*a).cmp(corpus.doc_id(*b)))
    };
    let take = strategy.batch_size.min(candidates.len());
    let exhausted = candidates.len() <= strategy.batch_size;
    if take < candidates.len() {
        candidates.select_nth_unstable_by(take - 1, priority);
        candidates.truncate(take);
    }
    candidates.sort_unstable_by(priority);
    Ok(BatchSelection {
        doc_ids: candidates.into_iter().map(|i| corpus.doc_id(i).to_owned()).collect(),
        exhausted,
    })
}
