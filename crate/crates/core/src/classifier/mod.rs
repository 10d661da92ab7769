//! Scorers over a fixed corpus.
//!
//! Every classifier in a run implements [`Scorer`]: it is fit on the
//! cumulative [`LabeledSet`] and then scores the whole collection, producing
//! a [`ScoreVector`] aligned to corpus order.

mod logreg;
pub mod plugin;
pub mod protocol;

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::features::FeatureMatrix;

pub use logreg::{fit_logreg, objective_gradient, predict_proba, FitOptions, LinearModel};
pub use plugin::{PluginError, PluginHandle, PluginLaunchSpec};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training set has no positive example")]
    NoPositive,
    #[error("non-finite feature value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("penalty must be a positive finite number, got {0}")]
    InvalidPenalty(f64),
    #[error("dimension mismatch: model has {model} weights, matrix has {matrix} columns")]
    DimensionMismatch { model: usize, matrix: usize },
    #[error("{rows} feature rows but {labels} labels")]
    LabelCount { rows: usize, labels: usize },
    #[error("optimizer stopped with gradient norm {grad_norm:e} after {iterations} iterations")]
    NotConverged { grad_norm: f64, iterations: usize },
    #[error("document {0:?} is already labeled")]
    DuplicateLabel(String),
    #[error("document {0:?} is not in the corpus")]
    UnknownDocument(String),
    #[error("score {value} at position {index} is not a probability")]
    InvalidScore { index: usize, value: f64 },
    #[error(transparent)]
    Plugin(#[from] PluginError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledEntry {
    pub doc_id: String,
    pub label: bool,
    pub iteration: usize,
}

/// Reviewed documents in acquisition order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabeledSet {
    entries: Vec<LabeledEntry>,
    index: HashMap<String, usize>,
}

impl LabeledSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        doc_id: impl Into<String>,
        label: bool,
        iteration: usize,
    ) -> Result<(), ClassifierError> {
        let doc_id = doc_id.into();
        if self.index.contains_key(&doc_id) {
            return Err(ClassifierError::DuplicateLabel(doc_id));
        }
        self.index.insert(doc_id.clone(), self.entries.len());
        self.entries.push(LabeledEntry {
            doc_id,
            label,
            iteration,
        });
        Ok(())
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.index.contains_key(doc_id)
    }

    pub fn label(&self, doc_id: &str) -> Option<bool> {
        self.index.get(doc_id).map(|&i| self.entries[i].label)
    }

    pub fn entries(&self) -> &[LabeledEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.entries.iter().filter(|e| e.label).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    /// Membership mask over corpus positions.
    pub fn mask(&self, corpus: &Corpus) -> Result<Vec<bool>, ClassifierError> {
        let mut mask = vec![false; corpus.len()];
        for e in &self.entries {
            let i = corpus
                .index_of(&e.doc_id)
                .ok_or_else(|| ClassifierError::UnknownDocument(e.doc_id.clone()))?;
            mask[i] = true;
        }
        Ok(mask)
    }
}

/// Probability of relevance for every document, in corpus order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    /// Accepts finite values in `[0, 1]`.
    pub fn new(values: Vec<f64>) -> Result<Self, ClassifierError> {
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(ClassifierError::InvalidScore { index, value });
        }
        Ok(Self(values))
    }

    pub fn constant(value: f64, len: usize) -> Self {
        Self(vec![value; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }
}

impl std::ops::Index<usize> for ScoreVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// A classifier bound to one corpus for the lifetime of a run.
pub trait Scorer {
    fn name(&self) -> String;
    /// Trains on every labeled document. Returns seconds reported by the
    /// scorer itself, if any.
    fn fit(&mut self, labeled: &LabeledSet) -> Result<Option<f64>, ClassifierError>;
    fn score(&mut self) -> Result<ScoreVector, ClassifierError>;
    /// Releases external resources. Called once at the end of a run.
    fn close(&mut self) -> Result<(), ClassifierError> {
        Ok(())
    }
}

/// L2 logistic regression retrained from scratch on every call to `fit`.
pub struct LogRegScorer {
    corpus: Arc<Corpus>,
    features: Arc<FeatureMatrix>,
    penalty: f64,
    options: FitOptions,
    model: Option<LinearModel>,
}

impl LogRegScorer {
    pub fn new(corpus: Arc<Corpus>, features: Arc<FeatureMatrix>, penalty: f64) -> Self {
        assert_eq!(corpus.len(), features.n_rows(), "features must align with the corpus");
        Self {
            corpus,
            features,
            penalty,
            options: FitOptions::default(),
            model: None,
        }
    }

    pub fn model(&self) -> Option<&LinearModel> {
        self.model.as_ref()
    }
}

impl Scorer for LogRegScorer {
    fn name(&self) -> String {
        format!("logreg(C={})", self.penalty)
    }

    fn fit(&mut self, labeled: &LabeledSet) -> Result<Option<f64>, ClassifierError> {
        let mut rows = Vec::with_capacity(labeled.len());
        let mut labels = Vec::with_capacity(labeled.len());
        for e in labeled.entries() {
            let row = self
                .corpus
                .index_of(&e.doc_id)
                .ok_or_else(|| ClassifierError::UnknownDocument(e.doc_id.clone()))?;
            rows.push(row);
            labels.push(e.label);
        }
        let train = self.features.select_rows(&rows);
        self.model = Some(logreg::fit_with(&train, &labels, self.penalty, &self.options)?);
        Ok(None)
    }

    fn score(&mut self) -> Result<ScoreVector, ClassifierError> {
        let model = self.model.as_ref().expect("score called before fit");
        predict_proba(model, &self.features)
    }
}
