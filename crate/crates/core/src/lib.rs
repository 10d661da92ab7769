//! Simulation of technology-assisted review (TAR) workflows.
//!
//! A TAR run replays an iterative active-learning review over a fully
//! labeled corpus: a single relevant seed document starts the loop, a
//! classifier is trained on everything reviewed so far, the collection is
//! scored, and the next batch is chosen by relevance feedback or
//! least-confidence uncertainty sampling. Every iteration is evaluated with
//! the two-phase cost model: the cost of the documents reviewed for training
//! plus the smallest second-phase review that reaches the recall target.
//!
//! Crate layout:
//!
//! - [`corpus`]: JSONL ingestion, qrels merging, downsampling, category bins.
//! - [`features`]: tokenization and BM25-saturated term-frequency vectors.
//! - [`classifier`]: the scorer interface, L2 logistic regression and the
//!   stdio plugin client.
//! - [`sampling`]: seed and batch selection.
//! - [`metrics`]: R-Precision, DFR, WSS, two-phase cost, relative cost
//!   aggregation and paired t-tests.
//! - [`engine`]: the review loop and the run-result file format.
//! - [`experiment`]: manifests, synthetic corpora, aggregation and
//!   trajectory export used by the command-line tool.

pub mod classifier;
pub mod corpus;
pub mod engine;
pub mod experiment;
pub mod features;
pub mod metrics;
pub mod sampling;

pub use classifier::{
    fit_logreg, predict_proba, ClassifierError, LabeledEntry, LabeledSet, LinearModel,
    ScoreVector, Scorer,
};
pub use corpus::{Corpus, CorpusError, Document};
pub use engine::{run_tar, IterationRecord, RunConfig, RunResult, RunStatus};
pub use features::{FeatureMatrix, VectorizerConfig, Vocabulary};
pub use metrics::{CostStructure, MetricsError};
pub use sampling::{SamplingKind, SamplingStrategy};
