//! Batch experiments: manifests of runs, synthetic corpora, and the reports
//! built from finished runs.

mod aggregate;
mod manifest;
mod synth;
mod trajectory;

use std::path::PathBuf;

use thiserror::Error;

pub use aggregate::{
    aggregate, metrics_records, read_metrics_dir, render_table, write_metrics_report, AggregateReport, BinCell,
    CategoryComparison, CategorySummary, CellSummary, GroupReport, MetricsReportRecord,
    TestOutcome,
};
pub use manifest::{
    execute, load_manifest, run_file_name, run_name, ExecuteOptions, ExecutionSummary,
    ExperimentManifest, RunOutcome, OUTPUT_DIR_ENV,
};
pub use synth::{synthesize, SynthCategory, SynthSpec};
pub use trajectory::{read_run_dir, trajectory, write_trajectory, TrajectoryPoint};

use crate::corpus::CorpusError;
use crate::engine::PersistError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("no output directory: set `output_dir` in the manifest or {OUTPUT_DIR_ENV}")]
    NoOutputDir,
    #[error("invalid synthetic corpus spec: {0}")]
    Synth(String),
    #[error("no results for category {0:?}")]
    MissingCategory(String),
    #[error("{0}")]
    Inconsistent(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Persist(#[from] PersistError),
}

pub(crate) fn io_error(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_owned(),
        source,
    }
}
