//! Cost-over-iterations series for plotting.
//!
//! The output is tab-separated text with the header
//! `run classifier strategy cost_structure iteration cost` and one row per
//! (run, cost structure, iteration).

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::manifest::run_name;
use super::{io_error, ExperimentError};
use crate::engine::{load_run, RunResult};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub run: String,
    pub classifier: String,
    pub strategy: String,
    pub cost_structure: String,
    pub iteration: usize,
    pub cost: f64,
}

/// Loads every `*.run.jsonl` file in `dir`, in file name order.
pub fn read_run_dir(dir: &Path) -> Result<Vec<(PathBuf, RunResult)>, ExperimentError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_error(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".run.jsonl"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let r = load_run(&p)?;
            Ok((p, r))
        })
        .collect()
}

/// Every recorded cost of the runs for `category`.
pub fn trajectory(results: &[RunResult], category: &str) -> Result<Vec<TrajectoryPoint>, ExperimentError> {
    let mut points = Vec::new();
    for r in results.iter().filter(|r| r.config.category == category) {
        let run = run_name(&r.config);
        for (j, cs) in r.config.cost_structures.iter().enumerate() {
            for rec in &r.records {
                points.push(TrajectoryPoint {
                    run: run.clone(),
                    classifier: r.config.classifier.label(),
                    strategy: r.config.strategy.kind.to_string(),
                    cost_structure: cs.label(),
                    iteration: rec.iteration,
                    cost: rec.costs[j],
                });
            }
        }
    }
    if points.is_empty() {
        return Err(ExperimentError::MissingCategory(category.to_owned()));
    }
    Ok(points)
}

pub fn write_trajectory(points: &[TrajectoryPoint], path: &Path) -> Result<(), ExperimentError> {
    let mut out = String::from("run\tclassifier\tstrategy\tcost_structure\titeration\tcost\n");
    for p in points {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            p.run, p.classifier, p.strategy, p.cost_structure, p.iteration, p.cost
        ));
    }
    fs::write(path, out).map_err(io_error(path))
}
