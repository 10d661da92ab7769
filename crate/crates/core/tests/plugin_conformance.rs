use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::{json, Value};
use tarsim_core::classifier::{LabeledSet, PluginError, PluginHandle, PluginLaunchSpec};
use tarsim_core::corpus::{Corpus, Document};
use tarsim_core::engine::{load_run, ClassifierSpec, RunConfig, RunError, RunStatus};
use tarsim_core::experiment::{execute, run_file_name, ExecuteOptions, ExperimentManifest};
use tarsim_core::sampling::SamplingStrategy;

const MOCK: &str = env!("CARGO_BIN_EXE_tarsim-mock-plugin");

fn spec(args: &[&str]) -> PluginLaunchSpec {
    PluginLaunchSpec {
        args: args.iter().map(|s| s.to_string()).collect(),
        init_timeout_secs: 10.0,
        request_timeout_secs: Some(10.0),
        ..PluginLaunchSpec::new(MOCK)
    }
}

fn corpus_file(dir: &Path, n: usize) -> (PathBuf, Arc<Corpus>) {
    let docs = (0..n)
        .map(|i| {
            let cats: Vec<&str> = if i % 3 == 0 { vec!["c"] } else { vec![] };
            Document::new(format!("d{i:02}"), format!("word{i} common"), cats)
        })
        .collect();
    let corpus = Corpus::from_documents(docs).unwrap();
    let path = dir.join("corpus.jsonl");
    corpus.save(&path).unwrap();
    (path, Arc::new(corpus))
}

fn labeled(pairs: &[(&str, bool)]) -> LabeledSet {
    let mut set = LabeledSet::new();
    for (id, label) in pairs {
        set.insert(*id, *label, 0).unwrap();
    }
    set
}

#[test]
fn full_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let (path, corpus) = corpus_file(dir.path(), 6);
    let transcript = dir.path().join("transcript.jsonl");
    let mut s = spec(&["--echo-labels", "--transcript", transcript.to_str().unwrap()]);
    s.config = json!({"epochs": 2});

    let mut h = PluginHandle::open(&s).unwrap();
    assert_eq!(h.name(), "mock");
    assert_eq!(h.load_corpus(&path, "c", &corpus).unwrap(), 6);
    h.fit(&labeled(&[("d00", true), ("d01", false)])).unwrap();
    let scores = h.score().unwrap();
    assert_eq!(scores.values(), &[0.9, 0.1, 0.5, 0.5, 0.5, 0.5]);
    h.close().unwrap();

    let lines: Vec<Value> = std::fs::read_to_string(&transcript)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(
        lines,
        vec![
            json!({"cmd": "init", "protocol": 1, "config": {"epochs": 2}}),
            json!({"cmd": "load_corpus", "path": path.to_str().unwrap(), "category": "c"}),
            json!({"cmd": "fit", "labeled": [{"doc_id": "d00", "label": 1}, {"doc_id": "d01", "label": 0}]}),
            json!({"cmd": "score"}),
            json!({"cmd": "shutdown"}),
        ]
    );
}

#[test]
fn constant_scores() {
    let dir = tempfile::tempdir().unwrap();
    let (path, corpus) = corpus_file(dir.path(), 4);
    let mut h = PluginHandle::open(&spec(&[])).unwrap();
    h.load_corpus(&path, "c", &corpus).unwrap();
    h.fit(&labeled(&[("d00", true)])).unwrap();
    assert_eq!(h.score().unwrap().values(), &[0.5; 4]);
    h.close().unwrap();
}

#[test]
fn malformed_response() {
    let dir = tempfile::tempdir().unwrap();
    let (path, corpus) = corpus_file(dir.path(), 4);
    let mut h = PluginHandle::open(&spec(&["--malformed"])).unwrap();
    h.load_corpus(&path, "c", &corpus).unwrap();
    h.fit(&labeled(&[("d00", true)])).unwrap();
    let err = h.score().unwrap_err();
    assert!(matches!(err, PluginError::Malformed { command: "score", .. }), "{err}");
}

#[test]
fn out_of_range_score_names_document() {
    let dir = tempfile::tempdir().unwrap();
    let (path, corpus) = corpus_file(dir.path(), 4);
    let mut h = PluginHandle::open(&spec(&["--out-of-range"])).unwrap();
    h.load_corpus(&path, "c", &corpus).unwrap();
    h.fit(&labeled(&[("d00", true)])).unwrap();
    match h.score().unwrap_err() {
        PluginError::ScoreOutOfRange { doc_id, value } => {
            assert_eq!(doc_id, "d00");
            assert_eq!(value, 1.5);
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn short_score_vector() {
    let dir = tempfile::tempdir().unwrap();
    let (path, corpus) = corpus_file(dir.path(), 4);
    let mut h = PluginHandle::open(&spec(&["--short-scores"])).unwrap();
    h.load_corpus(&path, "c", &corpus).unwrap();
    h.fit(&labeled(&[("d00", true)])).unwrap();
    assert!(matches!(h.score().unwrap_err(), PluginError::ScoreCount { expected: 4, got: 3 }));
}

#[test]
fn remote_error_and_ordering() {
    let dir = tempfile::tempdir().unwrap();
    let (path, corpus) = corpus_file(dir.path(), 4);
    let mut h = PluginHandle::open(&spec(&["--fail-fit"])).unwrap();
    let err = h.fit(&labeled(&[("d00", true)])).unwrap_err();
    assert!(matches!(err, PluginError::OutOfOrder { command: "fit", requires: "load_corpus" }));
    h.load_corpus(&path, "c", &corpus).unwrap();
    let err = h.fit(&labeled(&[("d00", true)])).unwrap_err();
    assert!(matches!(err, PluginError::Remote { command: "fit", .. }), "{err}");
}

#[test]
fn process_death_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let (path, corpus) = corpus_file(dir.path(), 4);
    let mut h = PluginHandle::open(&spec(&["--die-after-fits", "2"])).unwrap();
    h.load_corpus(&path, "c", &corpus).unwrap();
    h.fit(&labeled(&[("d00", true)])).unwrap();
    h.score().unwrap();
    let err = h.fit(&labeled(&[("d00", true)])).unwrap_err();
    match err {
        PluginError::Exited { command: "fit", status } => assert!(status.contains('3'), "{status}"),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn init_timeout() {
    let mut s = spec(&["--hang-on-init"]);
    s.init_timeout_secs = 0.5;
    let err = PluginHandle::open(&s).unwrap_err();
    assert!(matches!(err, PluginError::Timeout { command: "init", .. }), "{err}");
}

#[test]
fn corpus_size_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _) = corpus_file(dir.path(), 4);
    let other = Corpus::from_documents(vec![Document::new("x", "y", ["c"])]).unwrap();
    let mut h = PluginHandle::open(&spec(&[])).unwrap();
    let err = h.load_corpus(&path, "c", &other).unwrap_err();
    assert!(matches!(err, PluginError::CorpusSize { expected: 1, got: 4 }));
}

#[test]
fn engine_run_with_plugin() {
    let dir = tempfile::tempdir().unwrap();
    let (path, corpus) = corpus_file(dir.path(), 30);
    let cfg = RunConfig {
        iterations: 3,
        classifier: ClassifierSpec::Plugin(spec(&["--echo-labels"])),
        ..RunConfig::new(&path, "c", SamplingStrategy::relevance(4))
    };
    let result = tarsim_core::run_tar(&cfg, corpus).unwrap();
    assert_eq!(result.status, RunStatus::Complete);
    assert_eq!(result.records.len(), 3);
    let t = result.records[0].timings.unwrap();
    assert_eq!(t.reported_train_seconds, Some(0.0));
}

#[test]
fn plugin_death_mid_run_persists_partial_trace() {
    let dir = tempfile::tempdir().unwrap();
    let (path, corpus) = corpus_file(dir.path(), 30);
    let run = RunConfig {
        iterations: 5,
        classifier: ClassifierSpec::Plugin(spec(&["--die-after-fits", "3"])),
        ..RunConfig::new(&path, "c", SamplingStrategy::relevance(4))
    };

    let err = tarsim_core::run_tar(&run, Arc::clone(&corpus)).unwrap_err();
    assert!(matches!(&err, RunError::Aborted { iteration: 3, .. }), "{err}");

    let manifest = ExperimentManifest {
        output_dir: Some(dir.path().join("out")),
        parallelism: 1,
        runs: vec![run.clone()],
    };
    let summary = execute(&manifest, ExecuteOptions::default()).unwrap();
    assert!(!summary.success());
    let partial = load_run(&dir.path().join("out").join(run_file_name(&run))).unwrap();
    assert_eq!(partial.status, RunStatus::Aborted);
    assert_eq!(partial.records.len(), 2);
    assert!(partial.error.unwrap().contains("exited"));
}
