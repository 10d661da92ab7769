//! Host side of the plugin protocol (see [`super::protocol`]).

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::protocol::{
    FitReply, InitReply, LoadReply, Request, ScoreReply, WireLabel, PROTOCOL_VERSION,
};
use super::{ClassifierError, LabeledSet, ScoreVector, Scorer};
use crate::corpus::Corpus;

#[derive(Debug, Error)]
pub enum PluginError {
    #[error("cannot start plugin {program:?}: {source}")]
    Spawn {
        program: String,
        #[source]
        source: std::io::Error,
    },
    #[error("plugin did not answer `{command}` within {seconds}s")]
    Timeout { command: &'static str, seconds: f64 },
    #[error("plugin exited during `{command}` ({status})")]
    Exited { command: &'static str, status: String },
    #[error("malformed response to `{command}`: {reason} (line: {line:?})")]
    Malformed {
        command: &'static str,
        reason: String,
        line: String,
    },
    #[error("plugin reported an error for `{command}`: {message}")]
    Remote { command: &'static str, message: String },
    #[error("plugin scored document {doc_id:?} with {value}, not a probability")]
    ScoreOutOfRange { doc_id: String, value: f64 },
    #[error("plugin returned {got} scores for a corpus of {expected} documents")]
    ScoreCount { expected: usize, got: usize },
    #[error("plugin reports {got} documents, corpus has {expected}")]
    CorpusSize { expected: usize, got: usize },
    #[error("`{command}` is not valid before `{requires}`")]
    OutOfOrder {
        command: &'static str,
        requires: &'static str,
    },
    #[error("i/o error talking to plugin: {0}")]
    Io(#[from] std::io::Error),
}

/// How to launch a plugin process and what to pass it at `init`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PluginLaunchSpec {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default)]
    pub env: BTreeMap<String, String>,
    /// Opaque plugin configuration forwarded in the `init` request.
    #[serde(default)]
    pub config: Value,
    #[serde(default = "default_init_timeout")]
    pub init_timeout_secs: f64,
    /// Limit for every later request; unlimited when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_timeout_secs: Option<f64>,
}

fn default_init_timeout() -> f64 {
    60.0
}

impl PluginLaunchSpec {
    pub fn new(program: impl Into<String>) -> Self {
        Self {
            program: program.into(),
            args: Vec::new(),
            env: BTreeMap::new(),
            config: Value::Null,
            init_timeout_secs: default_init_timeout(),
            request_timeout_secs: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Initialized,
    CorpusLoaded,
    Fitted,
    Closed,
}

/// A running plugin process. Requests are strictly sequential.
pub struct PluginHandle {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    name: String,
    stage: Stage,
    doc_ids: Vec<String>,
    request_timeout: Option<f64>,
}

impl std::fmt::Debug for PluginHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PluginHandle")
            .field("name", &self.name)
            .field("pid", &self.child.id())
            .field("stage", &self.stage)
            .finish()
    }
}

impl PluginHandle {
    /// Spawns the plugin and completes the `init` handshake.
    pub fn open(spec: &PluginLaunchSpec) -> Result<Self, PluginError> {
        let mut child = Command::new(&spec.program)
            .args(&spec.args)
            .envs(&spec.env)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| PluginError::Spawn {
                program: spec.program.clone(),
                source,
            })?;
        let stdout = child.stdout.take().expect("stdout is piped");
        let stdin = child.stdin.take();
        let (tx, rx) = mpsc::channel();
        thread::Builder::new()
            .name("plugin-stdout".into())
            .spawn(move || {
                for line in BufReader::new(stdout).lines() {
                    let stop = line.is_err();
                    if tx.send(line).is_err() || stop {
                        break;
                    }
                }
            })
            .map_err(PluginError::Io)?;
        let mut handle = Self {
            child,
            stdin,
            lines: rx,
            name: String::new(),
            stage: Stage::Initialized,
            doc_ids: Vec::new(),
            request_timeout: spec.request_timeout_secs,
        };
        let reply: InitReply = handle.request(
            &Request::Init {
                protocol: PROTOCOL_VERSION,
                config: spec.config.clone(),
            },
            Some(spec.init_timeout_secs),
        )?;
        handle.name = reply.name;
        Ok(handle)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Points the plugin at the corpus file; `corpus` must be the same
    /// collection, used to check sizes and name documents in errors.
    pub fn load_corpus(&mut self, path: &Path, category: &str, corpus: &Corpus) -> Result<usize, PluginError> {
        self.require_open("load_corpus")?;
        let reply: LoadReply = self.request(
            &Request::LoadCorpus {
                path: path.to_string_lossy().into_owned(),
                category: category.to_owned(),
            },
            self.request_timeout,
        )?;
        if reply.n_docs != corpus.len() {
            return Err(PluginError::CorpusSize {
                expected: corpus.len(),
                got: reply.n_docs,
            });
        }
        self.doc_ids = corpus.doc_ids().map(str::to_owned).collect();
        self.stage = Stage::CorpusLoaded;
        Ok(reply.n_docs)
    }

    /// Sends the full labeled set. Returns the plugin's reported training
    /// time in seconds.
    pub fn fit(&mut self, labeled: &LabeledSet) -> Result<f64, PluginError> {
        self.require_open("fit")?;
        if self.stage == Stage::Initialized {
            return Err(PluginError::OutOfOrder {
                command: "fit",
                requires: "load_corpus",
            });
        }
        let labeled = labeled
            .entries()
            .iter()
            .map(|e| WireLabel {
                doc_id: e.doc_id.clone(),
                label: u8::from(e.label),
            })
            .collect();
        let reply: FitReply = self.request(&Request::Fit { labeled }, self.request_timeout)?;
        self.stage = Stage::Fitted;
        Ok(reply.train_seconds)
    }

    pub fn score(&mut self) -> Result<ScoreVector, PluginError> {
        self.require_open("score")?;
        if self.stage != Stage::Fitted {
            return Err(PluginError::OutOfOrder {
                command: "score",
                requires: "fit",
            });
        }
        let reply: ScoreReply = self.request(&Request::Score, self.request_timeout)?;
        if reply.scores.len() != self.doc_ids.len() {
            return Err(PluginError::ScoreCount {
                expected: self.doc_ids.len(),
                got: reply.scores.len(),
            });
        }
        if let Some((i, &value)) = reply
            .scores
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(PluginError::ScoreOutOfRange {
                doc_id: self.doc_ids[i].clone(),
                value,
            });
        }
        Ok(ScoreVector::new(reply.scores).expect("validated above"))
    }

    /// Sends `shutdown` and waits for the process to exit.
    pub fn close(&mut self) -> Result<(), PluginError> {
        if self.stage == Stage::Closed {
            return Ok(());
        }
        let result = self
            .request::<Value>(&Request::Shutdown, Some(self.request_timeout.unwrap_or(30.0)))
            .map(|_| ());
        self.stage = Stage::Closed;
        self.stdin = None;
        if result.is_err() {
            let _ = self.child.kill();
        }
        let _ = self.child.wait();
        result
    }

    fn require_open(&self, command: &'static str) -> Result<(), PluginError> {
        if self.stage == Stage::Closed {
            return Err(PluginError::OutOfOrder {
                command,
                requires: "open",
            });
        }
        Ok(())
    }

    fn exit_status(&mut self) -> String {
        // Give a dying process a moment to be reaped.
        for _ in 0..50 {
            match self.child.try_wait() {
                Ok(Some(status)) => return status.to_string(),
                Ok(None) => thread::sleep(Duration::from_millis(10)),
                Err(e) => return e.to_string(),
            }
        }
        "still running, stdout closed".into()
    }

    fn request<T: DeserializeOwned>(&mut self, request: &Request, timeout: Option<f64>) -> Result<T, PluginError> {
        let command = request.command();
        let mut line = serde_json::to_string(request).expect("requests serialize");
        line.push('\n');
        let write = match self.stdin.as_mut() {
            Some(stdin) => stdin.write_all(line.as_bytes()).and_then(|()| stdin.flush()),
            None => Err(std::io::ErrorKind::BrokenPipe.into()),
        };
        if let Err(e) = write {
            if e.kind() == std::io::ErrorKind::BrokenPipe {
                return Err(PluginError::Exited {
                    command,
                    status: self.exit_status(),
                });
            }
            return Err(e.into());
        }
        let received = match timeout {
            Some(secs) => self
                .lines
                .recv_timeout(Duration::from_secs_f64(secs))
                .map_err(|e| match e {
                    RecvTimeoutError::Timeout => Some(secs),
                    RecvTimeoutError::Disconnected => None,
                }),
            None => self.lines.recv().map_err(|_| None),
        };
        let response = match received {
            Ok(Ok(response)) => response,
            Ok(Err(e)) => return Err(e.into()),
            Err(Some(seconds)) => {
                let _ = self.child.kill();
                self.stage = Stage::Closed;
                return Err(PluginError::Timeout { command, seconds });
            }
            Err(None) => {
                self.stage = Stage::Closed;
                return Err(PluginError::Exited {
                    command,
                    status: self.exit_status(),
                });
            }
        };
        parse_response(command, &response)
    }
}

impl Drop for PluginHandle {
    fn drop(&mut self) {
        if self.stage != Stage::Closed {
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
    }
}

fn parse_response<T: DeserializeOwned>(command: &'static str, line: &str) -> Result<T, PluginError> {
    let malformed = |reason: String| PluginError::Malformed {
        command,
        reason,
        line: line.chars().take(200).collect(),
    };
    let value: Value = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    match value.get("ok") {
        Some(Value::Bool(true)) => serde_json::from_value(value).map_err(|e| malformed(e.to_string())),
        Some(Value::Bool(false)) => {
            let message = value
                .get("error")
                .and_then(Value::as_str)
                .unwrap_or("(no message)")
                .to_owned();
            Err(PluginError::Remote { command, message })
        }
        _ => Err(malformed("missing boolean `ok` field".into())),
    }
}

/// Adapts a plugin process to [`Scorer`]. The plugin keeps its model
/// between `fit` calls; warm starting is its responsibility.
pub struct PluginScorer {
    handle: PluginHandle,
}

impl PluginScorer {
    pub fn start(
        spec: &PluginLaunchSpec,
        corpus_path: &Path,
        category: &str,
        corpus: &Arc<Corpus>,
    ) -> Result<Self, PluginError> {
        let mut handle = PluginHandle::open(spec)?;
        handle.load_corpus(corpus_path, category, corpus)?;
        Ok(Self { handle })
    }

    pub fn handle(&self) -> &PluginHandle {
        &self.handle
    }
}

impl Scorer for PluginScorer {
    fn name(&self) -> String {
        format!("plugin({})", self.handle.name())
    }

    fn fit(&mut self, labeled: &LabeledSet) -> Result<Option<f64>, ClassifierError> {
        Ok(Some(self.handle.fit(labeled)?))
    }

    fn score(&mut self) -> Result<ScoreVector, ClassifierError> {
        Ok(self.handle.score()?)
    }

    fn close(&mut self) -> Result<(), ClassifierError> {
        Ok(self.handle.close()?)
    }
}

/// Absolute form of a corpus path, as sent to plugins.
pub fn plugin_corpus_path(path: &Path) -> PathBuf {
    std::fs::canonicalize(path).unwrap_or_else(|_| path.to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_success_and_failure() {
        let r: LoadReply = parse_response("load_corpus", r#"{"ok":true,"n_docs":4}"#).unwrap();
        assert_eq!(r.n_docs, 4);
        let err = parse_response::<LoadReply>("fit", r#"{"ok":false,"error":"boom"}"#).unwrap_err();
        assert!(matches!(err, PluginError::Remote { command: "fit", ref message } if message == "boom"));
    }

    #[test]
    fn malformed_responses() {
        for line in ["not json", r#"{"n_docs":4}"#, r#"{"ok":"yes"}"#, r#"{"ok":true}"#] {
            let err = parse_response::<LoadReply>("load_corpus", line).unwrap_err();
            assert!(matches!(err, PluginError::Malformed { .. }), "{line}: {err}");
        }
    }

    #[test]
    fn launch_spec_defaults() {
        let spec: PluginLaunchSpec = serde_json::from_str(r#"{"program":"python3"}"#).unwrap();
        assert_eq!(spec, PluginLaunchSpec::new("python3"));
    }

    #[test]
    fn missing_program_fails_to_spawn() {
        let err = PluginHandle::open(&PluginLaunchSpec::new("/nonexistent/plugin-binary")).unwrap_err();
        assert!(matches!(err, PluginError::Spawn { .. }));
    }
}
