//! Plugin wire protocol, version 1.
//!
//! Newline-delimited JSON over the plugin's stdin/stdout. The host sends one
//! request per line and reads exactly one response line for it:
//!
//! | request | success response |
//! |---|---|
//! | `{"cmd":"init","protocol":1,"config":{..}}` | `{"ok":true,"name":"..."}` |
//! | `{"cmd":"load_corpus","path":"..","category":".."}` | `{"ok":true,"n_docs":N}` |
//! | `{"cmd":"fit","labeled":[{"doc_id":"..","label":0\|1},..]}` | `{"ok":true,"train_seconds":T}` |
//! | `{"cmd":"score"}` | `{"ok":true,"scores":[..]}` (corpus order) |
//! | `{"cmd":"shutdown"}` | `{"ok":true}` |
//!
//! Any request may instead be answered with `{"ok":false,"error":".."}`.

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum Request {
    Init { protocol: u32, config: Value },
    LoadCorpus { path: String, category: String },
    Fit { labeled: Vec<WireLabel> },
    Score,
    Shutdown,
}

impl Request {
    pub fn command(&self) -> &'static str {
        match self {
            Request::Init { .. } => "init",
            Request::LoadCorpus { .. } => "load_corpus",
            Request::Fit { .. } => "fit",
            Request::Score => "score",
            Request::Shutdown => "shutdown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireLabel {
    pub doc_id: String,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct InitReply {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct LoadReply {
    pub n_docs: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct FitReply {
    pub train_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ScoreReply {
    pub scores: Vec<f64>,
}

/// Serializes a success response: `{"ok":true, ..fields}`.
pub fn ok_line(fields: Value) -> String {
    let mut obj = serde_json::Map::new();
    obj.insert("ok".into(), Value::Bool(true));
    if let Value::Object(extra) = fields {
        obj.extend(extra);
    }
    Value::Object(obj).to_string()
}

/// Serializes an error response. Newlines in the message are escaped by
/// JSON encoding, so the result is always a single line.
pub fn error_line(message: &str) -> String {
    serde_json::json!({"ok": false, "error": message}).to_string()
}
