//! Scripted scorer plugin speaking the stdio protocol, used by tests.
//!
//! Options:
//!   --value V          score every document V (default 0.5)
//!   --echo-labels      labeled positives score 0.9, negatives 0.1
//!   --out-of-range     first score is 1.5
//!   --short-scores     return one score too few
//!   --malformed        answer `score` with a non-JSON line
//!   --fail-fit         answer `fit` with an error response
//!   --die-after-fits N exit with status 3 on the N-th fit
//!   --hang-on-init     never answer `init`
//!   --transcript FILE  append every request line to FILE

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::{self, BufRead, Write};
use std::path::Path;
use std::process::ExitCode;

use serde_json::{json, Value};
use tarsim_core::classifier::protocol::{error_line, ok_line, Request, PROTOCOL_VERSION};
use tarsim_core::corpus::{load_corpus, CorpusFormat};

#[derive(Default)]
struct Options {
    value: f64,
    echo_labels: bool,
    out_of_range: bool,
    short_scores: bool,
    malformed: bool,
    fail_fit: bool,
    die_after_fits: Option<usize>,
    hang_on_init: bool,
    transcript: Option<String>,
}

fn parse_args() -> Result<Options, String> {
    let mut opts = Options {
        value: 0.5,
        ..Options::default()
    };
    let mut args = std::env::args().skip(1);
    while let Some(a) = args.next() {
        let mut next = |name: &str| args.next().ok_or(format!("{name} needs a value"));
        match a.as_str() {
            "--value" => opts.value = next("--value")?.parse().map_err(|e| format!("--value: {e}"))?,
            "--echo-labels" => opts.echo_labels = true,
            "--out-of-range" => opts.out_of_range = true,
            "--short-scores" => opts.short_scores = true,
            "--malformed" => opts.malformed = true,
            "--fail-fit" => opts.fail_fit = true,
            "--die-after-fits" => {
                opts.die_after_fits = Some(next("--die-after-fits")?.parse().map_err(|e| format!("{e}"))?)
            }
            "--hang-on-init" => opts.hang_on_init = true,
            "--transcript" => opts.transcript = Some(next("--transcript")?),
            other => return Err(format!("unknown option {other}")),
        }
    }
    Ok(opts)
}

fn main() -> ExitCode {
    let opts = match parse_args() {
        Ok(o) => o,
        Err(e) => {
            eprintln!("mock plugin: {e}");
            return ExitCode::from(2);
        }
    };
    let stdin = io::stdin();
    let mut stdout = io::stdout().lock();
    let mut doc_ids: Option<Vec<String>> = None;
    let mut labels: HashMap<String, u8> = HashMap::new();
    let mut fits = 0;

    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        if let Some(path) = &opts.transcript {
            if let Ok(mut f) = OpenOptions::new().create(true).append(true).open(path) {
                let _ = writeln!(f, "{line}");
            }
        }
        let reply = match serde_json::from_str::<Request>(&line) {
            Err(e) => error_line(&format!("bad request: {e}")),
            Ok(Request::Init { protocol, .. }) => {
                if opts.hang_on_init {
                    loop {
                        std::thread::sleep(std::time::Duration::from_secs(3600));
                    }
                }
                if protocol != PROTOCOL_VERSION {
                    error_line(&format!("unsupported protocol {protocol}"))
                } else {
                    ok_line(json!({"name": "mock"}))
                }
            }
            Ok(Request::LoadCorpus { path, .. }) => match load_corpus(Path::new(&path), CorpusFormat::Jsonl) {
                Ok(c) => {
                    let ids: Vec<String> = c.doc_ids().map(str::to_owned).collect();
                    let n = ids.len();
                    doc_ids = Some(ids);
                    ok_line(json!({"n_docs": n}))
                }
                Err(e) => error_line(&e.to_string()),
            },
            Ok(Request::Fit { labeled }) => {
                fits += 1;
                if opts.die_after_fits == Some(fits) {
                    return ExitCode::from(3);
                }
                if doc_ids.is_none() {
                    error_line("fit before load_corpus")
                } else if opts.fail_fit {
                    error_line("scripted fit failure")
                } else {
                    labels = labeled.into_iter().map(|l| (l.doc_id, l.label)).collect();
                    ok_line(json!({"train_seconds": 0.0}))
                }
            }
            Ok(Request::Score) => match &doc_ids {
                None => error_line("score before load_corpus"),
                Some(_) if opts.malformed => "this is not json".to_owned(),
                Some(ids) => {
                    let mut scores: Vec<f64> = ids
                        .iter()
                        .map(|id| match (opts.echo_labels, labels.get(id)) {
                            (true, Some(1)) => 0.9,
                            (true, Some(_)) => 0.1,
                            _ => opts.value,
                        })
                        .collect();
                    if opts.out_of_range && !scores.is_empty() {
                        scores[0] = 1.5;
                    }
                    if opts.short_scores {
                        scores.pop();
                    }
                    ok_line(json!({"scores": scores}))
                }
            },
            Ok(Request::Shutdown) => {
                let _ = writeln!(stdout, "{}", ok_line(Value::Null));
                let _ = stdout.flush();
                return ExitCode::SUCCESS;
            }
        };
        if writeln!(stdout, "{reply}").and_then(|()| stdout.flush()).is_err() {
            return ExitCode::from(1);
        }
    }
    ExitCode::SUCCESS
}
