//! Synthetic labeled corpora.
//!
//! Documents are bags of background words `w00000..` drawn uniformly. Each
//! category owns a small set of marker tokens (`mk<c>x<j>`). A positive
//! document carries `markers_per_doc` of them; with `noise = 0` the markers
//! separate positives from negatives perfectly. Noise `v` in [0, 1] drops
//! the markers from each positive with probability `v` and plants a decoy
//! marker in each negative with probability `v * n_pos / n_neg`, so about
//! `v * n_pos` negatives look relevant on the token level.
//!
//! A spec file is JSON:
//!
//! ```json
//! {
//!   "n_docs": 2000,
//!   "doc_length": 60,
//!   "vocab_size": 2000,
//!   "markers_per_doc": 3,
//!   "categories": [{"name": "easy", "prevalence": 0.05, "noise": 0.0}]
//! }
//! ```

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::corpus::{Corpus, Document};

const MARKER_VOCAB: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthCategory {
    pub name: String,
    pub prevalence: f64,
    #[serde(default)]
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_docs: usize,
    #[serde(default = "default_doc_length")]
    pub doc_length: usize,
    #[serde(default = "default_vocab_size")]
    pub vocab_size: usize,
    #[serde(default = "default_markers_per_doc")]
    pub markers_per_doc: usize,
    pub categories: Vec<SynthCategory>,
}

fn default_doc_length() -> usize {
    60
}
fn default_vocab_size() -> usize {
    2000
}
fn default_markers_per_doc() -> usize {
    3
}

impl SynthSpec {
    pub fn new(n_docs: usize, categories: Vec<SynthCategory>) -> Self {
        Self {
            n_docs,
            doc_length: default_doc_length(),
            vocab_size: default_vocab_size(),
            markers_per_doc: default_markers_per_doc(),
            categories,
        }
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Synth(m));
        if self.n_docs == 0 {
            return bad("n_docs must be positive".into());
        }
        if self.vocab_size == 0 {
            return bad("vocab_size must be positive".into());
        }
        if self.markers_per_doc == 0 {
            return bad("markers_per_doc must be positive".into());
        }
        let mut names = BTreeSet::new();
        for c in &self.categories {
            if c.name.is_empty() || !names.insert(c.name.as_str()) {
                return bad(format!("category names must be unique and non-empty ({:?})", c.name));
            }
            if !(c.prevalence > 0.0 && c.prevalence <= 1.0) {
                return bad(format!("{}: prevalence must be in (0, 1], got {}", c.name, c.prevalence));
            }
            if c.prevalence * (self.n_docs as f64) < 1.0 {
                return bad(format!(
                    "{}: prevalence {} yields no positive document among {}",
                    c.name, c.prevalence, self.n_docs
                ));
            }
            if !(0.0..=1.0).contains(&c.noise) {
                return bad(format!("{}: noise must be in [0, 1], got {}", c.name, c.noise));
            }
        }
        Ok(())
    }
}

/// Deterministic corpus for `spec` and `rng_seed`. Category `c` has exactly
/// `round(n_docs * prevalence)` relevant documents.
pub fn synthesize(spec: &SynthSpec, rng_seed: u64) -> Result<Corpus, ExperimentError> {
    spec.validate()?;
    let n = spec.n_docs;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut tokens: Vec<Vec<String>> = (0..n)
        .map(|_| {
            (0..spec.doc_length)
                .map(|_| format!("w{:05}", rng.random_range(0..spec.vocab_size)))
                .collect()
        })
        .collect();
    let mut categories: Vec<BTreeSet<String>> = vec![BTreeSet::new(); n];

    for (ci, cat) in spec.categories.iter().enumerate() {
        let n_pos = ((n as f64) * cat.prevalence).round() as usize;
        let n_pos = n_pos.clamp(1, n);
        let mut positive = vec![false; n];
        for i in rand::seq::index::sample(&mut rng, n, n_pos) {
            positive[i] = true;
            categories[i].insert(cat.name.clone());
        }
        let n_neg = n - n_pos;
        let decoy_rate = if n_neg == 0 {
            0.0
        } else {
            (cat.noise * n_pos as f64 / n_neg as f64).min(1.0)
        };
        let marker = |rng: &mut ChaCha8Rng| format!("mk{ci}x{}", rng.random_range(0..MARKER_VOCAB));
        for i in 0..n {
            if positive[i] {
                if rng.random::<f64>() >= cat.noise {
                    for _ in 0..spec.markers_per_doc {
                        let m = marker(&mut rng);
                        tokens[i].push(m);
                    }
                }
            } else if rng.random::<f64>() < decoy_rate {
                let m = marker(&mut rng);
                tokens[i].push(m);
            }
        }
    }

    let documents = tokens
        .into_iter()
        .zip(categories)
        .enumerate()
        .map(|(i, (mut words, cats))| {
            words.shuffle(&mut rng);
            Document {
                doc_id: format!("s{i:06}"),
                text: words.join(" "),
                categories: cats,
            }
        })
        .collect();
    Ok(Corpus::from_documents(documents)?)
}
