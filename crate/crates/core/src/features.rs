//! Tokenization and BM25-saturated term-frequency features.
//!
//! Each stored cell is the within-document BM25 saturation of a term count:
//!
//! ```text
//! tf / (tf + k1 * ((1 - b) + b * dl / avgdl))
//! ```
//!
//! which lies strictly between 0 and 1. There is no IDF factor unless
//! [`VectorizerConfig::idf`] is set.
//!
//! # Matrix cache format
//!
//! [`save_cache`] writes a small text file:
//!
//! ```text
//! tarsim-features 1
//! rows <n_rows> cols <n_cols> nnz <n_stored> key <hex sha-256>
//! <row> <col> <value>        (one line per stored cell, row-major)
//! ```
//!
//! Values are printed in shortest round-trip decimal form, so reloading is
//! exact. The key covers the vectorizer config and the corpus content;
//! [`load_cache`] returns `None` when it does not match.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use unicode_segmentation::UnicodeSegmentation;

use crate::corpus::Corpus;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("invalid vectorizer config: {0}")]
    InvalidConfig(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: malformed feature cache at line {line}: {message}", path.display())]
    Cache {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tokenizer {
    /// Unicode word boundaries (UAX #29), lowercased.
    #[default]
    UnicodeWord,
    /// Whitespace-separated runs, lowercased.
    Whitespace,
}

impl Tokenizer {
    pub fn tokenize(self, text: &str) -> Vec<String> {
        match self {
            Tokenizer::UnicodeWord => text.unicode_words().map(str::to_lowercase).collect(),
            Tokenizer::Whitespace => text.split_whitespace().map(str::to_lowercase).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VectorizerConfig {
    pub k1: f64,
    pub b: f64,
    pub min_df: usize,
    pub tokenizer: Tokenizer,
    /// Multiply saturated tf by `ln(1 + (N - df + 0.5) / (df + 0.5))`.
    /// Off by default; when on, values are no longer bounded by 1.
    pub idf: bool,
}

impl Default for VectorizerConfig {
    fn default() -> Self {
        Self {
            k1: 1.2,
            b: 0.75,
            min_df: 1,
            tokenizer: Tokenizer::UnicodeWord,
            idf: false,
        }
    }
}

impl VectorizerConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if !(self.k1 > 0.0 && self.k1.is_finite()) {
            return Err(FeatureError::InvalidConfig(format!("k1 must be > 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(FeatureError::InvalidConfig(format!("b must be in [0, 1], got {}", self.b)));
        }
        if self.min_df == 0 {
            return Err(FeatureError::InvalidConfig("min_df must be >= 1".into()));
        }
        Ok(())
    }

    /// Saturated value of a term seen `tf` times in a document of length
    /// `dl`. Zero for `tf == 0`.
    pub fn saturate(&self, tf: f64, dl: f64, avgdl: f64) -> f64 {
        if tf <= 0.0 {
            return 0.0;
        }
        let ratio = if avgdl > 0.0 { dl / avgdl } else { 1.0 };
        tf / (tf + self.k1 * ((1.0 - self.b) + self.b * ratio))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: BTreeMap<String, usize>,
    document_frequency: Vec<usize>,
    document_lengths: Vec<usize>,
    avg_doc_length: f64,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index(&self, term: &str) -> Option<usize> {
        self.terms.get(term).copied()
    }

    /// Terms in column order.
    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.terms.keys().map(String::as_str)
    }

    pub fn document_frequency(&self, column: usize) -> usize {
        self.document_frequency[column]
    }

    pub fn document_lengths(&self) -> &[usize] {
        &self.document_lengths
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }
}

pub fn build_vocabulary(corpus: &Corpus, config: &VectorizerConfig) -> Result<Vocabulary, FeatureError> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(FeatureError::EmptyCorpus);
    }
    let tokenized: Vec<Vec<String>> = corpus
        .documents()
        .par_iter()
        .map(|d| config.tokenizer.tokenize(&d.text))
        .collect();
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for tokens in &tokenized {
        let mut seen: Vec<&str> = tokens.iter().map(String::as_str).collect();
        seen.sort_unstable();
        seen.dedup();
        for t in seen {
            *df.entry(t).or_default() += 1;
        }
    }
    let mut terms = BTreeMap::new();
    let mut document_frequency = Vec::new();
    for (term, count) in df {
        if count >= config.min_df {
            terms.insert(term.to_owned(), terms.len());
            document_frequency.push(count);
        }
    }
    let document_lengths: Vec<usize> = tokenized.iter().map(Vec::len).collect();
    let avg_doc_length =
        document_lengths.iter().sum::<usize>() as f64 / document_lengths.len() as f64;
    Ok(Vocabulary {
        terms,
        document_frequency,
        document_lengths,
        avg_doc_length,
    })
}

/// Compressed sparse row matrix; row `i` belongs to corpus document `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl FeatureMatrix {
    /// Builds a matrix from per-row `(column, value)` lists. Zero values are
    /// dropped and columns are sorted within each row.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                assert!(c < n_cols, "column {c} out of range for {n_cols} columns");
                if v != 0.0 {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            n_cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n_cols = rows.first().map_or(0, Vec::len);
        Self::from_rows(
            n_cols,
            rows.iter()
                .map(|r| r.iter().copied().enumerate().collect())
                .collect(),
        )
    }

    pub fn n_rows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn row_dot(&self, i: usize, weights: &[f64]) -> f64 {
        let (cols, vals) = self.row(i);
        cols.iter().zip(vals).map(|(&c, &v)| weights[c] * v).sum()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Keeps only the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix::from_rows(
            self.n_cols,
            rows.iter()
                .map(|&r| {
                    let (c, v) = self.row(r);
                    c.iter().copied().zip(v.iter().copied()).collect()
                })
                .collect(),
        )
    }
}

pub fn vectorize(corpus: &Corpus, vocab: &Vocabulary, config: &VectorizerConfig) -> FeatureMatrix {
    let avgdl = vocab.avg_doc_length;
    let n_docs = vocab.document_lengths.len() as f64;
    let rows: Vec<Vec<(usize, f64)>> = corpus
        .documents()
        .par_iter()
        .map(|doc| {
            let tokens = config.tokenizer.tokenize(&doc.text);
            let dl = tokens.len() as f64;
            let mut counts: HashMap<usize, u32> = HashMap::new();
            for t in &tokens {
                if let Some(col) = vocab.index(t) {
                    *counts.entry(col).or_default() += 1;
                }
            }
            counts
                .into_iter()
                .map(|(col, tf)| {
                    let mut value = config.saturate(f64::from(tf), dl, avgdl);
                    if config.idf {
                        let df = vocab.document_frequency[col] as f64;
                        value *= (1.0 + (n_docs - df + 0.5) / (df + 0.5)).ln();
                    }
                    (col, value)
                })
                .collect()
        })
        .collect();
    FeatureMatrix::from_rows(vocab.len(), rows)
}

/// Vocabulary and matrix in one step.
pub fn featurize(corpus: &Corpus, config: &VectorizerConfig) -> Result<FeatureMatrix, FeatureError> {
    let vocab = build_vocabulary(corpus, config)?;
    Ok(vectorize(corpus, &vocab, config))
}

/// Hex SHA-256 over the vectorizer config and the corpus content.
pub fn cache_key(corpus: &Corpus, config: &VectorizerConfig) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(config).expect("config serializes"));
    for doc in corpus.documents() {
        hasher.update((doc.doc_id.len() as u64).to_le_bytes());
        hasher.update(doc.doc_id.as_bytes());
        hasher.update((doc.text.len() as u64).to_le_bytes());
        hasher.update(doc.text.as_bytes());
    }
    hex::encode(hasher.finalize())
}

const CACHE_MAGIC: &str = "tarsim-features 1";

pub fn save_cache(matrix: &FeatureMatrix, key: &str, path: &Path) -> Result<(), FeatureError> {
    let io_err = |source| FeatureError::Io {
        path: path.to_owned(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    (|| -> std::io::Result<()> {
        writeln!(out, "{CACHE_MAGIC}")?;
        writeln!(
            out,
            "rows {} cols {} nnz {} key {}",
            matrix.n_rows(),
            matrix.n_cols(),
            matrix.nnz(),
            key
        )?;
        for r in 0..matrix.n_rows() {
            let (cols, vals) = matrix.row(r);
            for (c, v) in cols.iter().zip(vals) {
                writeln!(out, "{r} {c} {v}")?;
            }
        }
        out.flush()
    })()
    .map_err(io_err)
}

/// Loads a cached matrix; `Ok(None)` if the file is absent or was written
/// under a different key.
pub fn load_cache(path: &Path, key: &str) -> Result<Option<FeatureMatrix>, FeatureError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(source) => {
            return Err(FeatureError::Io {
                path: path.to_owned(),
                source,
            })
        }
    };
    let bad = |line: usize, message: &str| FeatureError::Cache {
        path: path.to_owned(),
        line,
        message: message.to_owned(),
    };
    let mut lines = BufReader::new(file).lines().enumerate();
    let mut next_line = || -> Result<Option<(usize, String)>, FeatureError> {
        match lines.next() {
            None => Ok(None),
            Some((i, Ok(l))) => Ok(Some((i + 1, l))),
            Some((_, Err(source))) => Err(FeatureError::Io {
                path: path.to_owned(),
                source,
            }),
        }
    };
    if next_line()?.map(|(_, l)| l).as_deref() != Some(CACHE_MAGIC) {
        return Err(bad(1, "missing header"));
    }
    let (_, header) = next_line()?.ok_or_else(|| bad(2, "missing dimensions"))?;
    let parts: Vec<&str> = header.split(' ').collect();
    let ["rows", rows, "cols", cols, "nnz", nnz, "key", file_key] = parts[..] else {
        return Err(bad(2, "malformed dimensions"));
    };
    if file_key != key {
        return Ok(None);
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| bad(2, "bad number"));
    let (n_rows, n_cols, nnz) = (parse(rows)?, parse(cols)?, parse(nnz)?);
    let mut row_lists: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_rows];
    let mut seen = 0;
    let mut last_line = 2;
    while let Some((line_no, line)) = next_line()? {
        last_line = line_no;
        let mut it = line.split(' ');
        let (Some(r), Some(c), Some(v), None) = (it.next(), it.next(), it.next(), it.next()) else {
            return Err(bad(line_no, "expected `row col value`"));
        };
        let r: usize = r.parse().map_err(|_| bad(line_no, "bad row"))?;
        let c: usize = c.parse().map_err(|_| bad(line_no, "bad column"))?;
        let v: f64 = v.parse().map_err(|_| bad(line_no, "bad value"))?;
        if r >= n_rows || c >= n_cols {
            return Err(bad(line_no, "index out of range"));
        }
        row_lists[r].push((c, v));
        seen += 1;
    }
    if seen != nnz {
        return Err(bad(last_line, "entry count does not match header"));
    }
    Ok(Some(FeatureMatrix::from_rows(n_cols, row_lists)))
}
