//! Labeled document collections.
//!
//! A corpus file is UTF-8 JSON Lines, one document per line:
//!
//! ```text
//! {"doc_id":"d1","text":"title and body text","categories":["C15","GCAT"]}
//! ```
//!
//! Relevance judgments are implied by `categories`. An optional qrels file
//! (`category<TAB>doc_id<TAB>{0|1}`) can be merged on top.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: empty doc_id")]
    EmptyId { line: usize },
    #[error("line {line}: duplicate doc_id {doc_id:?}")]
    DuplicateId { line: usize, doc_id: String },
    #[error("qrels line {line}: {message}")]
    Qrels { line: usize, message: String },
    #[error("sample fraction must be in (0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("no {what} given for category {category:?}")]
    MissingScore { category: String, what: &'static str },
}

/// On-disk corpus encodings understood by [`load_corpus`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    #[default]
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    #[serde(default)]
    pub categories: BTreeSet<String>,
}

impl Document {
    pub fn new<I, S>(doc_id: impl Into<String>, text: impl Into<String>, categories: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            doc_id: doc_id.into(),
            text: text.into(),
            categories: categories.into_iter().map(Into::into).collect(),
        }
    }
}

/// An immutable, ordered document collection with its category index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<Document>,
    category_index: BTreeMap<String, BTreeSet<String>>,
    positions: HashMap<String, usize>,
}

impl Corpus {
    /// Builds a corpus, rejecting empty or duplicate ids. Line numbers in
    /// errors are 1-based positions in `documents`.
    pub fn from_documents(documents: Vec<Document>) -> Result<Self, CorpusError> {
        let mut positions = HashMap::with_capacity(documents.len());
        for (i, doc) in documents.iter().enumerate() {
            if doc.doc_id.is_empty() {
                return Err(CorpusError::EmptyId { line: i + 1 });
            }
            if positions.insert(doc.doc_id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId {
                    line: i + 1,
                    doc_id: doc.doc_id.clone(),
                });
            }
        }
        let category_index = invert(&documents);
        Ok(Self {
            documents,
            category_index,
            positions,
        })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn doc(&self, index: usize) -> &Document {
        &self.documents[index]
    }

    pub fn doc_id(&self, index: usize) -> &str {
        &self.documents[index].doc_id
    }

    pub fn index_of(&self, doc_id: &str) -> Option<usize> {
        self.positions.get(doc_id).copied()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.documents.iter().map(|d| d.doc_id.as_str())
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.category_index.keys().map(String::as_str)
    }

    pub fn category_index(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.category_index
    }

    /// Relevant doc ids for `category`; empty when the category is unknown.
    pub fn relevant(&self, category: &str) -> BTreeSet<String> {
        self.category_index
            .get(category)
            .cloned()
            .unwrap_or_default()
    }

    pub fn relevant_count(&self, category: &str) -> usize {
        self.category_index.get(category).map_or(0, BTreeSet::len)
    }

    /// Per-document gold relevance for `category`, in corpus order.
    pub fn relevance_mask(&self, category: &str) -> Vec<bool> {
        self.documents
            .iter()
            .map(|d| d.categories.contains(category))
            .collect()
    }

    /// Applies a qrels file. A `1` judgment adds the category to the
    /// document, a `0` removes it.
    pub fn merge_qrels(self, path: &Path) -> Result<Self, CorpusError> {
        let file = File::open(path).map_err(|source| CorpusError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut documents = self.documents;
        let positions = self.positions;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|source| CorpusError::Io {
                path: path.to_owned(),
                source,
            })?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [category, doc_id, judgment] = fields[..] else {
                return Err(CorpusError::Qrels {
                    line: line_no,
                    message: format!("expected 3 tab-separated fields, got {}", fields.len()),
                });
            };
            let Some(&pos) = positions.get(doc_id) else {
                return Err(CorpusError::Qrels {
                    line: line_no,
                    message: format!("unknown doc_id {doc_id:?}"),
                });
            };
            let cats = &mut documents[pos].categories;
            match judgment.trim() {
                "1" => {
                    cats.insert(category.to_owned());
                }
                "0" => {
                    cats.remove(category);
                }
                other => {
                    return Err(CorpusError::Qrels {
                        line: line_no,
                        message: format!("judgment must be 0 or 1, got {other:?}"),
                    })
                }
            }
        }
        let category_index = invert(&documents);
        Ok(Self {
            documents,
            category_index,
            positions,
        })
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for doc in &self.documents {
            serde_json::to_writer(&mut out, doc)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let io_err = |source| CorpusError::Io {
            path: path.to_owned(),
            source,
        };
        let file = File::create(path).map_err(io_err)?;
        self.write_jsonl(BufWriter::new(file)).map_err(io_err)
    }
}

fn invert(documents: &[Document]) -> BTreeMap<String, BTreeSet<String>> {
    let mut index: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for doc in documents {
        for cat in &doc.categories {
            index
                .entry(cat.clone())
                .or_default()
                .insert(doc.doc_id.clone());
        }
    }
    index
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })?;
    match format {
        CorpusFormat::Jsonl => read_jsonl(BufReader::new(file), path),
    }
}

/// Parses JSONL from any reader. Blank lines are skipped; line numbers in
/// errors count them.
pub fn read_jsonl<R: BufRead>(reader: R, origin: &Path) -> Result<Corpus, CorpusError> {
    let mut documents = Vec::new();
    let mut line_numbers = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: origin.to_owned(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document =
            serde_json::from_str(&line).map_err(|source| CorpusError::Parse { line: i + 1, source })?;
        documents.push(doc);
        line_numbers.push(i + 1);
    }
    Corpus::from_documents(documents).map_err(|err| match err {
        CorpusError::DuplicateId { line, doc_id } => CorpusError::DuplicateId {
            line: line_numbers[line - 1],
            doc_id,
        },
        CorpusError::EmptyId { line } => CorpusError::EmptyId {
            line: line_numbers[line - 1],
        },
        other => other,
    })
}

/// Uniform sample without replacement of `round(fraction * N)` documents,
/// kept in their original order.
pub fn downsample(corpus: &Corpus, fraction: f64, rng_seed: u64) -> Result<Corpus, CorpusError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(CorpusError::InvalidFraction(fraction));
    }
    let n = corpus.len();
    let keep = ((fraction * n as f64).round() as usize).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut picked = rand::seq::index::sample(&mut rng, n, keep).into_vec();
    picked.sort_unstable();
    let documents = picked
        .into_iter()
        .map(|i| corpus.documents[i].clone())
        .collect();
    Corpus::from_documents(documents)
}

/// Fraction of the corpus relevant to `category` (0 for unknown categories
/// or an empty corpus).
pub fn category_prevalence(corpus: &Corpus, category: &str) -> f64 {
    if corpus.is_empty() {
        return 0.0;
    }
    corpus.relevant_count(category) as f64 / corpus.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrevalenceBin {
    Rare,
    Medium,
    Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DifficultyBin {
    Hard,
    Medium,
    Easy,
}

impl std::fmt::Display for PrevalenceBin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PrevalenceBin::Rare => "rare",
            PrevalenceBin::Medium => "medium",
            PrevalenceBin::Common => "common",
        })
    }
}

impl std::fmt::Display for DifficultyBin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DifficultyBin::Hard => "hard",
            DifficultyBin::Medium => "medium",
            DifficultyBin::Easy => "easy",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryBin {
    pub category: String,
    pub prevalence_bin: PrevalenceBin,
    pub difficulty_bin: DifficultyBin,
}

/// Cut points of the 3x3 prevalence/difficulty grid.
///
/// Every interval is closed on the left: a value equal to a cut point lands
/// in the bin that starts at that cut point. Difficulty scores are
/// effectiveness values (higher is easier), e.g. baseline R-Precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinThresholds {
    pub prevalence_medium_from: f64,
    pub prevalence_common_from: f64,
    pub difficulty_medium_from: f64,
    pub difficulty_easy_from: f64,
}

impl BinThresholds {
    pub const DEFAULT_PREVALENCE_MEDIUM_FROM: f64 = 0.002;
    pub const DEFAULT_PREVALENCE_COMMON_FROM: f64 = 0.01;

    /// Default prevalence cut points with difficulty cut at the terciles of
    /// `difficulty_scores`.
    pub fn with_difficulty_terciles(difficulty_scores: &[f64]) -> Self {
        let (medium, easy) = terciles(difficulty_scores);
        Self {
            prevalence_medium_from: Self::DEFAULT_PREVALENCE_MEDIUM_FROM,
            prevalence_common_from: Self::DEFAULT_PREVALENCE_COMMON_FROM,
            difficulty_medium_from: medium,
            difficulty_easy_from: easy,
        }
    }

    pub fn prevalence_bin(&self, prevalence: f64) -> PrevalenceBin {
        if prevalence >= self.prevalence_common_from {
            PrevalenceBin::Common
        } else if prevalence >= self.prevalence_medium_from {
            PrevalenceBin::Medium
        } else {
            PrevalenceBin::Rare
        }
    }

    pub fn difficulty_bin(&self, score: f64) -> DifficultyBin {
        if score >= self.difficulty_easy_from {
            DifficultyBin::Easy
        } else if score >= self.difficulty_medium_from {
            DifficultyBin::Medium
        } else {
            DifficultyBin::Hard
        }
    }
}

/// Lower cut points of the middle and top thirds of `scores`: the sorted
/// values at ranks `floor(n/3)` and `floor(2n/3)`. With distinct scores and
/// closed-left bins this splits `n` scores as evenly as possible.
pub fn terciles(scores: &[f64]) -> (f64, f64) {
    if scores.is_empty() {
        return (f64::INFINITY, f64::INFINITY);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    (sorted[n / 3], sorted[(2 * n) / 3])
}

pub fn assign_bins(
    categories: &[String],
    prevalences: &HashMap<String, f64>,
    difficulty_scores: &HashMap<String, f64>,
    thresholds: &BinThresholds,
) -> Result<Vec<CategoryBin>, CorpusError> {
    categories
        .iter()
        .map(|category| {
            let prevalence =
                *prevalences
                    .get(category)
                    .ok_or_else(|| CorpusError::MissingScore {
                        category: category.clone(),
                        what: "prevalence",
                    })?;
            let difficulty =
                *difficulty_scores
                    .get(category)
                    .ok_or_else(|| CorpusError::MissingScore {
                        category: category.clone(),
                        what: "difficulty score",
                    })?;
            Ok(CategoryBin {
                category: category.clone(),
                prevalence_bin: thresholds.prevalence_bin(prevalence),
                difficulty_bin: thresholds.difficulty_bin(difficulty),
            })
        })
        .collect()
}
