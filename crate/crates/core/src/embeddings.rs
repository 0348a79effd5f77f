//! Pretrained word embeddings aligned to a vocabulary.
//!
//! The text format is one word per line followed by its vector components.
//! Rows are L2-normalized on load; vocabulary words missing from the file
//! become all-zero rows tracked by an OOV mask, which later guards keep
//! inert in every similarity computation.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::corpus::Vocabulary;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddingError {
    Parse { line: usize, msg: String },
    DimMismatch { line: usize, got: usize, want: usize },
    NoOverlap,
}

impl core::fmt::Display for EmbeddingError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            EmbeddingError::Parse { line, msg } => write!(f, "line {line}: {msg}"),
            EmbeddingError::DimMismatch { line, got, want } => {
                write!(f, "line {line}: vector has {got} components, expected {want}")
            }
            EmbeddingError::NoOverlap => {
                write!(f, "no vocabulary word appears in the embedding file")
            }
        }
    }
}

impl core::error::Error for EmbeddingError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EmbeddingLoadReport {
    /// Vocabulary words with no usable embedding line.
    pub oov: usize,
    /// Relevant file lines that overwrote an earlier line for the same word.
    pub duplicates: usize,
    /// Found rows whose vector was all zeros (kept as zeros).
    pub zero_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    /// [|V|, dim]; each row unit-norm or all zeros.
    rows: Tensor,
    present: Vec<bool>,
}

impl EmbeddingMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_len(&self) -> usize {
        self.present.len()
    }

    pub fn rows(&self) -> &Tensor {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.rows.row(i)
    }

    pub fn is_present(&self, i: usize) -> bool {
        self.present[i]
    }

    pub fn oov_count(&self) -> usize {
        self.present.iter().filter(|&&p| !p).count()
    }

    /// Builds directly from a row matrix, normalizing each row and deriving
    /// the presence mask from non-zero rows. For synthetic embeddings.
    pub fn from_raw(rows: Tensor) -> Self {
        assert!(rows.is_matrix(), "embeddings must form a matrix");
        let (v, dim) = (rows.shape()[0], rows.shape()[1]);
        let mut data = rows.data().to_vec();
        let mut present = Vec::with_capacity(v);
        for r in 0..v {
            let row = &mut data[r * dim..(r + 1) * dim];
            let norm = libm::sqrt(row.iter().map(|&x| x * x).sum());
            if norm >= 1e-12 {
                for x in row.iter_mut() {
                    *x /= norm;
                }
                present.push(true);
            } else {
                present.push(false);
            }
        }
        EmbeddingMatrix { dim, rows: Tensor::matrix(v, dim, data), present }
    }
}

/// Parses an embedding text file and aligns it to the vocabulary.
///
/// Matching is by exact string, with an optional lowercase fallback pass
/// for vocabulary words the exact pass missed. When a word occurs on
/// several lines the last one wins and the duplication is reported.
pub fn parse_embeddings(
    text: &str,
    vocab: &Vocabulary,
    lowercase_fallback: bool,
) -> Result<(EmbeddingMatrix, EmbeddingLoadReport), EmbeddingError> {
    let exact_needed: BTreeSet<&str> = vocab.words().iter().map(String::as_str).collect();
    let lower_needed: BTreeSet<String> =
        vocab.words().iter().map(|w| w.to_lowercase()).collect();

    let mut dim: Option<usize> = None;
    let mut exact_hits: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut lower_hits: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut duplicates = 0usize;

    for (i, l) in text.lines().enumerate() {
        let line = i + 1;
        let t = l.trim();
        if t.is_empty() {
            continue;
        }
        let mut parts = t.split_whitespace();
        let word = parts.next().expect("non-empty line has a first field");
        let mut vec_vals = Vec::new();
        for p in parts {
            let v: f64 = p.parse().map_err(|_| EmbeddingError::Parse {
                line,
                msg: format!("non-numeric component {p:?}"),
            })?;
            vec_vals.push(v);
        }
        if vec_vals.is_empty() {
            return Err(EmbeddingError::Parse { line, msg: "no vector components".into() });
        }
        match dim {
            None => dim = Some(vec_vals.len()),
            Some(d) if d != vec_vals.len() => {
                return Err(EmbeddingError::DimMismatch { line, got: vec_vals.len(), want: d });
            }
            _ => {}
        }

        if exact_needed.contains(word) {
            if exact_hits.insert(word.to_string(), vec_vals.clone()).is_some() {
                duplicates += 1;
            }
        }
        if lowercase_fallback {
            let lower = word.to_lowercase();
            if lower_needed.contains(&lower) {
                if lower_hits.insert(lower, vec_vals).is_some() {
                    duplicates += 1;
                }
            }
        }
    }

    let dim = dim.ok_or(EmbeddingError::NoOverlap)?;
    let v = vocab.len();
    let mut data = alloc::vec![0.0; v * dim];
    let mut present = alloc::vec![false; v];
    let mut report = EmbeddingLoadReport { duplicates, ..Default::default() };
    for (i, w) in vocab.words().iter().enumerate() {
        let hit = exact_hits
            .get(w.as_str())
            .or_else(|| {
                if lowercase_fallback {
                    lower_hits.get(&w.to_lowercase())
                } else {
                    None
                }
            });
        match hit {
            Some(vals) => {
                let norm = libm::sqrt(vals.iter().map(|&x| x * x).sum());
                if norm >= 1e-12 {
                    for (j, &x) in vals.iter().enumerate() {
                        data[i * dim + j] = x / norm;
                    }
                } else {
                    report.zero_rows += 1;
                }
                present[i] = true;
            }
            None => {
                report.oov += 1;
            }
        }
    }
    if present.iter().all(|&p| !p) {
        return Err(EmbeddingError::NoOverlap);
    }
    Ok((EmbeddingMatrix { dim, rows: Tensor::matrix(v, dim, data), present }, report))
}

/// Gathers the embedding rows of the given words into an [N, dim] matrix.
pub fn topic_word_matrix(emb: &EmbeddingMatrix, word_indices: &[usize]) -> Tensor {
    let dim = emb.dim();
    let mut data = Vec::with_capacity(word_indices.len() * dim);
    for &i in word_indices {
        data.extend_from_slice(emb.row(i));
    }
    Tensor::matrix(word_indices.len(), dim, data)
}
