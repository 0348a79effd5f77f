//! Corpora as sparse bag-of-words plus the co-occurrence statistics used
//! for topic coherence.
//!
//! Parsers here work on in-memory text; opening files (and gzip) is the
//! companion crate's job. Document ids, splits and batch order are pure
//! functions of the seeds they are given.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::rng::{derive_seed, domains, DetRng};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum CorpusError {
    Parse { line: usize, msg: String },
    Range { line: usize, msg: String },
    Config(String),
}

impl core::fmt::Display for CorpusError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CorpusError::Parse { line, msg } => write!(f, "line {line}: {msg}"),
            CorpusError::Range { line, msg } => write!(f, "line {line}: {msg}"),
            CorpusError::Config(msg) => write!(f, "{msg}"),
        }
    }
}

impl core::error::Error for CorpusError {}

/// Word list with stable 0-based indices (file order).
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    pub fn from_words<I: IntoIterator<Item = S>, S: Into<String>>(
        words: I,
    ) -> Result<Self, CorpusError> {
        let words: Vec<String> = words.into_iter().map(Into::into).collect();
        let mut index = BTreeMap::new();
        for (i, w) in words.iter().enumerate() {
            if w.is_empty() {
                return Err(CorpusError::Parse { line: i + 1, msg: "empty vocabulary entry".into() });
            }
            if index.insert(w.clone(), i).is_some() {
                return Err(CorpusError::Parse {
                    line: i + 1,
                    msg: format!("duplicate vocabulary word {w:?}"),
                });
            }
        }
        Ok(Vocabulary { words, index })
    }

    /// One word per line; trailing blank lines are ignored, interior blank
    /// lines are errors because they would shift every later word id.
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut lines: Vec<&str> = text.lines().map(str::trim).collect();
        while lines.last() == Some(&"") {
            lines.pop();
        }
        for (i, l) in lines.iter().enumerate() {
            if l.is_empty() {
                return Err(CorpusError::Parse { line: i + 1, msg: "blank vocabulary line".into() });
            }
        }
        Vocabulary::from_words(lines)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, idx: usize) -> &str {
        &self.words[idx]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// FNV-1a over all words; ties checkpoints and caches to the exact
    /// vocabulary they were built against.
    pub fn hash64(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for w in &self.words {
            for &b in w.as_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
            h ^= 0xff;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }
}

/// Sparse document: (word index, count), sorted by word index, counts > 0.
pub type Doc = Vec<(u32, u32)>;

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    vocab: Vocabulary,
    docs: Vec<Doc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LoadReport {
    /// Documents that the header promised but that had no entries.
    pub dropped_docs: usize,
}

impl Corpus {
    pub fn new(vocab: Vocabulary, docs: Vec<Doc>) -> Self {
        for d in &docs {
            debug_assert!(!d.is_empty(), "corpus documents must be non-empty");
        }
        Corpus { vocab, docs }
    }

    /// UCI sparse bag-of-words: three header lines (D, W, NNZ) followed by
    /// NNZ lines of "docID wordID count", all ids 1-based.
    pub fn from_docword(docword: &str, vocab: Vocabulary) -> Result<(Self, LoadReport), CorpusError> {
        let mut lines = docword.lines().enumerate();
        let mut header = |name: &str| -> Result<usize, CorpusError> {
            let (i, l) = lines
                .next()
                .ok_or_else(|| CorpusError::Parse { line: 0, msg: format!("missing {name} header") })?;
            l.trim().parse::<usize>().map_err(|_| CorpusError::Parse {
                line: i + 1,
                msg: format!("bad {name} header {:?}", l.trim()),
            })
        };
        let d = header("D")?;
        let w = header("W")?;
        let nnz = header("NNZ")?;
        if w != vocab.len() {
            return Err(CorpusError::Config(format!(
                "docword declares W={w} but the vocabulary has {} words",
                vocab.len()
            )));
        }

        let mut maps: Vec<BTreeMap<u32, u32>> = Vec::new();
        maps.resize_with(d, BTreeMap::new);
        let mut seen = 0usize;
        for (i, l) in lines {
            let t = l.trim();
            if t.is_empty() {
                continue;
            }
            seen += 1;
            let line = i + 1;
            let mut parts = t.split_whitespace();
            let mut field = |name: &str| -> Result<usize, CorpusError> {
                parts
                    .next()
                    .ok_or_else(|| CorpusError::Parse { line, msg: format!("missing {name}") })?
                    .parse::<usize>()
                    .map_err(|_| CorpusError::Parse { line, msg: format!("bad {name}") })
            };
            let doc_id = field("docID")?;
            let word_id = field("wordID")?;
            let count = field("count")?;
            if parts.next().is_some() {
                return Err(CorpusError::Parse { line, msg: "trailing fields".into() });
            }
            if doc_id == 0 || doc_id > d {
                return Err(CorpusError::Range {
                    line,
                    msg: format!("docID {doc_id} outside 1..={d}"),
                });
            }
            if word_id == 0 || word_id > w {
                return Err(CorpusError::Range {
                    line,
                    msg: format!("wordID {word_id} outside 1..={w}"),
                });
            }
            if count == 0 {
                return Err(CorpusError::Parse { line, msg: "zero count".into() });
            }
            *maps[doc_id - 1].entry((word_id - 1) as u32).or_insert(0) += count as u32;
        }
        if seen != nnz {
            return Err(CorpusError::Parse {
                line: 3,
                msg: format!("header promises {nnz} entries but file has {seen}"),
            });
        }

        let mut docs = Vec::new();
        let mut dropped = 0usize;
        for m in maps {
            if m.is_empty() {
                dropped += 1;
            } else {
                docs.push(m.into_iter().collect());
            }
        }
        Ok((Corpus { vocab, docs }, LoadReport { dropped_docs: dropped }))
    }

    /// Canonical UCI serialization of this corpus (1-based ids, entries
    /// sorted by document then word).
    pub fn to_docword_string(&self) -> String {
        let nnz: usize = self.docs.iter().map(Vec::len).sum();
        let mut out = format!("{}\n{}\n{}\n", self.docs.len(), self.vocab.len(), nnz);
        for (di, doc) in self.docs.iter().enumerate() {
            for &(w, c) in doc {
                out.push_str(&format!("{} {} {}\n", di + 1, w + 1, c));
            }
        }
        out
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn doc(&self, i: usize) -> &Doc {
        &self.docs[i]
    }

    pub fn doc_tokens(&self, i: usize) -> u64 {
        self.docs[i].iter().map(|&(_, c)| c as u64).sum()
    }

    pub fn total_tokens(&self) -> u64 {
        (0..self.docs.len()).map(|i| self.doc_tokens(i)).sum()
    }

    /// Dense [len(ids), |V|] count matrix for the given documents.
    pub fn densify(&self, ids: &[usize]) -> Tensor {
        let v = self.vocab.len();
        let mut data = alloc::vec![0.0; ids.len() * v];
        for (r, &d) in ids.iter().enumerate() {
            for &(w, c) in &self.docs[d] {
                data[r * v + w as usize] = c as f64;
            }
        }
        Tensor::matrix(ids.len(), v, data)
    }

    /// Deterministic shuffle by seed; the last ceil(fraction * D) documents
    /// of the shuffled order become the test side.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Corpus, Corpus), CorpusError> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(CorpusError::Config(format!(
                "test fraction must lie strictly between 0 and 1, got {test_fraction}"
            )));
        }
        let d = self.docs.len();
        let test_count = libm::ceil(test_fraction * d as f64) as usize;
        if test_count == 0 || test_count >= d {
            return Err(CorpusError::Config(format!(
                "split of {d} documents with fraction {test_fraction} leaves an empty side"
            )));
        }
        let mut rng = DetRng::new(seed);
        let order = rng.permutation(d);
        let cut = d - test_count;
        let take = |ids: &[usize]| -> Corpus {
            Corpus {
                vocab: self.vocab.clone(),
                docs: ids.iter().map(|&i| self.docs[i].clone()).collect(),
            }
        };
        Ok((take(&order[..cut]), take(&order[cut..])))
    }
}

/// Yields dense batch matrices over a seeded per-epoch document order.
/// The final batch may be smaller; every document appears exactly once.
pub fn batch_iter(
    corpus: &Corpus,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<BatchIter<'_>, CorpusError> {
    if batch_size == 0 {
        return Err(CorpusError::Config("batch size must be positive".into()));
    }
    let mut rng = DetRng::new(derive_seed(derive_seed(seed, domains::BATCH), epoch));
    let order = rng.permutation(corpus.num_docs());
    Ok(BatchIter { corpus, order, batch_size, pos: 0 })
}

pub struct BatchIter<'a> {
    corpus: &'a Corpus,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl Iterator for BatchIter<'_> {
    type Item = Tensor;

    fn next(&mut self) -> Option<Tensor> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let t = self.corpus.densify(&self.order[self.pos..end]);
        self.pos = end;
        Some(t)
    }
}

/// Lowercases and splits on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(ToString::to_string)
        .collect()
}

/// Window-membership co-occurrence counts over a reference corpus.
///
/// Probabilities are window fractions: a word "occurs" in a window if it
/// appears at least once, and a pair co-occurs if both words appear.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceStats {
    window_size: usize,
    vocab_len: usize,
    total_windows: u64,
    unigram: Vec<u64>,
    pairs: BTreeMap<(u32, u32), u64>,
}

impl CooccurrenceStats {
    pub fn empty(window_size: usize, vocab_len: usize) -> Result<Self, CorpusError> {
        if window_size < 2 {
            return Err(CorpusError::Config(format!(
                "window size must be at least 2, got {window_size}"
            )));
        }
        Ok(CooccurrenceStats {
            window_size,
            vocab_len,
            total_windows: 0,
            unigram: alloc::vec![0; vocab_len],
            pairs: BTreeMap::new(),
        })
    }

    /// Counts into this accumulator; documents shorter than the window
    /// form a single window, and out-of-vocabulary tokens occupy positions
    /// without being counted.
    pub fn count_docs<S: AsRef<str>>(&mut self, docs: &[Vec<S>], vocab: &Vocabulary) {
        debug_assert_eq!(vocab.len(), self.vocab_len);
        for doc in docs {
            let ids: Vec<Option<u32>> =
                doc.iter().map(|t| vocab.id(t.as_ref()).map(|i| i as u32)).collect();
            let n = ids.len();
            if n == 0 {
                continue;
            }
            let w = self.window_size;
            let starts = if n <= w { 1 } else { n - w + 1 };
            for s in 0..starts {
                let end = (s + w).min(n);
                let members: BTreeSet<u32> = ids[s..end].iter().flatten().copied().collect();
                self.total_windows += 1;
                for &i in &members {
                    self.unigram[i as usize] += 1;
                }
                let sorted: Vec<u32> = members.into_iter().collect();
                for a in 0..sorted.len() {
                    for b in a + 1..sorted.len() {
                        *self.pairs.entry((sorted[a], sorted[b])).or_insert(0) += 1;
                    }
                }
            }
        }
    }

    /// Per-shard counts merge by plain summation and must equal
    /// single-threaded counting exactly.
    pub fn merge(&mut self, other: &CooccurrenceStats) -> Result<(), CorpusError> {
        if self.window_size != other.window_size || self.vocab_len != other.vocab_len {
            return Err(CorpusError::Config(format!(
                "cannot merge stats with window {} over {} words into window {} over {} words",
                other.window_size, other.vocab_len, self.window_size, self.vocab_len
            )));
        }
        self.total_windows += other.total_windows;
        for (a, b) in self.unigram.iter_mut().zip(&other.unigram) {
            *a += b;
        }
        for (&k, &v) in &other.pairs {
            *self.pairs.entry(k).or_insert(0) += v;
        }
        Ok(())
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab_len
    }

    pub fn total_windows(&self) -> u64 {
        self.total_windows
    }

    pub fn unigram_windows(&self, i: usize) -> u64 {
        self.unigram[i]
    }

    /// Symmetric: order of the pair does not matter.
    pub fn pair_windows(&self, i: usize, j: usize) -> u64 {
        let key = if i <= j { (i as u32, j as u32) } else { (j as u32, i as u32) };
        self.pairs.get(&key).copied().unwrap_or(0)
    }

    pub fn unigrams(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.unigram.iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, &c)| (i, c))
    }

    pub fn pairs(&self) -> impl Iterator<Item = ((u32, u32), u64)> + '_ {
        self.pairs.iter().map(|(&k, &v)| (k, v))
    }

    /// Restores a snapshot; used by the cache loader.
    pub fn from_parts(
        window_size: usize,
        vocab_len: usize,
        total_windows: u64,
        unigrams: impl IntoIterator<Item = (usize, u64)>,
        pairs: impl IntoIterator<Item = ((u32, u32), u64)>,
    ) -> Result<Self, CorpusError> {
        let mut s = CooccurrenceStats::empty(window_size, vocab_len)?;
        s.total_windows = total_windows;
        for (i, c) in unigrams {
            if i >= vocab_len {
                return Err(CorpusError::Config(format!("unigram index {i} out of range")));
            }
            s.unigram[i] = c;
        }
        for ((a, b), c) in pairs {
            if a >= b || b as usize >= vocab_len {
                return Err(CorpusError::Config(format!("bad pair ({a}, {b})")));
            }
            s.pairs.insert((a, b), c);
        }
        Ok(s)
    }
}

pub fn count_cooccurrence<S: AsRef<str>>(
    docs: &[Vec<S>],
    vocab: &Vocabulary,
    window_size: usize,
) -> Result<CooccurrenceStats, CorpusError> {
    let mut stats = CooccurrenceStats::empty(window_size, vocab.len())?;
    stats.count_docs(docs, vocab);
    Ok(stats)
}
