//! Topic coherence: NPMI from co-occurrence counts, embedding-based
//! WETC scores, the differentiable coherence term, and correlation
//! statistics against human topic ratings.

use alloc::string::String;
use alloc::vec::Vec;

use crate::corpus::{CooccurrenceStats, Vocabulary};
use crate::embeddings::{topic_word_matrix, EmbeddingMatrix};
use crate::graph::{Axis, Graph, GraphError, NodeId, ReduceOp};
use crate::model::top_words;
use crate::tensor::{matmul, transpose, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub enum CoherenceError {
    BadTopic(String),
    Parse { line: usize, msg: String },
    Empty,
    LengthMismatch { left: usize, right: usize },
    TooFew { got: usize, need: usize },
    ConstantInput,
}

impl core::fmt::Display for CoherenceError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CoherenceError::BadTopic(msg) => write!(f, "bad topic: {msg}"),
            CoherenceError::Parse { line, msg } => write!(f, "line {line}: {msg}"),
            CoherenceError::Empty => write!(f, "no rated topics"),
            CoherenceError::LengthMismatch { left, right } => {
                write!(f, "length mismatch: {left} vs {right}")
            }
            CoherenceError::TooFew { got, need } => {
                write!(f, "need at least {need} values, got {got}")
            }
            CoherenceError::ConstantInput => {
                write!(f, "correlation undefined for constant input")
            }
        }
    }
}

impl core::error::Error for CoherenceError {}

/// Top-N words of one topic: distinct vocabulary indices, at least a pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicWordList {
    word_indices: Vec<usize>,
}

impl TopicWordList {
    pub fn new(word_indices: Vec<usize>) -> Result<Self, CoherenceError> {
        if word_indices.len() < 2 {
            return Err(CoherenceError::BadTopic("fewer than two words".into()));
        }
        let distinct: alloc::collections::BTreeSet<usize> =
            word_indices.iter().copied().collect();
        if distinct.len() != word_indices.len() {
            return Err(CoherenceError::BadTopic("repeated word index".into()));
        }
        Ok(TopicWordList { word_indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.word_indices
    }

    pub fn len(&self) -> usize {
        self.word_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NpmiScore {
    pub value: f64,
    /// Pairs involving a word absent from the reference corpus.
    pub flagged_pairs: usize,
}

/// One pair's normalized PMI from window counts.
///
/// Degenerate limits keep the score total and bounded: a missing unigram
/// contributes 0 (flagged by the caller), a never-co-occurring pair -1,
/// and a pair present in every window 1.
fn npmi_pair_term(n_ij: u64, n_i: u64, n_j: u64, total: u64) -> (f64, bool) {
    if n_i == 0 || n_j == 0 {
        return (0.0, true);
    }
    if n_ij == 0 {
        return (-1.0, false);
    }
    if n_ij == total {
        // Pair in every window forces both unigram probabilities to 1,
        // so the 0/0 limit resolves to the maximal score.
        return (1.0, false);
    }
    let t = total as f64;
    let p_ij = n_ij as f64 / t;
    let p_i = n_i as f64 / t;
    let p_j = n_j as f64 / t;
    (libm::log(p_ij / (p_i * p_j)) / -libm::log(p_ij), false)
}

pub fn npmi_topic_detailed(topic: &TopicWordList, stats: &CooccurrenceStats) -> NpmiScore {
    assert!(stats.total_windows() > 0, "reference corpus has no windows");
    let idx = topic.indices();
    let total = stats.total_windows();
    let mut sum = 0.0;
    let mut flagged_pairs = 0usize;
    let mut pairs = 0usize;
    for a in 0..idx.len() {
        for b in (a + 1)..idx.len() {
            let (i, j) = (idx[a], idx[b]);
            let (term, flagged) = npmi_pair_term(
                stats.pair_windows(i, j),
                stats.unigram_windows(i),
                stats.unigram_windows(j),
                total,
            );
            sum += term;
            if flagged {
                flagged_pairs += 1;
            }
            pairs += 1;
        }
    }
    NpmiScore { value: sum / pairs as f64, flagged_pairs }
}

/// Mean normalized PMI over the topic's unordered word pairs, in [-1, 1].
pub fn npmi_topic(topic: &TopicWordList, stats: &CooccurrenceStats) -> f64 {
    npmi_topic_detailed(topic, stats).value
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Pairwise embedding coherence: mean inner product over unordered row
/// pairs with the ordered-pair divisor N(N-1), so the range is [-1/2, 1/2].
pub fn wetc_pw(rows: &Tensor) -> f64 {
    assert!(rows.is_matrix(), "topic embedding rows must form a matrix");
    let n = rows.shape()[0];
    assert!(n >= 2, "pairwise coherence needs at least two rows");
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            sum += dot(rows.row(i), rows.row(j));
        }
    }
    sum / (n * (n - 1)) as f64
}

/// Closed form of [`wetc_pw`] via the row-Gram matrix. Assumes unit rows:
/// the diagonal is taken to be N, so zero rows would skew it.
pub fn wetc_pw_gram(rows: &Tensor) -> f64 {
    assert!(rows.is_matrix(), "topic embedding rows must form a matrix");
    let n = rows.shape()[0];
    assert!(n >= 2, "pairwise coherence needs at least two rows");
    let gram = matmul(rows, &transpose(rows));
    let total: f64 = gram.data().iter().sum();
    (total - n as f64) / (2 * n * (n - 1)) as f64
}

/// Centroid embedding coherence: mean similarity of rows to their unit
/// centroid. A vanishing centroid (below 1e-12) yields 0, flagged.
pub fn wetc_c(rows: &Tensor) -> (f64, bool) {
    assert!(rows.is_matrix(), "topic embedding rows must form a matrix");
    let (n, d) = (rows.shape()[0], rows.shape()[1]);
    assert!(n >= 1, "centroid coherence needs at least one row");
    let mut centroid = alloc::vec![0.0; d];
    for i in 0..n {
        for (c, &x) in centroid.iter_mut().zip(rows.row(i)) {
            *c += x;
        }
    }
    for c in centroid.iter_mut() {
        *c /= n as f64;
    }
    let norm = libm::sqrt(centroid.iter().map(|&x| x * x).sum());
    if norm <= 1e-12 {
        return (0.0, true);
    }
    let mut sum = 0.0;
    for i in 0..n {
        sum += dot(rows.row(i), &centroid) / norm;
    }
    (sum / n as f64, false)
}

/// Differentiable coherence of each topic column of `w` against fixed
/// embeddings already present in the graph as node `e` ([|V|, D]).
///
/// Unit-normalizes topic columns, forms embedding-space topic vectors,
/// and sums weighted word-to-topic cosine similarities per column.
/// Gradients flow to `w` only; `e` is expected to be a constant input.
pub fn coherence_regularizer_node(
    g: &mut Graph,
    w: NodeId,
    e: NodeId,
) -> Result<NodeId, GraphError> {
    let w_hat = g.normalize_cols(w, 1e-12)?;
    let et = g.transpose(e)?;
    let t = g.matmul(et, w_hat)?;
    let t_tilde = g.normalize_cols(t, 1e-12)?;
    let s = g.matmul(e, t_tilde)?;
    let sw = g.mul(s, w_hat)?;
    g.reduce(sw, ReduceOp::Sum, Axis::Rows)
}

/// As [`coherence_regularizer_node`], binding the embedding matrix as a
/// fresh constant input. Returns the per-topic coherence vector [K].
pub fn coherence_regularizer(
    g: &mut Graph,
    w: NodeId,
    emb: &EmbeddingMatrix,
) -> Result<NodeId, GraphError> {
    let e = g.input(emb.rows().clone());
    coherence_regularizer_node(g, w, e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrelationMethod {
    Pearson,
    Spearman,
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, CoherenceError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(CoherenceError::ConstantInput);
    }
    Ok(sxy / (libm::sqrt(sxx) * libm::sqrt(syy)))
}

/// 1-based ranks with ties sharing their average rank.
fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = alloc::vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j+1 average to (i + j)/2 + 1.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn correlate(x: &[f64], y: &[f64], method: CorrelationMethod) -> Result<f64, CoherenceError> {
    if x.len() != y.len() {
        return Err(CoherenceError::LengthMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < 3 {
        return Err(CoherenceError::TooFew { got: x.len(), need: 3 });
    }
    match method {
        CorrelationMethod::Pearson => pearson(x, y),
        CorrelationMethod::Spearman => pearson(&average_ranks(x), &average_ranks(y)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceReport {
    pub per_topic_npmi: Option<Vec<f64>>,
    pub per_topic_wetc_pw: Vec<f64>,
    pub per_topic_wetc_c: Vec<f64>,
    pub mean_npmi: Option<f64>,
    pub mean_wetc_pw: f64,
    pub mean_wetc_c: f64,
    pub flagged_npmi_pairs: usize,
    pub degenerate_centroids: usize,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Scores every topic column of `w` by its top-`n` words: WETC always,
/// NPMI when reference statistics are given.
pub fn evaluate_coherence(
    w: &Tensor,
    n: usize,
    stats: Option<&CooccurrenceStats>,
    emb: &EmbeddingMatrix,
) -> CoherenceReport {
    assert!(n >= 2, "coherence needs at least two words per topic");
    assert_eq!(w.shape()[0], emb.vocab_len(), "weight rows must match the vocabulary");
    let topics = top_words(w, n);
    let mut per_pw = Vec::with_capacity(topics.len());
    let mut per_c = Vec::with_capacity(topics.len());
    let mut per_npmi = stats.map(|_| Vec::with_capacity(topics.len()));
    let mut flagged_npmi_pairs = 0usize;
    let mut degenerate_centroids = 0usize;
    for topic in &topics {
        let rows = topic_word_matrix(emb, topic.indices());
        per_pw.push(wetc_pw(&rows));
        let (c, degenerate) = wetc_c(&rows);
        per_c.push(c);
        if degenerate {
            degenerate_centroids += 1;
        }
        if let (Some(acc), Some(st)) = (per_npmi.as_mut(), stats) {
            let score = npmi_topic_detailed(topic, st);
            acc.push(score.value);
            flagged_npmi_pairs += score.flagged_pairs;
        }
    }
    CoherenceReport {
        mean_npmi: per_npmi.as_deref().map(mean),
        mean_wetc_pw: mean(&per_pw),
        mean_wetc_c: mean(&per_c),
        per_topic_npmi: per_npmi,
        per_topic_wetc_pw: per_pw,
        per_topic_wetc_c: per_c,
        flagged_npmi_pairs,
        degenerate_centroids,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatedTopic {
    pub words: Vec<String>,
    pub rating: f64,
}

/// Human-rated topics: lines of "word1 word2 ... wordN <TAB> rating".
#[derive(Debug, Clone, PartialEq)]
pub struct RatedTopicSet {
    topics: Vec<RatedTopic>,
}

impl RatedTopicSet {
    pub fn parse(text: &str) -> Result<Self, CoherenceError> {
        let mut topics = Vec::new();
        for (i, l) in text.lines().enumerate() {
            let line = i + 1;
            let t = l.trim();
            if t.is_empty() {
                continue;
            }
            let (words_part, rating_part) = t
                .split_once('\t')
                .ok_or(CoherenceError::Parse { line, msg: "missing tab before rating".into() })?;
            let words: Vec<String> =
                words_part.split_whitespace().map(Into::into).collect();
            if words.len() < 2 {
                return Err(CoherenceError::Parse { line, msg: "fewer than two words".into() });
            }
            let distinct: alloc::collections::BTreeSet<&str> =
                words.iter().map(String::as_str).collect();
            if distinct.len() != words.len() {
                return Err(CoherenceError::Parse { line, msg: "repeated word".into() });
            }
            let rating: f64 = rating_part.trim().parse().map_err(|_| CoherenceError::Parse {
                line,
                msg: alloc::format!("bad rating {rating_part:?}"),
            })?;
            topics.push(RatedTopic { words, rating });
        }
        if topics.is_empty() {
            return Err(CoherenceError::Empty);
        }
        Ok(RatedTopicSet { topics })
    }

    pub fn topics(&self) -> &[RatedTopic] {
        &self.topics
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationRow {
    pub pearson: f64,
    pub spearman: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationStudy {
    pub npmi: CorrelationRow,
    pub wetc_pw: CorrelationRow,
    pub wetc_c: CorrelationRow,
    pub used: usize,
    pub skipped_unresolvable: usize,
    pub skipped_zero_embedding: usize,
}

/// Correlates each coherence metric against human ratings over the rated
/// topics whose words all resolve in the vocabulary. Topics whose words
/// all lack embeddings are skipped and counted separately.
pub fn correlation_study(
    rated: &RatedTopicSet,
    vocab: &Vocabulary,
    stats: &CooccurrenceStats,
    emb: &EmbeddingMatrix,
) -> Result<CorrelationStudy, CoherenceError> {
    let mut ratings = Vec::new();
    let mut npmi_scores = Vec::new();
    let mut pw_scores = Vec::new();
    let mut c_scores = Vec::new();
    let mut skipped_unresolvable = 0usize;
    let mut skipped_zero_embedding = 0usize;
    for topic in rated.topics() {
        let ids: Option<Vec<usize>> = topic.words.iter().map(|w| vocab.id(w)).collect();
        let Some(ids) = ids else {
            skipped_unresolvable += 1;
            continue;
        };
        if ids.iter().all(|&i| !emb.is_present(i)) {
            skipped_zero_embedding += 1;
            continue;
        }
        let list = TopicWordList::new(ids.clone())?;
        let rows = topic_word_matrix(emb, &ids);
        npmi_scores.push(npmi_topic(&list, stats));
        pw_scores.push(wetc_pw(&rows));
        c_scores.push(wetc_c(&rows).0);
        ratings.push(topic.rating);
    }
    if ratings.len() < 3 {
        return Err(CoherenceError::TooFew { got: ratings.len(), need: 3 });
    }
    let row = |scores: &[f64]| -> Result<CorrelationRow, CoherenceError> {
        Ok(CorrelationRow {
            pearson: correlate(scores, &ratings, CorrelationMethod::Pearson)?,
            spearman: correlate(scores, &ratings, CorrelationMethod::Spearman)?,
        })
    };
    Ok(CorrelationStudy {
        npmi: row(&npmi_scores)?,
        wetc_pw: row(&pw_scores)?,
        wetc_c: row(&c_scores)?,
        used: ratings.len(),
        skipped_unresolvable,
        skipped_zero_embedding,
    })
}
