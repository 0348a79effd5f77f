//! Independent oracles shared by integration tests: window enumeration
//! done with set operations over materialized windows, and pair scoring
//! straight from those sets. Deliberately structured nothing like the
//! streaming counters in the library.

#![allow(dead_code)]

use std::collections::BTreeSet;

use ntm_core::corpus::Vocabulary;
use ntm_core::rng::DetRng;

/// Materializes every window of every document as a set of word ids.
pub fn enumerate_windows(docs: &[Vec<Option<usize>>], window: usize) -> Vec<BTreeSet<usize>> {
    assert!(window >= 2);
    let mut out = Vec::new();
    for doc in docs {
        let n = doc.len();
        if n == 0 {
            continue;
        }
        let starts = if n <= window { 1 } else { n - window + 1 };
        for s in 0..starts {
            let end = (s + window).min(n);
            out.push(doc[s..end].iter().flatten().copied().collect());
        }
    }
    out
}

pub fn windows_with(windows: &[BTreeSet<usize>], w: usize) -> u64 {
    windows.iter().filter(|set| set.contains(&w)).count() as u64
}

pub fn windows_with_both(windows: &[BTreeSet<usize>], a: usize, b: usize) -> u64 {
    windows.iter().filter(|set| set.contains(&a) && set.contains(&b)).count() as u64
}

/// Normalized PMI of one word pair from raw window counts, including the
/// degenerate-case conventions (never co-occurring -> -1, unseen word -> 0,
/// saturated pair -> 1).
pub fn npmi_pair_term(n_ij: u64, n_i: u64, n_j: u64, total: u64) -> f64 {
    if n_i == 0 || n_j == 0 {
        return 0.0;
    }
    if n_ij == 0 {
        return -1.0;
    }
    if n_ij == total {
        return 1.0;
    }
    let p_ij = n_ij as f64 / total as f64;
    let p_i = n_i as f64 / total as f64;
    let p_j = n_j as f64 / total as f64;
    (p_ij / (p_i * p_j)).ln() / -(p_ij.ln())
}

/// Mean pair score of a topic, straight from enumerated windows.
pub fn npmi_oracle(topic: &[usize], windows: &[BTreeSet<usize>]) -> f64 {
    let total = windows.len() as u64;
    let n = topic.len();
    assert!(n >= 2);
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for j in 1..n {
        for i in 0..j {
            let n_i = windows_with(windows, topic[i]);
            let n_j = windows_with(windows, topic[j]);
            let n_ij = windows_with_both(windows, topic[i], topic[j]);
            sum += npmi_pair_term(n_ij, n_i, n_j, total);
            pairs += 1;
        }
    }
    sum / pairs as f64
}

/// Random toy corpus: token lists over a small vocabulary with occasional
/// out-of-vocabulary tokens mixed in.
pub fn random_token_corpus(r: &mut DetRng, vocab: &Vocabulary) -> Vec<Vec<String>> {
    let n_docs = 3 + (r.next_u64() % 8) as usize;
    (0..n_docs)
        .map(|_| {
            let len = 1 + (r.next_u64() % 50) as usize;
            (0..len)
                .map(|_| {
                    if r.next_f64() < 0.1 {
                        "zzzoov".to_string()
                    } else {
                        vocab.word((r.next_u64() % vocab.len() as u64) as usize).to_string()
                    }
                })
                .collect()
        })
        .collect()
}

pub fn to_id_docs(docs: &[Vec<String>], vocab: &Vocabulary) -> Vec<Vec<Option<usize>>> {
    docs.iter()
        .map(|d| d.iter().map(|t| vocab.id(t)).collect())
        .collect()
}
