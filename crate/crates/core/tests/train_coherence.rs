//! The coherence-weighted objective must move top words toward the
//! embedding clusters, measured against an unweighted baseline trained
//! identically. The corpus carries enough background noise that the
//! likelihood alone leaves topics muddy.

use ntm_core::corpus::{Corpus, Vocabulary};
use ntm_core::embeddings::EmbeddingMatrix;
use ntm_core::model::{ModelConfig, ModelKind};
use ntm_core::rng::DetRng;
use ntm_core::tensor::Tensor;
use ntm_core::train::{train, TrainOptions, TrainReport};

const CLUSTERS: usize = 3;
const WORDS_PER_CLUSTER: usize = 10;
const DIM: usize = 8;

/// Word embeddings: each cluster sits near its own orthogonal axis.
fn clustered_embeddings(rng: &mut DetRng) -> EmbeddingMatrix {
    let v = CLUSTERS * WORDS_PER_CLUSTER;
    let mut data = vec![0.0; v * DIM];
    for c in 0..CLUSTERS {
        for w in 0..WORDS_PER_CLUSTER {
            let row = c * WORDS_PER_CLUSTER + w;
            for d in 0..DIM {
                let center = if d == c { 1.0 } else { 0.0 };
                data[row * DIM + d] = center + 0.15 * rng.normal();
            }
        }
    }
    EmbeddingMatrix::from_raw(Tensor::matrix(v, DIM, data))
}

/// Each document draws 8 tokens from one cluster and 10 from the whole
/// vocabulary, so cluster structure is present but far from dominant.
fn noisy_planted_corpus(rng: &mut DetRng) -> Corpus {
    let v = CLUSTERS * WORDS_PER_CLUSTER;
    let words: Vec<String> = (0..v).map(|i| format!("w{i}")).collect();
    let vocab = Vocabulary::from_words(words).unwrap();
    let mut docs = Vec::new();
    for d in 0..90 {
        let c = d % CLUSTERS;
        let mut counts = std::collections::BTreeMap::<u32, u32>::new();
        for _ in 0..8 {
            let w = c * WORDS_PER_CLUSTER + (rng.next_u64() % WORDS_PER_CLUSTER as u64) as usize;
            *counts.entry(w as u32).or_insert(0) += 1;
        }
        for _ in 0..10 {
            let w = (rng.next_u64() % v as u64) as u32;
            *counts.entry(w).or_insert(0) += 1;
        }
        docs.push(counts.into_iter().collect());
    }
    Corpus::new(vocab, docs)
}

fn fit(
    corpus: &Corpus,
    emb: &EmbeddingMatrix,
    kind: ModelKind,
    lambda: f64,
    seed: u64,
) -> TrainReport {
    let opts = TrainOptions { epochs: 40, batch_size: 16, top_n: 5, lr: 1.0, ..TrainOptions::default() };
    let mut cfg = ModelConfig::for_kind(kind, corpus.vocab().len(), CLUSTERS, seed);
    cfg.mc_eval = 1;
    cfg.lambda = lambda;
    if lambda > 0.0 {
        cfg.embed_dim = Some(DIM);
    }
    train(&cfg, &opts, corpus, corpus, Some(emb), None, &mut || 0.0).unwrap()
}

#[test]
fn test_coherence_weight_raises_embedding_coherence() {
    let mut rng = DetRng::new(0x7031c5);
    let emb = clustered_embeddings(&mut rng);
    let corpus = noisy_planted_corpus(&mut rng);

    let base = fit(&corpus, &emb, ModelKind::Ntm, 0.0, 99);
    let reg = fit(&corpus, &emb, ModelKind::NtmR, 50.0, 99);

    let base_last = base.trace.last().unwrap();
    let reg_last = reg.trace.last().unwrap();
    let base_c = base_last.wetc_c.unwrap();
    let reg_c = reg_last.wetc_c.unwrap();
    assert!(
        reg_c > base_c + 0.05,
        "coherence weight should raise centroid coherence clearly: baseline {base_c}, weighted {reg_c}"
    );
    // The weighted model must still fit the data, not just the embeddings.
    assert!(
        reg_last.test_perplexity < base_last.test_perplexity * 1.05,
        "fit should stay comparable: baseline ppl {}, weighted ppl {}",
        base_last.test_perplexity,
        reg_last.test_perplexity
    );
}
