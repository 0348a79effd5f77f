//! Neural variational topic models: parameters, graph construction for
//! the training objective, perplexity evaluation, and topic extraction.
//!
//! A document batch x ([batch, |V|] counts) is encoded by a two-layer
//! sigmoid MLP into a diagonal Gaussian (mu, log sigma); a reparameterized
//! sample h = mu + sigma*eps passes through the latent activation into the
//! softmax decoder y = softmax(W z + b). The objective is the Monte Carlo
//! ELBO, optionally plus a weighted coherence term on W.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::coherence::{coherence_regularizer_node, TopicWordList};
use crate::corpus::Corpus;
use crate::embeddings::EmbeddingMatrix;
use crate::graph::{Activation, Axis, Graph, GraphError, NodeId, ReduceOp};
use crate::rng::{derive_seed, domains, DetRng};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    Config(String),
    Graph(GraphError),
}

impl core::fmt::Display for ModelError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ModelError::Config(msg) => write!(f, "config: {msg}"),
            ModelError::Graph(e) => write!(f, "graph: {e}"),
        }
    }
}

impl core::error::Error for ModelError {}

impl From<GraphError> for ModelError {
    fn from(e: GraphError) -> Self {
        ModelError::Graph(e)
    }
}

/// How the Gaussian sample h becomes the topic proportion vector z.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentActivation {
    Relu,
    Identity,
    Softmax,
}

/// The model family: activation and decoder structure bundled under the
/// names used on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Ntm,
    Nvdm,
    Gsm,
    NtmR,
    NtmF,
    NtmFr,
}

impl ModelKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ntm" => Some(ModelKind::Ntm),
            "nvdm" => Some(ModelKind::Nvdm),
            "gsm" => Some(ModelKind::Gsm),
            "ntm-r" => Some(ModelKind::NtmR),
            "ntm-f" => Some(ModelKind::NtmF),
            "ntm-fr" => Some(ModelKind::NtmFr),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ntm => "ntm",
            ModelKind::Nvdm => "nvdm",
            ModelKind::Gsm => "gsm",
            ModelKind::NtmR => "ntm-r",
            ModelKind::NtmF => "ntm-f",
            ModelKind::NtmFr => "ntm-fr",
        }
    }

    pub fn latent_activation(self) -> LatentActivation {
        match self {
            ModelKind::Nvdm => LatentActivation::Identity,
            ModelKind::Gsm => LatentActivation::Softmax,
            _ => LatentActivation::Relu,
        }
    }

    pub fn factorized(self) -> bool {
        matches!(self, ModelKind::NtmF | ModelKind::NtmFr)
    }

    pub fn default_lambda(self) -> f64 {
        match self {
            ModelKind::NtmR | ModelKind::NtmFr => 50.0,
            _ => 0.0,
        }
    }

    pub fn needs_embeddings(self) -> bool {
        self.factorized() || self.default_lambda() > 0.0
    }
}

impl core::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub topics: usize,
    pub latent: LatentActivation,
    pub factorized: bool,
    pub lambda: f64,
    /// Embedding dimensionality; required by the factorized decoder and
    /// the coherence term.
    pub embed_dim: Option<usize>,
    pub mc_train: usize,
    pub mc_eval: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn for_kind(kind: ModelKind, vocab_size: usize, topics: usize, seed: u64) -> Self {
        ModelConfig {
            vocab_size,
            topics,
            latent: kind.latent_activation(),
            factorized: kind.factorized(),
            lambda: kind.default_lambda(),
            embed_dim: None,
            mc_train: 1,
            mc_eval: 8,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.vocab_size < 2 {
            return Err(ModelError::Config("vocabulary needs at least two words".into()));
        }
        if self.topics == 0 {
            return Err(ModelError::Config("topic count must be positive".into()));
        }
        if self.mc_train == 0 || self.mc_eval == 0 {
            return Err(ModelError::Config("Monte Carlo sample counts must be positive".into()));
        }
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(ModelError::Config(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if self.factorized && self.embed_dim.is_none() {
            return Err(ModelError::Config("factorized decoder requires embeddings".into()));
        }
        if self.lambda > 0.0 && self.embed_dim.is_none() {
            return Err(ModelError::Config("coherence term requires embeddings".into()));
        }
        Ok(())
    }
}

/// Decoder weights: a free topic-word matrix, or topic factors combined
/// with fixed embeddings. The factorized form never stores W.
#[derive(Debug, Clone, PartialEq)]
pub enum DecoderParams {
    /// w: [|V|, K]
    Full { w: Tensor },
    /// t_hat: [D, K]; the decoder matrix is E (.) t_hat.
    Factorized { t_hat: Tensor },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// [|V|, 3K]
    pub enc_w1: Tensor,
    /// [3K]
    pub enc_b1: Tensor,
    /// [3K, 2K]
    pub enc_w2: Tensor,
    /// [2K]
    pub enc_b2: Tensor,
    /// [2K, K]
    pub mu_w: Tensor,
    /// [K]
    pub mu_b: Tensor,
    /// [2K, K]
    pub logsig_w: Tensor,
    /// [K]
    pub logsig_b: Tensor,
    pub dec: DecoderParams,
    /// [|V|]
    pub dec_b: Tensor,
}

fn glorot(rng: &mut DetRng, rows: usize, cols: usize) -> Tensor {
    let limit = libm::sqrt(6.0 / (rows + cols) as f64);
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.uniform(-limit, limit)).collect())
}

impl ModelParams {
    /// Fresh parameters: fan-based uniform weights, zero biases, small
    /// normal topic factors. Draw order is the named-parameter order, so
    /// initialization is a pure function of the seed.
    pub fn init(config: &ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let (v, k) = (config.vocab_size, config.topics);
        let mut rng = DetRng::new(derive_seed(config.seed, domains::INIT));
        let enc_w1 = glorot(&mut rng, v, 3 * k);
        let enc_w2 = glorot(&mut rng, 3 * k, 2 * k);
        let mu_w = glorot(&mut rng, 2 * k, k);
        let logsig_w = glorot(&mut rng, 2 * k, k);
        let dec = if config.factorized {
            let d = config.embed_dim.expect("validated");
            DecoderParams::Factorized {
                t_hat: Tensor::matrix(d, k, (0..d * k).map(|_| rng.normal() * 0.02).collect()),
            }
        } else {
            DecoderParams::Full { w: glorot(&mut rng, v, k) }
        };
        Ok(ModelParams {
            enc_w1,
            enc_b1: Tensor::zeros(&[3 * k]),
            enc_w2,
            enc_b2: Tensor::zeros(&[2 * k]),
            mu_w,
            mu_b: Tensor::zeros(&[k]),
            logsig_w,
            logsig_b: Tensor::zeros(&[k]),
            dec,
            dec_b: Tensor::zeros(&[v]),
        })
    }

    /// All-zero parameters; the decoder then emits the uniform
    /// distribution and the posterior collapses to the prior.
    pub fn zeroed(config: &ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let (v, k) = (config.vocab_size, config.topics);
        let dec = if config.factorized {
            let d = config.embed_dim.expect("validated");
            DecoderParams::Factorized { t_hat: Tensor::zeros(&[d, k]) }
        } else {
            DecoderParams::Full { w: Tensor::zeros(&[v, k]) }
        };
        Ok(ModelParams {
            enc_w1: Tensor::zeros(&[v, 3 * k]),
            enc_b1: Tensor::zeros(&[3 * k]),
            enc_w2: Tensor::zeros(&[3 * k, 2 * k]),
            enc_b2: Tensor::zeros(&[2 * k]),
            mu_w: Tensor::zeros(&[2 * k, k]),
            mu_b: Tensor::zeros(&[k]),
            logsig_w: Tensor::zeros(&[2 * k, k]),
            logsig_b: Tensor::zeros(&[k]),
            dec,
            dec_b: Tensor::zeros(&[v]),
        })
    }

    pub fn is_factorized(&self) -> bool {
        matches!(self.dec, DecoderParams::Factorized { .. })
    }

    /// Parameters in their fixed update and serialization order.
    pub fn named(&self) -> Vec<(&'static str, &Tensor)> {
        let (dec_name, dec_tensor) = match &self.dec {
            DecoderParams::Full { w } => ("dec_w", w),
            DecoderParams::Factorized { t_hat } => ("dec_t_hat", t_hat),
        };
        alloc::vec![
            ("enc_w1", &self.enc_w1),
            ("enc_b1", &self.enc_b1),
            ("enc_w2", &self.enc_w2),
            ("enc_b2", &self.enc_b2),
            ("mu_w", &self.mu_w),
            ("mu_b", &self.mu_b),
            ("logsig_w", &self.logsig_w),
            ("logsig_b", &self.logsig_b),
            (dec_name, dec_tensor),
            ("dec_b", &self.dec_b),
        ]
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        let (dec_name, dec_tensor) = match &mut self.dec {
            DecoderParams::Full { w } => ("dec_w", w),
            DecoderParams::Factorized { t_hat } => ("dec_t_hat", t_hat),
        };
        alloc::vec![
            ("enc_w1", &mut self.enc_w1),
            ("enc_b1", &mut self.enc_b1),
            ("enc_w2", &mut self.enc_w2),
            ("enc_b2", &mut self.enc_b2),
            ("mu_w", &mut self.mu_w),
            ("mu_b", &mut self.mu_b),
            ("logsig_w", &mut self.logsig_w),
            ("logsig_b", &mut self.logsig_b),
            (dec_name, dec_tensor),
            ("dec_b", &mut self.dec_b),
        ]
    }

    /// Scalar count of decoder parameters: D*K + |V| factorized,
    /// |V|*K + |V| otherwise.
    pub fn decoder_param_count(&self) -> usize {
        let m = match &self.dec {
            DecoderParams::Full { w } => w.numel(),
            DecoderParams::Factorized { t_hat } => t_hat.numel(),
        };
        m + self.dec_b.numel()
    }

    /// The materialized topic-word matrix [|V|, K]: stored directly, or
    /// derived as E (.) t_hat so it can never drift from the factors.
    pub fn decoder_matrix(&self, emb: Option<&EmbeddingMatrix>) -> Result<Tensor, ModelError> {
        match &self.dec {
            DecoderParams::Full { w } => Ok(w.clone()),
            DecoderParams::Factorized { t_hat } => {
                let e = emb.ok_or_else(|| {
                    ModelError::Config("factorized decoder requires embeddings".into())
                })?;
                Ok(crate::tensor::matmul(e.rows(), t_hat))
            }
        }
    }
}

/// Parameter nodes bound into one graph, with the decoder matrix already
/// materialized (for factorized models, as a matmul of the fixed
/// embedding input with the topic factors).
pub struct BoundParams {
    pub enc_w1: NodeId,
    pub enc_b1: NodeId,
    pub enc_w2: NodeId,
    pub enc_b2: NodeId,
    pub mu_w: NodeId,
    pub mu_b: NodeId,
    pub logsig_w: NodeId,
    pub logsig_b: NodeId,
    /// Materialized [|V|, K] decoder matrix node.
    pub dec_w: NodeId,
    pub dec_b: NodeId,
    pub e: Option<NodeId>,
    /// The ten parameter leaves in named order (gradient extraction).
    pub param_ids: Vec<NodeId>,
}

impl BoundParams {
    /// Wires pre-created parameter leaves (named order) into the model
    /// structure. `ids[8]` is the decoder matrix itself, or the topic
    /// factors when `factorized`.
    pub fn from_ids(
        g: &mut Graph,
        ids: &[NodeId],
        factorized: bool,
        e: Option<NodeId>,
    ) -> Result<Self, ModelError> {
        assert_eq!(ids.len(), 10, "expected ten parameter leaves");
        let dec_w = if factorized {
            let e = e.ok_or_else(|| {
                ModelError::Config("factorized decoder requires embeddings".into())
            })?;
            g.matmul(e, ids[8])?
        } else {
            ids[8]
        };
        Ok(BoundParams {
            enc_w1: ids[0],
            enc_b1: ids[1],
            enc_w2: ids[2],
            enc_b2: ids[3],
            mu_w: ids[4],
            mu_b: ids[5],
            logsig_w: ids[6],
            logsig_b: ids[7],
            dec_w,
            dec_b: ids[9],
            e,
            param_ids: ids.to_vec(),
        })
    }
}

/// Binds all parameters (and the embedding matrix, when given) into `g`.
pub fn bind_params(
    g: &mut Graph,
    params: &ModelParams,
    emb: Option<&EmbeddingMatrix>,
) -> Result<BoundParams, ModelError> {
    let e = emb.map(|m| g.input(m.rows().clone()));
    let ids: Vec<NodeId> = params.named().iter().map(|(_, t)| g.param((*t).clone())).collect();
    BoundParams::from_ids(g, &ids, params.is_factorized(), e)
}

/// Two sigmoid layers then two linear heads: the variational posterior's
/// mean and log standard deviation, each [batch, K].
pub fn encode(g: &mut Graph, bp: &BoundParams, x: NodeId) -> Result<(NodeId, NodeId), GraphError> {
    let a1 = g.matmul(x, bp.enc_w1)?;
    let a1 = g.add_bias(a1, bp.enc_b1)?;
    let h1 = g.activation(a1, Activation::Sigmoid)?;
    let a2 = g.matmul(h1, bp.enc_w2)?;
    let a2 = g.add_bias(a2, bp.enc_b2)?;
    let h2 = g.activation(a2, Activation::Sigmoid)?;
    let mu = g.matmul(h2, bp.mu_w)?;
    let mu = g.add_bias(mu, bp.mu_b)?;
    let logsig = g.matmul(h2, bp.logsig_w)?;
    let logsig = g.add_bias(logsig, bp.logsig_b)?;
    Ok((mu, logsig))
}

/// h = mu + exp(log sigma) * eps, then the latent activation. With eps
/// identically zero this is the exact mean pass (h == mu bitwise).
pub fn sample_latent(
    g: &mut Graph,
    mu: NodeId,
    logsig: NodeId,
    eps: NodeId,
    act: LatentActivation,
) -> Result<NodeId, GraphError> {
    let sigma = g.activation(logsig, Activation::Exp)?;
    let noise = g.mul(sigma, eps)?;
    let h = g.add(mu, noise)?;
    match act {
        LatentActivation::Relu => g.activation(h, Activation::Relu),
        LatentActivation::Identity => Ok(h),
        LatentActivation::Softmax => g.activation(h, Activation::SoftmaxRows),
    }
}

/// y = softmax(z W^T + b), rows summing to 1.
pub fn decode(g: &mut Graph, bp: &BoundParams, z: NodeId) -> Result<NodeId, GraphError> {
    let wt = g.transpose(bp.dec_w)?;
    let logits = g.matmul(z, wt)?;
    let logits = g.add_bias(logits, bp.dec_b)?;
    g.activation(logits, Activation::SoftmaxRows)
}

/// Per-document sum of count-weighted log predicted probabilities,
/// [batch]. The log is floored at 1e-10; hits are counted on the graph.
pub fn log_likelihood(g: &mut Graph, x: NodeId, y: NodeId) -> Result<NodeId, GraphError> {
    let logy = g.log_clamped(y, 1e-10);
    let xlogy = g.mul(x, logy)?;
    g.reduce(xlogy, ReduceOp::Sum, Axis::Cols)
}

/// Analytic KL of the diagonal posterior from the standard normal,
/// per document: -1/2 sum_k (1 + 2 log sigma - mu^2 - sigma^2).
pub fn kl_divergence(g: &mut Graph, mu: NodeId, logsig: NodeId) -> Result<NodeId, GraphError> {
    let two_logsig = g.scale(logsig, 2.0);
    let sig2 = g.activation(two_logsig, Activation::Exp)?;
    let mu2 = g.mul(mu, mu)?;
    let t = g.add_scalar(two_logsig, 1.0);
    let t = g.sub(t, mu2)?;
    let t = g.sub(t, sig2)?;
    let row = g.reduce(t, ReduceOp::Sum, Axis::Cols)?;
    Ok(g.scale(row, -0.5))
}

pub struct ElboNodes {
    /// Batch-mean ELBO, scalar.
    pub elbo: NodeId,
    /// Per-document ELBO, [batch].
    pub per_doc: NodeId,
    /// Batch-mean Monte Carlo likelihood, scalar (diagnostic).
    pub mean_ll: NodeId,
    /// Batch-mean KL, scalar (diagnostic).
    pub mean_kl: NodeId,
}

/// Monte Carlo ELBO over the supplied noise draws: mean_l(ll) - kl,
/// averaged over the batch.
pub fn elbo(
    g: &mut Graph,
    bp: &BoundParams,
    x: NodeId,
    eps: &[NodeId],
    act: LatentActivation,
) -> Result<ElboNodes, GraphError> {
    assert!(!eps.is_empty(), "the ELBO needs at least one noise draw");
    let (mu, logsig) = encode(g, bp, x)?;
    let kl = kl_divergence(g, mu, logsig)?;
    let mut acc: Option<NodeId> = None;
    for &e in eps {
        let z = sample_latent(g, mu, logsig, e, act)?;
        let y = decode(g, bp, z)?;
        let ll = log_likelihood(g, x, y)?;
        acc = Some(match acc {
            None => ll,
            Some(a) => g.add(a, ll)?,
        });
    }
    let ll_mean_vec = g.scale(acc.expect("nonempty eps"), 1.0 / eps.len() as f64);
    let per_doc = g.sub(ll_mean_vec, kl)?;
    let elbo = g.reduce(per_doc, ReduceOp::Mean, Axis::All)?;
    let mean_ll = g.reduce(ll_mean_vec, ReduceOp::Mean, Axis::All)?;
    let mean_kl = g.reduce(kl, ReduceOp::Mean, Axis::All)?;
    Ok(ElboNodes { elbo, per_doc, mean_ll, mean_kl })
}

pub struct LossNodes {
    /// Scalar objective to maximize. With lambda = 0 this IS the ELBO
    /// node, so the baseline objective is untouched by the extension.
    pub loss: NodeId,
    pub elbo: ElboNodes,
    /// Per-topic coherence vector [K], when the term is active.
    pub coherence: Option<NodeId>,
}

/// Full training objective: ELBO, plus lambda * sum_k C_k when a
/// coherence weight is set (requires embeddings bound in the graph).
pub fn loss(
    g: &mut Graph,
    bp: &BoundParams,
    x: NodeId,
    eps: &[NodeId],
    config: &ModelConfig,
) -> Result<LossNodes, ModelError> {
    let en = elbo(g, bp, x, eps, config.latent)?;
    if config.lambda > 0.0 {
        let e = bp
            .e
            .ok_or_else(|| ModelError::Config("coherence term requires embeddings".into()))?;
        let c = coherence_regularizer_node(g, bp.dec_w, e)?;
        let csum = g.reduce(c, ReduceOp::Sum, Axis::All)?;
        let scaled = g.scale(csum, config.lambda);
        let loss = g.add(en.elbo, scaled)?;
        Ok(LossNodes { loss, elbo: en, coherence: Some(c) })
    } else {
        Ok(LossNodes { loss: en.elbo, elbo: en, coherence: None })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerplexityReport {
    /// Canonical score: stochastic ELBO with mc_eval draws.
    pub perplexity: f64,
    /// Same bound evaluated at the posterior mean (eps = 0).
    pub mean_latent_perplexity: f64,
    /// Likelihood log-floor hits across both passes.
    pub clamp_events: usize,
}

/// exp(-mean_d(elbo_d / n_d)) over the whole corpus: the per-document
/// normalized perplexity bound. Noise is drawn upfront, document-major,
/// from `eval_seed` alone, so the score is independent of chunking.
pub fn perplexity(
    corpus: &Corpus,
    params: &ModelParams,
    config: &ModelConfig,
    emb: Option<&EmbeddingMatrix>,
    eval_seed: u64,
) -> Result<PerplexityReport, ModelError> {
    perplexity_chunked(corpus, params, config, emb, eval_seed, 256)
}

pub fn perplexity_chunked(
    corpus: &Corpus,
    params: &ModelParams,
    config: &ModelConfig,
    emb: Option<&EmbeddingMatrix>,
    eval_seed: u64,
    chunk: usize,
) -> Result<PerplexityReport, ModelError> {
    config.validate()?;
    assert!(chunk >= 1, "chunk size must be positive");
    let d_count = corpus.num_docs();
    if d_count == 0 {
        return Err(ModelError::Config("perplexity needs a nonempty corpus".into()));
    }
    for d in 0..d_count {
        if corpus.doc_tokens(d) == 0 {
            return Err(ModelError::Config(format!("document {d} is empty")));
        }
    }
    let (l, k) = (config.mc_eval, config.topics);
    let mut rng = DetRng::new(eval_seed);
    let eps_all = rng.fill_normal(d_count * l * k);

    let mut sum_stoch = 0.0;
    let mut sum_mean = 0.0;
    let mut clamp_events = 0usize;
    let mut start = 0;
    while start < d_count {
        let end = (start + chunk).min(d_count);
        let ids: Vec<usize> = (start..end).collect();
        let bsz = ids.len();
        let mut g = Graph::new();
        let bp = bind_params(&mut g, params, emb)?;
        let x = g.input(corpus.densify(&ids));
        let eps_nodes: Vec<NodeId> = (0..l)
            .map(|s| {
                let mut data = Vec::with_capacity(bsz * k);
                for &d in &ids {
                    let off = (d * l + s) * k;
                    data.extend_from_slice(&eps_all[off..off + k]);
                }
                g.input(Tensor::matrix(bsz, k, data))
            })
            .collect();
        let stoch = elbo(&mut g, &bp, x, &eps_nodes, config.latent)?;
        let zero_eps = g.input(Tensor::zeros(&[bsz, k]));
        let mean_pass = elbo(&mut g, &bp, x, &[zero_eps], config.latent)?;

        let pd_stoch = g.value(stoch.per_doc).data().to_vec();
        let pd_mean = g.value(mean_pass.per_doc).data().to_vec();
        for (i, &d) in ids.iter().enumerate() {
            let n_d = corpus.doc_tokens(d) as f64;
            sum_stoch += pd_stoch[i] / n_d;
            sum_mean += pd_mean[i] / n_d;
        }
        clamp_events += g.clamp_events();
        start = end;
    }
    Ok(PerplexityReport {
        perplexity: libm::exp(-(sum_stoch / d_count as f64)),
        mean_latent_perplexity: libm::exp(-(sum_mean / d_count as f64)),
        clamp_events,
    })
}

/// Per-column word indices ranked by weight, descending; ties go to the
/// lower vocabulary index.
pub fn top_word_indices(w: &Tensor, n: usize) -> Vec<Vec<usize>> {
    assert!(w.is_matrix(), "topic weights must form a matrix");
    let (v, k) = (w.shape()[0], w.shape()[1]);
    assert!(n >= 1 && n <= v, "top-N must satisfy 1 <= N <= |V|");
    (0..k)
        .map(|col| {
            let mut idx: Vec<usize> = (0..v).collect();
            idx.sort_by(|&a, &b| w.at(b, col).total_cmp(&w.at(a, col)).then(a.cmp(&b)));
            idx.truncate(n);
            idx
        })
        .collect()
}

/// Top-N words of every topic column, as coherence-ready word lists.
pub fn top_words(w: &Tensor, n: usize) -> Vec<TopicWordList> {
    assert!(n >= 2, "topic word lists need at least two words");
    top_word_indices(w, n)
        .into_iter()
        .map(|ids| TopicWordList::new(ids).expect("ranked indices are distinct"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;
    use crate::graph::grad_check;

    fn basic_config(kind: ModelKind) -> ModelConfig {
        let mut c = ModelConfig::for_kind(kind, 5, 2, 0x11);
        if kind.needs_embeddings() {
            c.embed_dim = Some(3);
        }
        c
    }

    fn test_embeddings(v: usize, d: usize, seed: u64) -> EmbeddingMatrix {
        let mut rng = DetRng::new(seed);
        EmbeddingMatrix::from_raw(Tensor::matrix(v, d, (0..v * d).map(|_| rng.normal()).collect()))
    }

    #[test]
    fn test_kind_parse_and_properties() {
        for kind in
            [ModelKind::Ntm, ModelKind::Nvdm, ModelKind::Gsm, ModelKind::NtmR, ModelKind::NtmF, ModelKind::NtmFr]
        {
            assert_eq!(ModelKind::parse(kind.name()), Some(kind));
        }
        assert_eq!(ModelKind::parse("lda"), None);
        assert_eq!(ModelKind::Ntm.latent_activation(), LatentActivation::Relu);
        assert_eq!(ModelKind::Nvdm.latent_activation(), LatentActivation::Identity);
        assert_eq!(ModelKind::Gsm.latent_activation(), LatentActivation::Softmax);
        assert!(ModelKind::NtmF.factorized() && ModelKind::NtmFr.factorized());
        assert!(!ModelKind::NtmR.factorized());
        assert_eq!(ModelKind::NtmR.default_lambda(), 50.0);
        assert_eq!(ModelKind::NtmF.default_lambda(), 0.0);
        assert!(ModelKind::NtmR.needs_embeddings());
        assert!(ModelKind::NtmF.needs_embeddings());
        assert!(!ModelKind::Gsm.needs_embeddings());
    }

    #[test]
    fn test_config_validation() {
        let ok = basic_config(ModelKind::Ntm);
        assert!(ok.validate().is_ok());

        let mut c = basic_config(ModelKind::NtmR);
        c.embed_dim = None;
        assert!(matches!(c.validate(), Err(ModelError::Config(_))));

        let mut c = basic_config(ModelKind::NtmF);
        c.embed_dim = None;
        assert!(matches!(c.validate(), Err(ModelError::Config(_))));

        let mut c = basic_config(ModelKind::Ntm);
        c.mc_train = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn test_init_shapes_and_determinism() {
        let config = ModelConfig::for_kind(ModelKind::Ntm, 7, 3, 9);
        let p = ModelParams::init(&config).unwrap();
        assert_eq!(p.enc_w1.shape(), &[7, 9]);
        assert_eq!(p.enc_b1.shape(), &[9]);
        assert_eq!(p.enc_w2.shape(), &[9, 6]);
        assert_eq!(p.enc_b2.shape(), &[6]);
        assert_eq!(p.mu_w.shape(), &[6, 3]);
        assert_eq!(p.logsig_w.shape(), &[6, 3]);
        match &p.dec {
            DecoderParams::Full { w } => assert_eq!(w.shape(), &[7, 3]),
            _ => panic!("expected a full decoder"),
        }
        assert_eq!(p.dec_b.shape(), &[7]);
        assert!(p.enc_b1.data().iter().all(|&b| b == 0.0));

        let again = ModelParams::init(&config).unwrap();
        assert_eq!(p, again);
        let other = ModelParams::init(&ModelConfig { seed: 10, ..config }).unwrap();
        assert_ne!(p, other);
    }

    #[test]
    fn test_init_factorized_shapes() {
        let config = basic_config(ModelKind::NtmF);
        let p = ModelParams::init(&config).unwrap();
        match &p.dec {
            DecoderParams::Factorized { t_hat } => assert_eq!(t_hat.shape(), &[3, 2]),
            _ => panic!("expected a factorized decoder"),
        }
        assert_eq!(p.named()[8].0, "dec_t_hat");
    }

    #[test]
    fn test_encode_zero_params_gives_zero_posterior() {
        let config = basic_config(ModelKind::Ntm);
        let p = ModelParams::zeroed(&config).unwrap();
        let mut g = Graph::new();
        let bp = bind_params(&mut g, &p, None).unwrap();
        let x = g.input(Tensor::matrix(2, 5, alloc::vec![1.0, 0.0, 2.0, 0.0, 3.0, 5.0, 1.0, 0.0, 0.0, 1.0]));
        let (mu, logsig) = encode(&mut g, &bp, x).unwrap();
        assert!(g.value(mu).data().iter().all(|&v| v == 0.0));
        assert!(g.value(logsig).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn test_encode_identical_docs_identical_rows() {
        let config = basic_config(ModelKind::Ntm);
        let p = ModelParams::init(&config).unwrap();
        let mut g = Graph::new();
        let bp = bind_params(&mut g, &p, None).unwrap();
        let row = alloc::vec![2.0, 0.0, 1.0, 4.0, 0.0];
        let mut data = row.clone();
        data.extend_from_slice(&row);
        let x = g.input(Tensor::matrix(2, 5, data));
        let (mu, _) = encode(&mut g, &bp, x).unwrap();
        let m = g.value(mu);
        assert_eq!(m.row(0), m.row(1));
    }

    #[test]
    fn test_sample_latent_mean_pass_and_activations() {
        let mut g = Graph::new();
        let mu = g.input(Tensor::matrix(1, 2, alloc::vec![-1.0, 2.0]));
        let logsig = g.input(Tensor::matrix(1, 2, alloc::vec![0.3, -0.2]));
        let zero = g.input(Tensor::zeros(&[1, 2]));

        let z = sample_latent(&mut g, mu, logsig, zero, LatentActivation::Identity).unwrap();
        assert_eq!(g.value(z).data(), g.value(mu).data());

        let z = sample_latent(&mut g, mu, logsig, zero, LatentActivation::Relu).unwrap();
        assert_eq!(g.value(z).data(), &[0.0, 2.0]);

        let mu0 = g.input(Tensor::zeros(&[1, 2]));
        let z = sample_latent(&mut g, mu0, logsig, zero, LatentActivation::Softmax).unwrap();
        assert_eq!(g.value(z).data(), &[0.5, 0.5]);
    }

    #[test]
    fn test_decode_uniform_for_zero_params() {
        let config = basic_config(ModelKind::Ntm);
        let p = ModelParams::zeroed(&config).unwrap();
        let mut g = Graph::new();
        let bp = bind_params(&mut g, &p, None).unwrap();
        let z = g.input(Tensor::matrix(2, 2, alloc::vec![0.5, 1.5, -1.0, 0.0]));
        let y = decode(&mut g, &bp, z).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 1.0 / 5.0));
    }

    #[test]
    fn test_decode_factorized_zero_factors_uniform() {
        let config = basic_config(ModelKind::NtmF);
        let p = ModelParams::zeroed(&config).unwrap();
        let emb = test_embeddings(5, 3, 0x31);
        let mut g = Graph::new();
        let bp = bind_params(&mut g, &p, Some(&emb)).unwrap();
        let z = g.input(Tensor::matrix(1, 2, alloc::vec![0.7, -0.3]));
        let y = decode(&mut g, &bp, z).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 1.0 / 5.0));
    }

    #[test]
    fn test_decode_rows_sum_to_one_and_bias_concentrates() {
        let config = basic_config(ModelKind::Ntm);
        let mut p = ModelParams::init(&config).unwrap();
        let mut g = Graph::new();
        let bp = bind_params(&mut g, &p, None).unwrap();
        let z = g.input(Tensor::matrix(3, 2, alloc::vec![0.5, 1.5, -1.0, 0.0, 2.0, -2.0]));
        let y = decode(&mut g, &bp, z).unwrap();
        for r in 0..3 {
            let s: f64 = g.value(y).row(r).iter().sum();
            assert!((s - 1.0).abs() <= 1e-10);
        }

        p.dec_b.data_mut()[0] = 20.0;
        let mut g = Graph::new();
        let bp = bind_params(&mut g, &p, None).unwrap();
        let z = g.input(Tensor::matrix(1, 2, alloc::vec![0.5, -0.5]));
        let y = decode(&mut g, &bp, z).unwrap();
        assert!(g.value(y).at(0, 0) > 0.99);
    }

    #[test]
    fn test_log_likelihood_examples() {
        let mut g = Graph::new();
        let y = g.input(Tensor::matrix(1, 3, alloc::vec![0.1, 0.45, 0.45]));
        let x = g.input(Tensor::matrix(1, 3, alloc::vec![3.0, 0.0, 0.0]));
        let ll = log_likelihood(&mut g, x, y).unwrap();
        assert_eq!(g.value(ll).data(), &[3.0 * libm::log(0.1)]);

        let x0 = g.input(Tensor::zeros(&[1, 3]));
        let ll = log_likelihood(&mut g, x0, y).unwrap();
        assert_eq!(g.value(ll).data(), &[0.0]);

        let v = 100usize;
        let mut g = Graph::new();
        let y = g.input(Tensor::filled(&[1, v], 1.0 / v as f64));
        let mut counts = alloc::vec![0.0; v];
        counts[3] = 4.0;
        counts[77] = 3.0;
        let x = g.input(Tensor::matrix(1, v, counts));
        let ll = log_likelihood(&mut g, x, y).unwrap();
        let got = g.value(ll).data()[0];
        assert!((got - 7.0 * libm::log(0.01)).abs() <= 1e-12);
    }

    #[test]
    fn test_kl_divergence_frozen_points() {
        let mut g = Graph::new();
        let mu = g.input(Tensor::zeros(&[1, 3]));
        let logsig = g.input(Tensor::zeros(&[1, 3]));
        let kl = kl_divergence(&mut g, mu, logsig).unwrap();
        assert_eq!(g.value(kl).data(), &[0.0]);

        let mu = g.input(Tensor::matrix(1, 1, alloc::vec![1.0]));
        let logsig = g.input(Tensor::zeros(&[1, 1]));
        let kl = kl_divergence(&mut g, mu, logsig).unwrap();
        assert_eq!(g.value(kl).data(), &[0.5]);
    }

    #[test]
    fn test_kl_nonnegative_on_random_draws() {
        let mut rng = DetRng::new(0x4a);
        for _ in 0..50 {
            let k = 1 + (rng.next_u64() % 4) as usize;
            let mut g = Graph::new();
            let mu =
                g.input(Tensor::matrix(1, k, (0..k).map(|_| rng.uniform(-2.0, 2.0)).collect()));
            let logsig =
                g.input(Tensor::matrix(1, k, (0..k).map(|_| rng.uniform(-1.0, 1.0)).collect()));
            let kl = kl_divergence(&mut g, mu, logsig).unwrap();
            assert!(g.value(kl).data()[0] >= 0.0);
        }
    }

    #[test]
    fn test_kl_matches_monte_carlo() {
        let mut rng = DetRng::new(0x88);
        let k = 3usize;
        let mu: Vec<f64> = (0..k).map(|_| rng.uniform(-1.5, 1.5)).collect();
        let logsig: Vec<f64> = (0..k).map(|_| rng.uniform(-0.7, 0.7)).collect();

        let mut g = Graph::new();
        let mu_n = g.input(Tensor::matrix(1, k, mu.clone()));
        let ls_n = g.input(Tensor::matrix(1, k, logsig.clone()));
        let kl = kl_divergence(&mut g, mu_n, ls_n).unwrap();
        let analytic = g.value(kl).data()[0];

        // KL = E_q[log q(z) - log p(z)] with z = mu + sigma*eps.
        let trials = 1_000_000usize;
        let mut acc = 0.0;
        for _ in 0..trials {
            let mut term = 0.0;
            for d in 0..k {
                let e = rng.normal();
                let s = libm::exp(logsig[d]);
                let z = mu[d] + s * e;
                term += -logsig[d] - 0.5 * e * e + 0.5 * z * z;
            }
            acc += term;
        }
        let mc = acc / trials as f64;
        assert!(
            (analytic - mc).abs() <= 0.01 * analytic.abs().max(0.05),
            "analytic {analytic} vs MC {mc}"
        );
    }

    #[test]
    fn test_elbo_zero_param_model_is_uniform_likelihood() {
        let config = basic_config(ModelKind::Ntm);
        let p = ModelParams::zeroed(&config).unwrap();
        let mut g = Graph::new();
        let bp = bind_params(&mut g, &p, None).unwrap();
        let x = g.input(Tensor::matrix(1, 5, alloc::vec![3.0, 2.0, 1.0, 1.0, 0.0]));
        let eps = g.input(Tensor::matrix(1, 2, alloc::vec![0.4, -1.2]));
        let en = elbo(&mut g, &bp, x, &[eps], config.latent).unwrap();
        let got = g.value(en.elbo).item();
        assert!((got - 7.0 * libm::log(0.2)).abs() <= 1e-12);
        assert_eq!(g.value(en.mean_kl).item(), 0.0);
    }

    #[test]
    fn test_elbo_mc_count_degenerate_with_zero_eps() {
        let config = basic_config(ModelKind::Ntm);
        let p = ModelParams::init(&config).unwrap();
        let x_t = Tensor::matrix(2, 5, alloc::vec![1.0, 0.0, 2.0, 0.0, 1.0, 0.0, 3.0, 0.0, 1.0, 0.0]);

        let run = |l: usize| {
            let mut g = Graph::new();
            let bp = bind_params(&mut g, &p, None).unwrap();
            let x = g.input(x_t.clone());
            let eps: Vec<NodeId> = (0..l).map(|_| g.input(Tensor::zeros(&[2, 2]))).collect();
            let en = elbo(&mut g, &bp, x, &eps, config.latent).unwrap();
            g.value(en.elbo).item()
        };
        assert!((run(1) - run(4)).abs() <= 1e-12);
    }

    #[test]
    fn test_loss_is_elbo_node_when_lambda_zero() {
        let config = basic_config(ModelKind::Ntm);
        let p = ModelParams::init(&config).unwrap();
        let mut g = Graph::new();
        let bp = bind_params(&mut g, &p, None).unwrap();
        let x = g.input(Tensor::matrix(1, 5, alloc::vec![1.0, 1.0, 0.0, 0.0, 2.0]));
        let eps = g.input(Tensor::zeros(&[1, 2]));
        let ln = loss(&mut g, &bp, x, &[eps], &config).unwrap();
        assert_eq!(ln.loss, ln.elbo.elbo);
        assert!(ln.coherence.is_none());
    }

    #[test]
    fn test_loss_adds_lambda_k_for_one_hot_topics() {
        // One-hot orthonormal embeddings and one-hot decoder columns pin
        // every per-topic coherence at exactly 1.
        let mut config = basic_config(ModelKind::NtmR);
        config.vocab_size = 3;
        config.embed_dim = Some(3);
        let mut p = ModelParams::zeroed(&config).unwrap();
        p.dec = DecoderParams::Full {
            w: Tensor::matrix(3, 2, alloc::vec![2.0, 0.0, 0.0, 3.0, 0.0, 0.0]),
        };
        let mut eye = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 3 + i] = 1.0;
        }
        let emb = EmbeddingMatrix::from_raw(eye);

        let x_t = Tensor::matrix(1, 3, alloc::vec![1.0, 2.0, 0.0]);
        let run = |lambda: f64| {
            let mut cfg = config.clone();
            cfg.lambda = lambda;
            let mut g = Graph::new();
            let bp = bind_params(&mut g, &p, Some(&emb)).unwrap();
            let x = g.input(x_t.clone());
            let eps = g.input(Tensor::zeros(&[1, 2]));
            let ln = loss(&mut g, &bp, x, &[eps], &cfg).unwrap();
            g.value(ln.loss).item()
        };
        assert_eq!(run(50.0), run(0.0) + 50.0 * 2.0);
    }

    #[test]
    fn test_loss_lambda_without_embeddings_is_config_error() {
        let config = basic_config(ModelKind::NtmR);
        let p = ModelParams::init(&config).unwrap();
        let mut g = Graph::new();
        let bp = bind_params(&mut g, &p, None).unwrap();
        let x = g.input(Tensor::matrix(1, 5, alloc::vec![1.0, 0.0, 0.0, 0.0, 0.0]));
        let eps = g.input(Tensor::zeros(&[1, 2]));
        assert!(matches!(
            loss(&mut g, &bp, x, &[eps], &config),
            Err(ModelError::Config(_))
        ));
    }

    #[test]
    fn test_loss_gradients_match_fd_all_kinds() {
        let x_t = Tensor::matrix(2, 5, alloc::vec![1.0, 0.0, 2.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 3.0]);
        for kind in [ModelKind::Ntm, ModelKind::NtmR, ModelKind::NtmF, ModelKind::NtmFr] {
            let config = basic_config(kind);
            let emb = kind.needs_embeddings().then(|| test_embeddings(5, 3, 0x77));
            let params = ModelParams::init(&config).unwrap();
            let tensors: Vec<Tensor> =
                params.named().iter().map(|(_, t)| (*t).clone()).collect();
            let mut rng = DetRng::new(0xe95);
            let eps_t = Tensor::matrix(2, 2, (0..4).map(|_| rng.normal()).collect());

            let err = grad_check(
                |g, ids| {
                    let e = emb.as_ref().map(|m| g.input(m.rows().clone()));
                    let bp = BoundParams::from_ids(g, ids, config.factorized, e)
                        .map_err(|_| GraphError::NonScalarLoss { shape: alloc::vec![] })?;
                    let x = g.input(x_t.clone());
                    let eps = g.input(eps_t.clone());
                    loss(g, &bp, x, &[eps], &config)
                        .map(|ln| ln.loss)
                        .map_err(|_| GraphError::NonScalarLoss { shape: alloc::vec![] })
                },
                &tensors,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "{}: max relative error {err}", kind.name());
        }
    }

    #[test]
    fn test_decoder_param_counts() {
        let mut config = ModelConfig::for_kind(ModelKind::NtmF, 100, 20, 1);
        config.embed_dim = Some(50);
        let p = ModelParams::init(&config).unwrap();
        assert_eq!(p.decoder_param_count(), 50 * 20 + 100);

        let full = ModelParams::init(&ModelConfig::for_kind(ModelKind::Ntm, 100, 20, 1)).unwrap();
        assert_eq!(full.decoder_param_count(), 100 * 20 + 100);
    }

    #[test]
    fn test_factorized_w_is_exactly_e_t_hat() {
        let config = basic_config(ModelKind::NtmF);
        let p = ModelParams::init(&config).unwrap();
        let emb = test_embeddings(5, 3, 0x20);
        let direct = p.decoder_matrix(Some(&emb)).unwrap();

        let mut g = Graph::new();
        let bp = bind_params(&mut g, &p, Some(&emb)).unwrap();
        assert_eq!(g.value(bp.dec_w), &direct);
        assert!(p.decoder_matrix(None).is_err());
    }

    fn uniform_corpus(v: usize) -> Corpus {
        let words: Vec<String> = (0..v).map(|i| format!("w{i}")).collect();
        let vocab = Vocabulary::from_words(words).unwrap();
        let docs = alloc::vec![
            alloc::vec![(0u32, 3u32), (5, 1), (17, 2)],
            alloc::vec![(1, 1), (99, 4)],
            alloc::vec![(42, 2)],
        ];
        Corpus::new(vocab, docs)
    }

    #[test]
    fn test_perplexity_uniform_model_equals_vocab_size() {
        let corpus = uniform_corpus(100);
        let config = ModelConfig::for_kind(ModelKind::Ntm, 100, 4, 3);
        let p = ModelParams::zeroed(&config).unwrap();
        let r = perplexity(&corpus, &p, &config, None, 0xabc).unwrap();
        assert!((r.perplexity - 100.0).abs() <= 1e-9, "got {}", r.perplexity);
        assert!((r.mean_latent_perplexity - 100.0).abs() <= 1e-9);
        assert_eq!(r.clamp_events, 0);
    }

    #[test]
    fn test_perplexity_chunking_invariant_and_deterministic() {
        let corpus = uniform_corpus(100);
        let config = ModelConfig::for_kind(ModelKind::Ntm, 100, 4, 3);
        let p = ModelParams::init(&config).unwrap();
        let a = perplexity_chunked(&corpus, &p, &config, None, 0x5151, 1).unwrap();
        let b = perplexity_chunked(&corpus, &p, &config, None, 0x5151, 2).unwrap();
        let c = perplexity_chunked(&corpus, &p, &config, None, 0x5151, 64).unwrap();
        assert_eq!(a, b);
        assert_eq!(b, c);

        let again = perplexity(&corpus, &p, &config, None, 0x5151).unwrap();
        assert_eq!(a.perplexity, again.perplexity);
        let other = perplexity(&corpus, &p, &config, None, 0x5152).unwrap();
        assert_ne!(a.perplexity, other.perplexity);
    }

    #[test]
    fn test_perplexity_repeated_doc_matches_single() {
        let words: Vec<String> = (0..20).map(|i| format!("w{i}")).collect();
        let vocab = Vocabulary::from_words(words).unwrap();
        let doc = alloc::vec![(0u32, 2u32), (7, 1), (13, 3)];
        let one = Corpus::new(vocab.clone(), alloc::vec![doc.clone()]);
        let ten = Corpus::new(vocab, alloc::vec![doc; 10]);

        let config = ModelConfig::for_kind(ModelKind::Ntm, 20, 3, 5);
        let p = ModelParams::init(&config).unwrap();
        // Same per-document eps for every copy: single-sample mean pass.
        let mut cfg = config.clone();
        cfg.mc_eval = 1;
        let a = perplexity(&one, &p, &cfg, None, 0).unwrap();
        let b = perplexity(&ten, &p, &cfg, None, 0).unwrap();
        assert!(
            (a.mean_latent_perplexity - b.mean_latent_perplexity).abs()
                <= 1e-12 * a.mean_latent_perplexity,
            "{} vs {}",
            a.mean_latent_perplexity,
            b.mean_latent_perplexity
        );
    }

    #[test]
    fn test_top_words_simple_column() {
        let w = Tensor::matrix(3, 1, alloc::vec![0.1, 0.9, 0.5]);
        assert_eq!(top_word_indices(&w, 2), alloc::vec![alloc::vec![1, 2]]);
    }

    #[test]
    fn test_top_words_tie_takes_lower_index() {
        let w = Tensor::matrix(2, 1, alloc::vec![0.5, 0.5]);
        assert_eq!(top_word_indices(&w, 1), alloc::vec![alloc::vec![0]]);
    }

    #[test]
    fn test_top_words_matches_full_sort() {
        let mut rng = DetRng::new(0x70b5);
        for _ in 0..20 {
            let w = Tensor::matrix(20, 4, (0..80).map(|_| rng.uniform(-1.0, 1.0)).collect());
            for (col, ids) in top_word_indices(&w, 7).into_iter().enumerate() {
                let mut all: Vec<usize> = (0..20).collect();
                all.sort_by(|&a, &b| w.at(b, col).total_cmp(&w.at(a, col)).then(a.cmp(&b)));
                assert_eq!(ids, all[..7]);
            }
        }
    }

    #[test]
    fn test_top_words_returns_topic_lists() {
        let w = Tensor::matrix(4, 2, alloc::vec![1.0, 0.0, 2.0, 0.5, 3.0, 0.25, 4.0, 0.125]);
        let topics = top_words(&w, 3);
        assert_eq!(topics.len(), 2);
        assert_eq!(topics[0].indices(), &[3, 2, 1]);
        assert_eq!(topics[1].indices(), &[1, 2, 3]);
    }
}
