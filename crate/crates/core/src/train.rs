//! Adadelta optimization, the epoch loop, and per-epoch metric traces.
//!
//! The loop maximizes the model objective by negating it into a
//! minimization loss before the backward sweep. Updates are applied in
//! the fixed named-parameter order, so a run is a pure function of
//! (config, corpora, seed).

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::coherence::{evaluate_coherence, npmi_topic};
use crate::corpus::{batch_iter, CooccurrenceStats, Corpus, CorpusError};
use crate::embeddings::EmbeddingMatrix;
use crate::graph::{Graph, NodeId};
use crate::model::{
    bind_params, loss, perplexity, top_words, ModelConfig, ModelError, ModelParams,
};
use crate::rng::{derive_seed, domains, DetRng};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    Model(ModelError),
    Corpus(CorpusError),
    Config(String),
    /// Loss left the reals; training aborts with the completed rows.
    NonFinite { epoch: usize, batch: usize, trace: Vec<TraceRow> },
}

impl core::fmt::Display for TrainError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TrainError::Model(e) => write!(f, "{e}"),
            TrainError::Corpus(e) => write!(f, "{e}"),
            TrainError::Config(msg) => write!(f, "config: {msg}"),
            TrainError::NonFinite { epoch, batch, .. } => {
                write!(f, "non-finite loss at epoch {epoch}, batch {batch}")
            }
        }
    }
}

impl core::error::Error for TrainError {}

impl From<ModelError> for TrainError {
    fn from(e: ModelError) -> Self {
        TrainError::Model(e)
    }
}

impl From<CorpusError> for TrainError {
    fn from(e: CorpusError) -> Self {
        TrainError::Corpus(e)
    }
}

impl From<crate::graph::GraphError> for TrainError {
    fn from(e: crate::graph::GraphError) -> Self {
        TrainError::Model(ModelError::Graph(e))
    }
}

/// Adadelta accumulators, one pair per parameter in named order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdadeltaState {
    rho: f64,
    eps: f64,
    lr: f64,
    avg_sq_grad: Vec<Tensor>,
    avg_sq_update: Vec<Tensor>,
}

impl AdadeltaState {
    /// rho 0.95, eps 1e-6; `lr` scales the computed update.
    pub fn new(params: &ModelParams, lr: f64) -> Self {
        let zeros: Vec<Tensor> =
            params.named().iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        AdadeltaState { rho: 0.95, eps: 1e-6, lr, avg_sq_grad: zeros.clone(), avg_sq_update: zeros }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Accumulator shapes mirror the parameters exactly.
    pub fn audit(&self, params: &ModelParams) -> bool {
        let named = params.named();
        named.len() == self.avg_sq_grad.len()
            && named.len() == self.avg_sq_update.len()
            && named.iter().zip(&self.avg_sq_grad).all(|((_, p), a)| p.shape() == a.shape())
            && named.iter().zip(&self.avg_sq_update).all(|((_, p), a)| p.shape() == a.shape())
            && self.avg_sq_grad.iter().all(|t| t.data().iter().all(|&x| x >= 0.0))
            && self.avg_sq_update.iter().all(|t| t.data().iter().all(|&x| x >= 0.0))
    }

    /// One minimization step: `grads` in named order, of the negated
    /// objective. Every element follows the accumulator recurrence.
    pub fn step(&mut self, params: &mut ModelParams, grads: &[Tensor]) {
        let mut named = params.named_mut();
        assert_eq!(grads.len(), named.len(), "gradient list must mirror parameters");
        for (i, (_, p)) in named.iter_mut().enumerate() {
            assert_eq!(p.shape(), grads[i].shape(), "gradient shape mismatch");
            let asg = self.avg_sq_grad[i].data_mut();
            let asu = self.avg_sq_update[i].data_mut();
            let pd = p.data_mut();
            for (j, &g) in grads[i].data().iter().enumerate() {
                asg[j] = self.rho * asg[j] + (1.0 - self.rho) * g * g;
                let delta = -libm::sqrt(asu[j] + self.eps) / libm::sqrt(asg[j] + self.eps) * g;
                asu[j] = self.rho * asu[j] + (1.0 - self.rho) * delta * delta;
                pd[j] += self.lr * delta;
            }
        }
    }
}

/// Free-function form of [`AdadeltaState::step`].
pub fn adadelta_step(state: &mut AdadeltaState, params: &mut ModelParams, grads: &[Tensor]) {
    state.step(params, grads)
}

/// One epoch's metrics. Optional columns are absent when their inputs
/// (embeddings, co-occurrence statistics) were not supplied or the
/// metric was skipped this epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub epoch: usize,
    /// Document-weighted mean training ELBO over the epoch's batches.
    pub elbo: f64,
    pub train_perplexity: f64,
    pub test_perplexity: f64,
    pub npmi: Option<f64>,
    pub wetc_pw: Option<f64>,
    pub wetc_c: Option<f64>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Evaluate NPMI on epochs divisible by this (1 = every epoch).
    pub npmi_every: usize,
    /// Words per topic for coherence metrics.
    pub top_n: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { epochs: 50, batch_size: 256, lr: 0.01, npmi_every: 1, top_n: 10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub params: ModelParams,
    pub trace: Vec<TraceRow>,
    /// Likelihood log-floor hits across training and evaluation.
    pub clamp_events: usize,
    /// Training noise stream position (seed, word position) at the end,
    /// so a checkpoint can resume the exact stream.
    pub rng_state: (u64, u128),
}

fn check_setup(
    config: &ModelConfig,
    opts: &TrainOptions,
    train_corpus: &Corpus,
    test_corpus: &Corpus,
    emb: Option<&EmbeddingMatrix>,
    stats: Option<&CooccurrenceStats>,
) -> Result<(), TrainError> {
    config.validate()?;
    if opts.batch_size == 0 {
        return Err(TrainError::Config("batch size must be positive".into()));
    }
    if opts.npmi_every == 0 {
        return Err(TrainError::Config("npmi cadence must be positive".into()));
    }
    if (emb.is_some() || stats.is_some()) && opts.top_n < 2 {
        return Err(TrainError::Config("coherence needs at least two words per topic".into()));
    }
    if !opts.lr.is_finite() || opts.lr < 0.0 {
        return Err(TrainError::Config(format!("learning rate must be finite and >= 0, got {}", opts.lr)));
    }
    if train_corpus.vocab().len() != config.vocab_size {
        return Err(TrainError::Config(format!(
            "corpus vocabulary has {} words, config says {}",
            train_corpus.vocab().len(),
            config.vocab_size
        )));
    }
    if train_corpus.vocab().hash64() != test_corpus.vocab().hash64() {
        return Err(TrainError::Config("train and test corpora use different vocabularies".into()));
    }
    if train_corpus.num_docs() == 0 || test_corpus.num_docs() == 0 {
        return Err(TrainError::Config("corpora must be nonempty".into()));
    }
    if (emb.is_some() || stats.is_some()) && opts.top_n > config.vocab_size {
        return Err(TrainError::Config("top-N exceeds the vocabulary".into()));
    }
    if let Some(e) = emb {
        if e.vocab_len() != config.vocab_size {
            return Err(TrainError::Config("embedding rows do not match the vocabulary".into()));
        }
        if let Some(d) = config.embed_dim {
            if e.dim() != d {
                return Err(TrainError::Config("embedding dimension does not match the config".into()));
            }
        }
    } else if config.lambda > 0.0 || config.factorized {
        return Err(TrainError::Config("model requires embeddings".into()));
    }
    if let Some(s) = stats {
        if s.vocab_len() != config.vocab_size {
            return Err(TrainError::Config("co-occurrence statistics use a different vocabulary".into()));
        }
    }
    Ok(())
}

/// Trains from a fresh initialization, recording one trace row per epoch.
/// `clock` supplies wall-time stamps; pass a constant for byte-stable
/// outputs or a real timer for measurements.
pub fn train(
    config: &ModelConfig,
    opts: &TrainOptions,
    train_corpus: &Corpus,
    test_corpus: &Corpus,
    emb: Option<&EmbeddingMatrix>,
    stats: Option<&CooccurrenceStats>,
    clock: &mut dyn FnMut() -> f64,
) -> Result<TrainReport, TrainError> {
    check_setup(config, opts, train_corpus, test_corpus, emb, stats)?;
    let mut params = ModelParams::init(config)?;
    let mut state = AdadeltaState::new(&params, opts.lr);
    let mut eps_rng = DetRng::new(derive_seed(config.seed, domains::TRAIN_EPS));
    let mut trace: Vec<TraceRow> = Vec::with_capacity(opts.epochs);
    let mut clamp_events = 0usize;
    let k = config.topics;
    let t0 = clock();

    for epoch in 0..opts.epochs {
        let mut elbo_weighted = 0.0;
        for (bi, x_t) in
            batch_iter(train_corpus, opts.batch_size, config.seed, epoch as u64)?.enumerate()
        {
            let bsz = x_t.shape()[0];
            let mut g = Graph::new();
            let bp = bind_params(&mut g, &params, emb)?;
            let x = g.input(x_t);
            let eps_nodes: Vec<NodeId> = (0..config.mc_train)
                .map(|_| g.input(Tensor::matrix(bsz, k, eps_rng.fill_normal(bsz * k))))
                .collect();
            let ln = loss(&mut g, &bp, x, &eps_nodes, config)?;
            let loss_val = g.value(ln.loss).item();
            if !loss_val.is_finite() {
                return Err(TrainError::NonFinite { epoch, batch: bi, trace });
            }
            elbo_weighted += g.value(ln.elbo.elbo).item() * bsz as f64;
            let neg = g.scale(ln.loss, -1.0);
            let grads = g.backward(neg)?;
            let grad_tensors: Vec<Tensor> =
                bp.param_ids.iter().map(|&id| grads.wrt(id).clone()).collect();
            state.step(&mut params, &grad_tensors);
            clamp_events += g.clamp_events();
        }
        debug_assert!(state.audit(&params));

        let eval_base = derive_seed(config.seed, domains::EVAL_EPS);
        let train_eval = perplexity(
            train_corpus,
            &params,
            config,
            emb,
            derive_seed(eval_base, 2 * epoch as u64),
        )?;
        let test_eval = perplexity(
            test_corpus,
            &params,
            config,
            emb,
            derive_seed(eval_base, 2 * epoch as u64 + 1),
        )?;
        clamp_events += train_eval.clamp_events + test_eval.clamp_events;

        let w = params.decoder_matrix(emb)?;
        let want_npmi = stats.is_some() && epoch % opts.npmi_every == 0;
        let (npmi, wetc_pw, wetc_c) = match emb {
            Some(e) => {
                let report =
                    evaluate_coherence(&w, opts.top_n, stats.filter(|_| want_npmi), e);
                (report.mean_npmi, Some(report.mean_wetc_pw), Some(report.mean_wetc_c))
            }
            None if want_npmi => {
                let st = stats.expect("want_npmi implies stats");
                let topics = top_words(&w, opts.top_n);
                let sum: f64 = topics.iter().map(|t| npmi_topic(t, st)).sum();
                (Some(sum / topics.len() as f64), None, None)
            }
            None => (None, None, None),
        };

        trace.push(TraceRow {
            epoch,
            elbo: elbo_weighted / train_corpus.num_docs() as f64,
            train_perplexity: train_eval.perplexity,
            test_perplexity: test_eval.perplexity,
            npmi,
            wetc_pw,
            wetc_c,
            wall_seconds: clock() - t0,
        });
    }

    Ok(TrainReport { params, trace, clamp_events, rng_state: eps_rng.state() })
}

fn push_float(out: &mut String, v: f64) {
    out.push_str(&format!("{v:.16e}"));
}

fn push_opt(out: &mut String, v: Option<f64>) {
    if let Some(x) = v {
        push_float(out, x);
    }
}

pub const TRACE_CSV_HEADER: &str =
    "epoch,elbo,train_ppl,test_ppl,npmi,wetc_pw,wetc_c,wall_seconds";

/// CSV with 17-significant-digit floats; absent metrics are empty fields.
pub fn trace_to_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from(TRACE_CSV_HEADER);
    out.push('\n');
    for row in trace {
        out.push_str(&row.epoch.to_string());
        out.push(',');
        push_float(&mut out, row.elbo);
        out.push(',');
        push_float(&mut out, row.train_perplexity);
        out.push(',');
        push_float(&mut out, row.test_perplexity);
        out.push(',');
        push_opt(&mut out, row.npmi);
        out.push(',');
        push_opt(&mut out, row.wetc_pw);
        out.push(',');
        push_opt(&mut out, row.wetc_c);
        out.push(',');
        push_float(&mut out, row.wall_seconds);
        out.push('\n');
    }
    out
}

/// JSON array of row objects; absent metrics serialize as null.
pub fn trace_to_json(trace: &[TraceRow]) -> String {
    let opt = |v: Option<f64>| match v {
        Some(x) => format!("{x:.16e}"),
        None => "null".to_string(),
    };
    let mut out = String::from("[\n");
    for (i, row) in trace.iter().enumerate() {
        out.push_str(&format!(
            "  {{\"epoch\": {}, \"elbo\": {:.16e}, \"train_ppl\": {:.16e}, \"test_ppl\": {:.16e}, \
             \"npmi\": {}, \"wetc_pw\": {}, \"wetc_c\": {}, \"wall_seconds\": {:.16e}}}{}",
            row.epoch,
            row.elbo,
            row.train_perplexity,
            row.test_perplexity,
            opt(row.npmi),
            opt(row.wetc_pw),
            opt(row.wetc_c),
            row.wall_seconds,
            if i + 1 < trace.len() { ",\n" } else { "\n" }
        ));
    }
    out.push(']');
    out
}

/// Inverse of [`trace_to_csv`]; floats round-trip exactly.
pub fn trace_from_csv(text: &str) -> Result<Vec<TraceRow>, TrainError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| TrainError::Config("empty trace file".into()))?;
    if header.trim() != TRACE_CSV_HEADER {
        return Err(TrainError::Config(format!("unexpected trace header {header:?}")));
    }
    let mut rows = Vec::new();
    let mut last_epoch: Option<usize> = None;
    for (i, l) in lines.enumerate() {
        let line = i + 2;
        if l.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = l.split(',').collect();
        if fields.len() != 8 {
            return Err(TrainError::Config(format!("line {line}: expected 8 fields, got {}", fields.len())));
        }
        let f = |s: &str| -> Result<f64, TrainError> {
            s.parse().map_err(|_| TrainError::Config(format!("line {line}: bad float {s:?}")))
        };
        let opt = |s: &str| -> Result<Option<f64>, TrainError> {
            if s.is_empty() {
                Ok(None)
            } else {
                f(s).map(Some)
            }
        };
        let epoch: usize = fields[0]
            .parse()
            .map_err(|_| TrainError::Config(format!("line {line}: bad epoch {:?}", fields[0])))?;
        if let Some(prev) = last_epoch {
            if epoch <= prev {
                return Err(TrainError::Config(format!("line {line}: epochs must increase")));
            }
        }
        last_epoch = Some(epoch);
        rows.push(TraceRow {
            epoch,
            elbo: f(fields[1])?,
            train_perplexity: f(fields[2])?,
            test_perplexity: f(fields[3])?,
            npmi: opt(fields[4])?,
            wetc_pw: opt(fields[5])?,
            wetc_c: opt(fields[6])?,
            wall_seconds: f(fields[7])?,
        });
    }
    Ok(rows)
}
