//! The five commands. Each resolves options, digests its inputs, writes
//! a manifest, and only then computes. Outputs are deterministic for
//! identical inputs and seeds unless --timing is requested.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use serde_json::{json, Value};

use ntm_core::coherence::{evaluate_coherence, correlation_study, CoherenceError, RatedTopicSet};
use ntm_core::corpus::{
    count_cooccurrence, tokenize, CooccurrenceStats, Corpus, CorpusError, Vocabulary,
};
use ntm_core::embeddings::{parse_embeddings, EmbeddingError, EmbeddingMatrix};
use ntm_core::model::{perplexity, top_words, ModelConfig, ModelError, ModelKind};
use ntm_core::rng::{derive_seed, domains};
use ntm_core::train::{train, trace_to_csv, trace_to_json, TrainError, TrainOptions};

use crate::checkpoint::Checkpoint;
use crate::cooc_cache::{cooc_cache_to_string, parse_cooc_cache};
use crate::files::{read_text_digested, write_file};
use crate::manifest::ManifestBuilder;
use crate::CliError;

fn corpus_err(e: CorpusError) -> CliError {
    match e {
        CorpusError::Config(_) => CliError::Usage(e.to_string()),
        _ => CliError::Io(e.to_string()),
    }
}

fn embedding_err(e: EmbeddingError) -> CliError {
    match e {
        EmbeddingError::NoOverlap => {
            CliError::Usage("embeddings cover no vocabulary word".to_string())
        }
        _ => CliError::Io(e.to_string()),
    }
}

fn train_err(e: TrainError) -> CliError {
    match e {
        TrainError::NonFinite { epoch, batch, .. } => {
            CliError::Numeric(format!("non-finite loss at epoch {epoch}, batch {batch}"))
        }
        TrainError::Config(m) => CliError::Usage(m),
        TrainError::Model(ModelError::Config(m)) => CliError::Usage(m),
        TrainError::Model(e) => CliError::Numeric(e.to_string()),
        TrainError::Corpus(e) => corpus_err(e),
    }
}

fn model_err(e: ModelError) -> CliError {
    match e {
        ModelError::Config(m) => CliError::Usage(m),
        other => CliError::Numeric(other.to_string()),
    }
}

/// --out-dir flag, else NTM_OUT_DIR, else the working directory.
pub fn resolve_out_dir(flag: &Option<PathBuf>) -> PathBuf {
    flag.clone()
        .or_else(|| std::env::var_os("NTM_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn load_vocab(path: &Path) -> Result<(Vocabulary, String), CliError> {
    let (text, digest) = read_text_digested(path)?;
    let vocab = Vocabulary::parse(&text).map_err(corpus_err)?;
    Ok((vocab, digest))
}

fn load_embeddings(
    path: &Path,
    vocab: &Vocabulary,
) -> Result<(EmbeddingMatrix, Value, String), CliError> {
    let (text, digest) = read_text_digested(path)?;
    let (emb, report) = parse_embeddings(&text, vocab, true).map_err(embedding_err)?;
    let summary = json!({
        "dim": emb.dim(),
        "oov": report.oov,
        "duplicates": report.duplicates,
        "zero_rows": report.zero_rows,
    });
    Ok((emb, summary, digest))
}

fn load_cooc(path: &Path, vocab: &Vocabulary) -> Result<(CooccurrenceStats, String), CliError> {
    let (text, digest) = read_text_digested(path)?;
    let (stats, hash) = parse_cooc_cache(&text)?;
    if hash != vocab.hash64() {
        return Err(CliError::Usage(
            "co-occurrence cache was built for a different vocabulary".to_string(),
        ));
    }
    if stats.vocab_len() != vocab.len() {
        return Err(CliError::Usage(
            "co-occurrence cache vocabulary size differs from the vocab file".to_string(),
        ));
    }
    Ok((stats, digest))
}

fn json_f64(v: f64) -> Value {
    serde_json::Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
}

fn opt_f64(v: Option<f64>) -> Value {
    v.map(json_f64).unwrap_or(Value::Null)
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("valid JSON"));
}

fn write_json(path: &Path, v: &Value) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(v).expect("valid JSON");
    s.push('\n');
    write_file(path, s.as_bytes())
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    /// ntm | nvdm | gsm | ntm-r | ntm-f | ntm-fr
    #[arg(long)]
    pub model: String,
    #[arg(long, short = 'k', default_value_t = 50)]
    pub topics: usize,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    /// Scales the Adadelta update.
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    /// Coherence weight; defaults to the model kind's convention.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub mc_train: usize,
    #[arg(long, default_value_t = 8)]
    pub mc_eval: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Bag-of-words counts: 3-line header (docs, vocab, nnz), then
    /// "doc word count" records, 1-based; plain or gzip.
    #[arg(long)]
    pub docword: PathBuf,
    /// One word per line; line number = word id.
    #[arg(long)]
    pub vocab: PathBuf,
    /// Held-out share. 0 evaluates on the training documents.
    #[arg(long, default_value_t = 0.1)]
    pub test_fraction: f64,
    /// Word embedding text file (token then floats, one word per line).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Co-occurrence cache from the cooc command; enables NPMI tracing.
    #[arg(long)]
    pub cooc: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// csv | json
    #[arg(long, default_value = "csv")]
    pub trace_format: String,
    /// Evaluate NPMI every N epochs.
    #[arg(long, default_value_t = 1)]
    pub npmi_every: usize,
    /// Words per topic for coherence metrics.
    #[arg(long, default_value_t = 10)]
    pub top_n: usize,
    /// Record real wall-clock times in the trace. Makes the trace
    /// non-reproducible across runs; timing always goes to stderr.
    #[arg(long, default_value_t = false)]
    pub timing: bool,
}

pub fn cmd_train(args: &TrainArgs, argv: &[String]) -> Result<(), CliError> {
    let kind = ModelKind::parse(&args.model)
        .ok_or_else(|| CliError::Usage(format!("unknown model {:?}", args.model)))?;
    if args.trace_format != "csv" && args.trace_format != "json" {
        return Err(CliError::Usage(format!(
            "trace format must be csv or json, got {:?}",
            args.trace_format
        )));
    }
    let out_dir = resolve_out_dir(&args.out_dir);

    let (vocab, vocab_digest) = load_vocab(&args.vocab)?;
    let (docword_text, docword_digest) = read_text_digested(&args.docword)?;
    let (corpus, load_report) =
        Corpus::from_docword(&docword_text, vocab.clone()).map_err(corpus_err)?;

    let emb = match &args.embeddings {
        Some(p) => Some((load_embeddings(p, &vocab)?, p.clone())),
        None => None,
    };
    if kind.needs_embeddings() && emb.is_none() {
        return Err(CliError::Usage(format!(
            "model {} requires --embeddings",
            kind.name()
        )));
    }
    let stats = match &args.cooc {
        Some(p) => Some((load_cooc(p, &vocab)?, p.clone())),
        None => None,
    };

    let mut config = ModelConfig::for_kind(kind, vocab.len(), args.topics, args.seed);
    config.mc_train = args.mc_train;
    config.mc_eval = args.mc_eval;
    if let Some(l) = args.lambda {
        config.lambda = l;
    }
    config.embed_dim = emb.as_ref().map(|((e, _, _), _)| e.dim());
    config.validate().map_err(model_err)?;

    if !(0.0..1.0).contains(&args.test_fraction) {
        return Err(CliError::Usage(format!(
            "test fraction must be in [0, 1), got {}",
            args.test_fraction
        )));
    }
    let (train_corpus, test_corpus) = if args.test_fraction == 0.0 {
        (corpus.clone(), corpus)
    } else {
        corpus.split(args.test_fraction, args.seed).map_err(corpus_err)?
    };

    let mut manifest = ManifestBuilder::new("train", argv);
    manifest
        .option("model", kind.name())
        .option("topics", args.topics)
        .option("epochs", args.epochs)
        .option("batch_size", args.batch_size)
        .option("lr", args.lr)
        .option("lambda", config.lambda)
        .option("mc_train", args.mc_train)
        .option("mc_eval", args.mc_eval)
        .option("seed", args.seed)
        .option("test_fraction", args.test_fraction)
        .option("trace_format", args.trace_format.as_str())
        .option("npmi_every", args.npmi_every)
        .option("top_n", args.top_n)
        .option("timing", args.timing)
        .option("out_dir", out_dir.display().to_string());
    manifest.input("docword", &args.docword, &docword_digest);
    manifest.input("vocab", &args.vocab, &vocab_digest);
    if let Some(((_, summary, digest), path)) = &emb {
        manifest.input("embeddings", path, digest);
        manifest.option("embeddings_report", summary.clone());
    }
    if let Some(((_, digest), path)) = &stats {
        manifest.input("cooc", path, digest);
    }
    manifest.write(&out_dir)?;

    let opts = TrainOptions {
        epochs: args.epochs,
        batch_size: args.batch_size,
        lr: args.lr,
        npmi_every: args.npmi_every,
        top_n: args.top_n,
    };
    let started = Instant::now();
    let mut clock: Box<dyn FnMut() -> f64> = if args.timing {
        let t = Instant::now();
        Box::new(move || t.elapsed().as_secs_f64())
    } else {
        Box::new(|| 0.0)
    };
    let report = train(
        &config,
        &opts,
        &train_corpus,
        &test_corpus,
        emb.as_ref().map(|((e, _, _), _)| e),
        stats.as_ref().map(|((s, _), _)| s),
        &mut clock,
    )
    .map_err(train_err)?;
    let elapsed = started.elapsed().as_secs_f64();

    let trace_path = out_dir.join(format!("trace.{}", args.trace_format));
    let trace_text = match args.trace_format.as_str() {
        "csv" => trace_to_csv(&report.trace),
        _ => {
            let mut s = trace_to_json(&report.trace);
            s.push('\n');
            s
        }
    };
    write_file(&trace_path, trace_text.as_bytes())?;

    let ckpt = Checkpoint {
        kind,
        config,
        vocab_hash: vocab.hash64(),
        rng_state: report.rng_state,
        params: report.params,
    };
    let ckpt_path = out_dir.join("checkpoint.bin");
    write_file(&ckpt_path, &ckpt.to_bytes())?;

    let final_row = report.trace.last();
    let summary = json!({
        "checkpoint": ckpt_path.display().to_string(),
        "trace": trace_path.display().to_string(),
        "epochs": report.trace.len(),
        "dropped_docs": load_report.dropped_docs,
        "train_docs": train_corpus.num_docs(),
        "test_docs": test_corpus.num_docs(),
        "clamp_events": report.clamp_events,
        "final": final_row.map(|r| json!({
            "elbo": json_f64(r.elbo),
            "train_perplexity": json_f64(r.train_perplexity),
            "test_perplexity": json_f64(r.test_perplexity),
            "npmi": opt_f64(r.npmi),
            "wetc_pw": opt_f64(r.wetc_pw),
            "wetc_c": opt_f64(r.wetc_c),
        })).unwrap_or(Value::Null),
    });
    print_json(&summary);
    eprintln!("trained {} epochs in {elapsed:.2}s", report.trace.len());
    Ok(())
}

#[derive(Args, Debug, Clone)]
pub struct TopicsArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Word embedding text file; required for topic coherence and for
    /// materializing a factorized decoder.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Co-occurrence cache; adds NPMI per topic.
    #[arg(long)]
    pub cooc: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub top_n: usize,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn load_checkpoint(path: &Path) -> Result<(Checkpoint, String), CliError> {
    let bytes = crate::files::read_bytes(path)?;
    let digest = crate::files::sha256_hex(&bytes);
    Ok((Checkpoint::from_bytes(&bytes)?, digest))
}

/// Shared topic-report assembly for the topics and eval commands.
fn topic_report(
    ckpt: &Checkpoint,
    vocab: &Vocabulary,
    emb: &EmbeddingMatrix,
    stats: Option<&CooccurrenceStats>,
    top_n: usize,
    with_words: bool,
) -> Result<(Value, Value), CliError> {
    if top_n > vocab.len() {
        return Err(CliError::Usage(format!(
            "top-n {} exceeds the vocabulary size {}",
            top_n,
            vocab.len()
        )));
    }
    if top_n < 2 {
        return Err(CliError::Usage("top-n must be at least 2".to_string()));
    }
    let w = ckpt.params.decoder_matrix(Some(emb)).map_err(model_err)?;
    let report = evaluate_coherence(&w, top_n, stats, emb);
    let lists = top_words(&w, top_n);
    let per_topic: Vec<Value> = lists
        .iter()
        .enumerate()
        .map(|(k, list)| {
            let mut obj = serde_json::Map::new();
            obj.insert("topic".to_string(), json!(k));
            if with_words {
                let words: Vec<Value> = list
                    .indices()
                    .iter()
                    .map(|&i| {
                        json!({"word": vocab.word(i), "weight": json_f64(w.at(i, k))})
                    })
                    .collect();
                obj.insert("words".to_string(), Value::Array(words));
            }
            obj.insert("wetc_pw".to_string(), json_f64(report.per_topic_wetc_pw[k]));
            obj.insert("wetc_c".to_string(), json_f64(report.per_topic_wetc_c[k]));
            if let Some(n) = &report.per_topic_npmi {
                obj.insert("npmi".to_string(), json_f64(n[k]));
            }
            Value::Object(obj)
        })
        .collect();
    let means = json!({
        "mean_wetc_pw": json_f64(report.mean_wetc_pw),
        "mean_wetc_c": json_f64(report.mean_wetc_c),
        "mean_npmi": opt_f64(report.mean_npmi),
    });
    Ok((Value::Array(per_topic), means))
}

pub fn cmd_topics(args: &TopicsArgs, argv: &[String]) -> Result<(), CliError> {
    let out_dir = resolve_out_dir(&args.out_dir);
    let (ckpt, ckpt_digest) = load_checkpoint(&args.checkpoint)?;
    let (vocab, vocab_digest) = load_vocab(&args.vocab)?;
    if vocab.hash64() != ckpt.vocab_hash {
        return Err(CliError::Usage(
            "vocabulary file does not match the checkpoint's vocabulary".to_string(),
        ));
    }
    let (emb, emb_summary, emb_digest) = load_embeddings(&args.embeddings, &vocab)?;
    let stats = match &args.cooc {
        Some(p) => Some((load_cooc(p, &vocab)?, p.clone())),
        None => None,
    };

    let mut manifest = ManifestBuilder::new("topics", argv);
    manifest
        .option("top_n", args.top_n)
        .option("model", ckpt.kind.name())
        .option("embeddings_report", emb_summary)
        .option("out_dir", out_dir.display().to_string());
    manifest.input("checkpoint", &args.checkpoint, &ckpt_digest);
    manifest.input("vocab", &args.vocab, &vocab_digest);
    manifest.input("embeddings", &args.embeddings, &emb_digest);
    if let Some(((_, digest), path)) = &stats {
        manifest.input("cooc", path, digest);
    }
    manifest.write(&out_dir)?;

    let (per_topic, means) =
        topic_report(&ckpt, &vocab, &emb, stats.as_ref().map(|((s, _), _)| s), args.top_n, true)?;
    let out = json!({
        "model": ckpt.kind.name(),
        "topics": ckpt.config.topics,
        "top_n": args.top_n,
        "per_topic": per_topic,
        "mean_wetc_pw": means["mean_wetc_pw"],
        "mean_wetc_c": means["mean_wetc_c"],
        "mean_npmi": means["mean_npmi"],
    });
    write_json(&out_dir.join("topics.json"), &out)?;
    print_json(&out);
    Ok(())
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub docword: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub cooc: Option<PathBuf>,
    /// Evaluate only the held-out side of the training split instead of
    /// the whole corpus; must match the training fraction and seed.
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Seed for the evaluation noise (and the split when --test-fraction
    /// is given). Defaults to the checkpoint's training seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 10)]
    pub top_n: usize,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

pub fn cmd_eval(args: &EvalArgs, argv: &[String]) -> Result<(), CliError> {
    let out_dir = resolve_out_dir(&args.out_dir);
    let (ckpt, ckpt_digest) = load_checkpoint(&args.checkpoint)?;
    let (vocab, vocab_digest) = load_vocab(&args.vocab)?;
    if vocab.hash64() != ckpt.vocab_hash {
        return Err(CliError::Usage(
            "vocabulary file does not match the checkpoint's vocabulary".to_string(),
        ));
    }
    let (docword_text, docword_digest) = read_text_digested(&args.docword)?;
    let (corpus, _) = Corpus::from_docword(&docword_text, vocab.clone()).map_err(corpus_err)?;
    let (emb, emb_summary, emb_digest) = load_embeddings(&args.embeddings, &vocab)?;
    let stats = match &args.cooc {
        Some(p) => Some((load_cooc(p, &vocab)?, p.clone())),
        None => None,
    };
    let seed = args.seed.unwrap_or(ckpt.config.seed);
    let eval_corpus = match args.test_fraction {
        None => corpus,
        Some(f) => {
            if !(0.0 < f && f < 1.0) {
                return Err(CliError::Usage(format!(
                    "test fraction must be in (0, 1), got {f}"
                )));
            }
            corpus.split(f, seed).map_err(corpus_err)?.1
        }
    };

    let mut manifest = ManifestBuilder::new("eval", argv);
    manifest
        .option("model", ckpt.kind.name())
        .option("seed", seed)
        .option("top_n", args.top_n)
        .option(
            "test_fraction",
            args.test_fraction.map(Value::from).unwrap_or(Value::Null),
        )
        .option("embeddings_report", emb_summary)
        .option("out_dir", out_dir.display().to_string());
    manifest.input("checkpoint", &args.checkpoint, &ckpt_digest);
    manifest.input("docword", &args.docword, &docword_digest);
    manifest.input("vocab", &args.vocab, &vocab_digest);
    manifest.input("embeddings", &args.embeddings, &emb_digest);
    if let Some(((_, digest), path)) = &stats {
        manifest.input("cooc", path, digest);
    }
    manifest.write(&out_dir)?;

    let eval_seed = derive_seed(seed, domains::EVAL_EPS);
    let ppl = perplexity(&eval_corpus, &ckpt.params, &ckpt.config, Some(&emb), eval_seed)
        .map_err(model_err)?;
    let (per_topic, means) =
        topic_report(&ckpt, &vocab, &emb, stats.as_ref().map(|((s, _), _)| s), args.top_n, false)?;

    let out = json!({
        "model": ckpt.kind.name(),
        "docs": eval_corpus.num_docs(),
        "test_perplexity": json_f64(ppl.perplexity),
        "mean_latent_perplexity": json_f64(ppl.mean_latent_perplexity),
        "clamp_events": ppl.clamp_events,
        "mean_wetc_pw": means["mean_wetc_pw"],
        "mean_wetc_c": means["mean_wetc_c"],
        "mean_npmi": means["mean_npmi"],
        "per_topic": per_topic,
    });
    write_json(&out_dir.join("eval.json"), &out)?;
    print_json(&out);
    Ok(())
}

#[derive(Args, Debug, Clone)]
pub struct CoocArgs {
    /// Reference corpus: UTF-8 text, one document per line.
    #[arg(long)]
    pub text: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Sliding window length in tokens.
    #[arg(long, default_value_t = 10)]
    pub window: usize,
    /// Cache destination; defaults to cooc.txt in the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

pub fn cmd_cooc(args: &CoocArgs, argv: &[String]) -> Result<(), CliError> {
    if args.window < 2 {
        return Err(CliError::Usage(format!(
            "window must be at least 2, got {}",
            args.window
        )));
    }
    let out_dir = resolve_out_dir(&args.out_dir);
    let (vocab, vocab_digest) = load_vocab(&args.vocab)?;
    let (text, text_digest) = read_text_digested(&args.text)?;
    let docs: Vec<Vec<String>> =
        text.lines().map(tokenize).filter(|d| !d.is_empty()).collect();
    if docs.is_empty() {
        return Err(CliError::Usage("reference text has no tokens".to_string()));
    }
    let cache_path = args.out.clone().unwrap_or_else(|| out_dir.join("cooc.txt"));

    let mut manifest = ManifestBuilder::new("cooc", argv);
    manifest
        .option("window", args.window)
        .option("cache", cache_path.display().to_string())
        .option("out_dir", out_dir.display().to_string());
    manifest.input("text", &args.text, &text_digest);
    manifest.input("vocab", &args.vocab, &vocab_digest);
    manifest.write(&out_dir)?;

    let stats = count_cooccurrence(&docs, &vocab, args.window).map_err(corpus_err)?;
    let covered = (0..vocab.len()).filter(|&i| stats.unigram_windows(i) > 0).count();
    if covered == 0 {
        return Err(CliError::Usage(
            "reference text covers no vocabulary word".to_string(),
        ));
    }
    write_file(&cache_path, cooc_cache_to_string(&stats, vocab.hash64()).as_bytes())?;

    let out = json!({
        "cache": cache_path.display().to_string(),
        "window": args.window,
        "documents": docs.len(),
        "total_windows": stats.total_windows(),
        "vocab_len": vocab.len(),
        "covered_words": covered,
        "coverage": json_f64(covered as f64 / vocab.len() as f64),
    });
    print_json(&out);
    Ok(())
}

#[derive(Args, Debug, Clone)]
pub struct CorrelateArgs {
    /// Rated topics: "word word ... <TAB> rating" per line.
    #[arg(long)]
    pub ratings: PathBuf,
    #[arg(long)]
    pub cooc: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn coherence_err(e: CoherenceError) -> CliError {
    match e {
        CoherenceError::Parse { .. } => CliError::Io(e.to_string()),
        _ => CliError::Usage(e.to_string()),
    }
}

pub fn cmd_correlate(args: &CorrelateArgs, argv: &[String]) -> Result<(), CliError> {
    let out_dir = resolve_out_dir(&args.out_dir);
    let (vocab, vocab_digest) = load_vocab(&args.vocab)?;
    let ((stats, cooc_digest), _) = (load_cooc(&args.cooc, &vocab)?, ());
    let (emb, emb_summary, emb_digest) = load_embeddings(&args.embeddings, &vocab)?;
    let (ratings_text, ratings_digest) = read_text_digested(&args.ratings)?;
    let rated = RatedTopicSet::parse(&ratings_text).map_err(coherence_err)?;

    let mut manifest = ManifestBuilder::new("correlate", argv);
    manifest
        .option("embeddings_report", emb_summary)
        .option("out_dir", out_dir.display().to_string());
    manifest.input("ratings", &args.ratings, &ratings_digest);
    manifest.input("cooc", &args.cooc, &cooc_digest);
    manifest.input("embeddings", &args.embeddings, &emb_digest);
    manifest.input("vocab", &args.vocab, &vocab_digest);
    manifest.write(&out_dir)?;

    let study = correlation_study(&rated, &vocab, &stats, &emb).map_err(coherence_err)?;
    let row = |r: ntm_core::coherence::CorrelationRow| {
        json!({"pearson": json_f64(r.pearson), "spearman": json_f64(r.spearman)})
    };
    let out = json!({
        "rows": {
            "npmi": row(study.npmi),
            "wetc_pw": row(study.wetc_pw),
            "wetc_c": row(study.wetc_c),
        },
        "used": study.used,
        "skipped_unresolvable": study.skipped_unresolvable,
        "skipped_zero_embedding": study.skipped_zero_embedding,
    });
    write_json(&out_dir.join("correlation.json"), &out)?;
    print_json(&out);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_out_dir_resolution_prefers_flag() {
        let flag = Some(PathBuf::from("/tmp/somewhere"));
        assert_eq!(resolve_out_dir(&flag), PathBuf::from("/tmp/somewhere"));
    }

    #[test]
    fn test_error_mapping_exit_codes() {
        assert_eq!(corpus_err(CorpusError::Config("x".into())).exit_code(), 2);
        assert_eq!(
            corpus_err(CorpusError::Parse { line: 3, msg: "bad".into() }).exit_code(),
            4
        );
        assert_eq!(
            train_err(TrainError::NonFinite { epoch: 1, batch: 2, trace: vec![] }).exit_code(),
            3
        );
        assert_eq!(train_err(TrainError::Config("x".into())).exit_code(), 2);
        assert_eq!(embedding_err(EmbeddingError::NoOverlap).exit_code(), 2);
        assert_eq!(
            embedding_err(EmbeddingError::Parse { line: 1, msg: "x".into() }).exit_code(),
            4
        );
    }
}
