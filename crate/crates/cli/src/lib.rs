//! The `vernqa` command line. Exit codes: 0 success, 1 usage error, 2
//! runtime error.

pub mod args;
pub mod docgen;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Parser;
use serde::Serialize;

use vernqa_core::corpus::{dedupe, load_corpus, split, Corpus};
use vernqa_core::evalkit::{run_eval, RankedAnswer, Ranker};
use vernqa_core::pipeline::{build_corpus_index, IndexSide, Pipeline};
use vernqa_core::simindex::{build_index, load_index, quantize, save_index, StoredIndex};
use vernqa_core::summarizer::{split_sentences, summarize, KRule};
use vernqa_core::synth::templated_corpus;
use vernqa_core::textpipe::{build_vocab, Vocabulary};
use vernqa_core::tinybert::{init_params, EncoderConfig};
use vernqa_core::trainer::{
    load_checkpoint, save_checkpoint, train_epoch_encoded, AdamState, EncodedPairs, EpochReport,
    TrainConfig,
};
use vernqa_service::routes::SummarizeResponse;
use vernqa_service::ServiceConfig;

use args::*;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Parses `argv` and runs the command, returning the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_RUNTIME
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::CorpusDedupe(a) => corpus_dedupe(a),
        Command::CorpusSplit(a) => corpus_split(a),
        Command::CorpusSynth(a) => corpus_synth(a),
        Command::VocabBuild(a) => vocab_build(a),
        Command::Train(a) => train(a),
        Command::IndexBuild(a) => index_build(a),
        Command::IndexQuantize(a) => index_quantize(a),
        Command::Ask(a) => ask(a),
        Command::Summarize(a) => summarize_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Serve(a) => serve(a),
    }
}

/// Prints `value` as pretty JSON when `json` is set, otherwise `text()`.
fn emit<T: Serialize>(json: &JsonFlag, value: &T, text: impl FnOnce() -> String) -> Result<()> {
    let mut out = std::io::stdout().lock();
    if json.json {
        serde_json::to_writer_pretty(&mut out, value)?;
        writeln!(out)?;
    } else {
        write!(out, "{}", text())?;
    }
    Ok(())
}

fn read_corpus(path: &Path) -> Result<Corpus> {
    load_corpus(path).with_context(|| format!("reading corpus {}", path.display()))
}

fn read_vocab(path: &Path) -> Result<Vocabulary> {
    Vocabulary::load(path).with_context(|| format!("reading vocabulary {}", path.display()))
}

#[derive(Serialize)]
struct DedupeOut<'a> {
    input: &'a Path,
    output: &'a Path,
    pairs_in: usize,
    pairs_out: usize,
    removed: usize,
}

fn corpus_dedupe(a: DedupeArgs) -> Result<()> {
    let c = read_corpus(&a.input)?;
    let d = dedupe(&c);
    d.save(&a.output)
        .with_context(|| format!("writing {}", a.output.display()))?;
    let out = DedupeOut {
        input: &a.input,
        output: &a.output,
        pairs_in: c.len(),
        pairs_out: d.len(),
        removed: c.len() - d.len(),
    };
    emit(&a.json, &out, || {
        format!(
            "kept {} of {} pairs, removed {} duplicates -> {}\n",
            out.pairs_out,
            out.pairs_in,
            out.removed,
            a.output.display()
        )
    })
}

#[derive(Serialize)]
struct SplitSide<'a> {
    path: &'a Path,
    pairs: usize,
}

#[derive(Serialize)]
struct SplitOut<'a> {
    train: SplitSide<'a>,
    test: SplitSide<'a>,
    test_fraction: f64,
    seed: u64,
}

fn corpus_split(a: SplitArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.test_fraction) {
        bail!(
            "--test-fraction must lie in [0, 1], got {}",
            a.test_fraction
        );
    }
    let c = read_corpus(&a.input)?;
    let (train, test) = split(&c, a.test_fraction, a.seed);
    train
        .save(&a.train_out)
        .with_context(|| format!("writing {}", a.train_out.display()))?;
    test.save(&a.test_out)
        .with_context(|| format!("writing {}", a.test_out.display()))?;
    let out = SplitOut {
        train: SplitSide {
            path: &a.train_out,
            pairs: train.len(),
        },
        test: SplitSide {
            path: &a.test_out,
            pairs: test.len(),
        },
        test_fraction: a.test_fraction,
        seed: a.seed,
    };
    emit(&a.json, &out, || {
        format!("train {} pairs, test {} pairs\n", train.len(), test.len())
    })
}

#[derive(Serialize)]
struct SynthOut<'a> {
    output: &'a Path,
    pairs: usize,
}

fn corpus_synth(a: SynthArgs) -> Result<()> {
    if a.pairs == 0 || a.pairs > 64 {
        bail!("--pairs must be between 1 and 64");
    }
    let c = templated_corpus(a.pairs);
    c.save(&a.output)
        .with_context(|| format!("writing {}", a.output.display()))?;
    let out = SynthOut {
        output: &a.output,
        pairs: c.len(),
    };
    emit(&a.json, &out, || {
        format!("wrote {} pairs -> {}\n", c.len(), a.output.display())
    })
}

#[derive(Serialize)]
struct VocabOut<'a> {
    output: &'a Path,
    size: usize,
    hash: String,
    max_size: usize,
    min_freq: usize,
}

fn vocab_build(a: VocabArgs) -> Result<()> {
    let c = read_corpus(&a.corpus)?;
    let v = build_vocab(&c, a.max_size, a.min_freq);
    v.save(&a.output)
        .with_context(|| format!("writing {}", a.output.display()))?;
    let out = VocabOut {
        output: &a.output,
        size: v.len(),
        hash: v.content_hash(),
        max_size: a.max_size,
        min_freq: a.min_freq,
    };
    emit(&a.json, &out, || {
        format!(
            "{} tokens (hash {}) -> {}\n",
            out.size,
            out.hash,
            a.output.display()
        )
    })
}

#[derive(Serialize)]
struct TrainOut<'a> {
    checkpoint: &'a Path,
    encoder: EncoderConfig,
    parameters: usize,
    epochs: Vec<EpochReport>,
}

fn train(a: TrainArgs) -> Result<()> {
    let corpus = read_corpus(&a.corpus)?;
    let vocab = read_vocab(&a.vocab)?;
    let tc = TrainConfig {
        batch_size: a.batch_size,
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        shuffle_seed: a.seed,
        checkpoint_path: Some(a.output.clone()),
        ..TrainConfig::default()
    };
    tc.validate()?;
    let (mut params, mut opt) = match &a.resume {
        Some(path) => {
            let ck = load_checkpoint(path)
                .with_context(|| format!("reading checkpoint {}", path.display()))?;
            if ck.header.vocab_hash != vocab.content_hash() {
                bail!(
                    "checkpoint {} was trained with a different vocabulary",
                    path.display()
                );
            }
            (ck.params, ck.opt)
        }
        None => {
            let toy = EncoderConfig::toy(vocab.len());
            let cfg = EncoderConfig {
                d_model: a.d_model.unwrap_or(toy.d_model),
                n_layers: a.layers.unwrap_or(toy.n_layers),
                n_heads: a.heads.unwrap_or(toy.n_heads),
                d_ff: a.d_ff.unwrap_or(toy.d_ff),
                max_len: a.max_len.unwrap_or(toy.max_len),
                d_embed: a.d_embed.unwrap_or(toy.d_embed),
                seed: a.seed,
                ..toy
            };
            let p = init_params(&cfg)?;
            let o = AdamState::new(&p);
            (p, o)
        }
    };
    let data = EncodedPairs::new(&corpus, &vocab, params.config.max_len);
    let mut log = Vec::with_capacity(a.epochs);
    for _ in 0..a.epochs {
        let r = train_epoch_encoded(&mut params, &mut opt, &data, &tc)?;
        save_checkpoint(&params, &opt, &tc.adam(), &vocab.content_hash(), &a.output)
            .with_context(|| format!("writing checkpoint {}", a.output.display()))?;
        if !a.json.json {
            println!(
                "epoch {:>4}  loss {:.5}  in-batch acc {:.4}",
                r.epoch + 1,
                r.mean_loss,
                r.diag_accuracy
            );
        }
        log.push(r);
    }
    if a.epochs == 0 {
        save_checkpoint(&params, &opt, &tc.adam(), &vocab.content_hash(), &a.output)?;
    }
    let out = TrainOut {
        checkpoint: &a.output,
        encoder: params.config,
        parameters: params.num_parameters(),
        epochs: log,
    };
    emit(&a.json, &out, || {
        format!("{} parameters -> {}\n", out.parameters, a.output.display())
    })
}

#[derive(Serialize)]
struct IndexOut<'a> {
    output: &'a Path,
    entries: usize,
    dim: usize,
    quantized: bool,
}

fn write_index(json: &JsonFlag, stored: StoredIndex, output: &Path) -> Result<()> {
    save_index(&stored, output).with_context(|| format!("writing index {}", output.display()))?;
    let s = stored.as_search();
    let out = IndexOut {
        output,
        entries: s.len(),
        dim: s.dim(),
        quantized: stored.is_quantized(),
    };
    emit(json, &out, || {
        let kind = if out.quantized { "int8" } else { "f32" };
        format!(
            "{} {kind} vectors of dimension {} -> {}\n",
            out.entries,
            out.dim,
            output.display()
        )
    })
}

fn index_build(a: IndexBuildArgs) -> Result<()> {
    let corpus = read_corpus(&a.corpus)?;
    let vocab = read_vocab(&a.vocab)?;
    let ck = load_checkpoint(&a.checkpoint)
        .with_context(|| format!("reading checkpoint {}", a.checkpoint.display()))?;
    if ck.header.vocab_hash != vocab.content_hash() {
        bail!(
            "checkpoint {} was trained with a different vocabulary",
            a.checkpoint.display()
        );
    }
    let side = match a.side {
        Side::Answer => IndexSide::Answer,
        Side::Question => IndexSide::Question,
    };
    let index = build_corpus_index(&ck.params, &vocab, &corpus, side)?;
    let stored = if a.quantize {
        StoredIndex::Quantized(quantize(&index))
    } else {
        StoredIndex::Exact(index)
    };
    write_index(&a.json, stored, &a.output)
}

fn index_quantize(a: QuantizeArgs) -> Result<()> {
    let stored =
        load_index(&a.input).with_context(|| format!("reading index {}", a.input.display()))?;
    let StoredIndex::Exact(index) = stored else {
        bail!("{} is already quantized", a.input.display());
    };
    write_index(&a.json, StoredIndex::Quantized(quantize(&index)), &a.output)
}

/// Config file (if any) with flag and environment overrides applied.
fn service_config(a: &ArtifactArgs) -> Result<ServiceConfig> {
    let mut cfg = match &a.config {
        Some(p) => ServiceConfig::load(p)?,
        None => ServiceConfig::default(),
    };
    if let Some(p) = &a.vocab_path {
        cfg.vocab_path = p.clone();
    }
    if let Some(p) = &a.checkpoint_path {
        cfg.checkpoint_path = p.clone();
    }
    if let Some(p) = &a.index_path {
        cfg.index_path = p.clone();
    }
    if let Some(c) = &a.composer {
        cfg.composer = c.clone();
    }
    for d in &a.dicts {
        let mut parts = d.splitn(3, ':');
        let (Some(src), Some(tgt), Some(path)) = (parts.next(), parts.next(), parts.next()) else {
            bail!("--dict expects SRC:TGT:PATH, got {d:?}");
        };
        cfg.adapters.push(vernqa_service::config::AdapterConfig {
            src: src.into(),
            tgt: tgt.into(),
            dictionary: PathBuf::from(path),
            inverse: true,
        });
    }
    Ok(cfg)
}

fn load_pipeline(a: &ArtifactArgs) -> Result<(Pipeline, ServiceConfig)> {
    let cfg = service_config(a)?;
    Ok((cfg.load_pipeline()?, cfg))
}

fn ask(a: AskArgs) -> Result<()> {
    let (p, cfg) = load_pipeline(&a.artifacts)?;
    let lang = a.lang.clone().unwrap_or(cfg.default_lang.clone());
    let top_k = a.top_k.unwrap_or(cfg.top_k_default);
    if top_k == 0 {
        bail!("--top-k must be at least 1");
    }
    let bundle = p.ask(&a.question, &lang, top_k)?;
    emit(&a.json, &bundle, || format!("{}\n", bundle.final_text))
}

fn summarize_cmd(a: SummarizeArgs) -> Result<()> {
    let text = match (&a.text, &a.file) {
        (Some(t), _) => t.clone(),
        (None, Some(f)) => {
            std::fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?
        }
        (None, None) => unreachable!("clap requires one source"),
    };
    let cfg = service_config(&a.artifacts)?;
    let vocab = read_vocab(&cfg.vocab_path)?;
    let ck = load_checkpoint(&cfg.checkpoint_path)
        .with_context(|| format!("reading checkpoint {}", cfg.checkpoint_path.display()))?;
    if ck.header.vocab_hash != vocab.content_hash() {
        bail!("checkpoint was trained with a different vocabulary");
    }
    // The summarizer only needs the encoder, not an index.
    let empty = StoredIndex::Exact(build_index(Vec::new())?);
    let p = Pipeline::new(
        vocab,
        ck.params,
        empty,
        Default::default(),
        cfg.composer_mode()?,
    )?;

    let mut sc = cfg.summary.clone();
    if let Some(k) = a.k {
        sc.k_rule = KRule::Fixed(k);
    }
    if let Some(m) = a.max_sentences {
        sc.max_sentences = m;
    }
    if let Some(s) = a.seed {
        sc.kmeans_seed = s;
    }
    let set = split_sentences(&text);
    if set.is_empty() {
        bail!("no sentences to summarize");
    }
    let embeddings = set
        .sentences
        .iter()
        .map(|s| p.embed_sentence(&s.text))
        .collect::<Result<Vec<_>, _>>()?;
    let by_text: std::collections::HashMap<&str, &Vec<f64>> = set
        .sentences
        .iter()
        .map(|s| s.text.as_str())
        .zip(&embeddings)
        .collect();
    let summary = summarize(&set, |t| by_text[t].clone(), &sc);
    let out = SummarizeResponse {
        summary_sentences: summary.sentences.into_iter().map(|s| s.text).collect(),
        k_used: summary.k_used,
    };
    emit(&a.json, &out, || {
        out.summary_sentences
            .iter()
            .map(|s| format!("{s}\n"))
            .collect()
    })
}

fn eval(a: EvalArgs) -> Result<()> {
    let (p, _) = load_pipeline(&a.artifacts)?;
    let corpus = read_corpus(&a.corpus)?;
    if !p
        .registry
        .supports(&a.lang, vernqa_core::pipeline::PIVOT_LANG)
    {
        bail!(
            "no translator from {} to {}",
            a.lang,
            vernqa_core::pipeline::PIVOT_LANG
        );
    }
    let ranker = LangRanker {
        p: &p,
        lang: &a.lang,
    };
    let report = run_eval(&ranker, &corpus, &a.k)?;
    emit(&a.json, &report, || report.to_table())
}

/// Evaluates corpus questions written in `lang`.
struct LangRanker<'a> {
    p: &'a Pipeline,
    lang: &'a str,
}

impl Ranker for LangRanker<'_> {
    fn rank(&self, question: &str, _lang: &str) -> Result<Vec<RankedAnswer>, String> {
        self.p.rank(question, self.lang)
    }
}

fn serve(a: ServeArgs) -> Result<()> {
    let mut cfg = service_config(&a.artifacts)?;
    if let Some(h) = a.host {
        cfg.host = h;
    }
    if let Some(p) = a.port {
        cfg.port = p;
    }
    if let Some(d) = a.data_dir {
        cfg.data_dir = d;
    }
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .try_init();
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(vernqa_service::serve(&cfg))?;
    Ok(())
}
