//! Writes a small but complete artifact set (vocabulary, briefly trained
//! checkpoint, answer index, Spanish dictionary, config file) into a
//! directory, for integration tests and local demos.

use std::path::{Path, PathBuf};

use vernqa_core::corpus::{Corpus, QaPair};
use vernqa_core::pipeline::{build_corpus_index, IndexSide};
use vernqa_core::simindex::{save_index, StoredIndex};
use vernqa_core::synth::templated_corpus;
use vernqa_core::textpipe::build_vocab;
use vernqa_core::tinybert::{init_params, EncoderConfig};
use vernqa_core::trainer::{save_checkpoint, train_epoch, AdamState, TrainConfig};

use crate::config::ServiceConfig;
use crate::error::StartupError;

/// Six notes alternating between a fever group and a knee-injury group.
pub const TWO_BLOB_NOTES: [&str; 6] = [
    "Fever and chills since monday.",
    "Knee pain after the fall.",
    "High fever and chills at night.",
    "Swollen knee pain when walking.",
    "Fever with chills and sweating.",
    "Knee pain with a bruise on the knee.",
];

pub const ES_DICTIONARY: &str = "fiebre\tfever\ntos\tcough\nniño\tchild\nagua\twater\ndar\tgive\nel\tthe\nla\tthe\npara\tfor\nen\tin\n";

pub const CONFIG_FILE: &str = "service.toml";

pub struct FixtureFiles {
    pub config_path: PathBuf,
    pub config: ServiceConfig,
    pub corpus: Corpus,
}

/// Builds the fixture under `dir` and returns the loaded config.
pub fn write_fixture(
    dir: &Path,
    pairs: usize,
    epochs: usize,
) -> Result<FixtureFiles, StartupError> {
    let corpus = templated_corpus(pairs);
    let mut vocab_source: Vec<QaPair> = corpus.pairs().to_vec();
    vocab_source.extend(
        TWO_BLOB_NOTES
            .iter()
            .enumerate()
            .map(|(i, n)| QaPair::new(format!("note-{i}"), *n, *n)),
    );
    let vocab_corpus = Corpus::from_pairs("vocab", vocab_source)
        .map_err(|e| StartupError::Config(e.to_string()))?;
    let vocab = build_vocab(&vocab_corpus, 8192, 1);

    let cfg = EncoderConfig {
        d_model: 32,
        n_layers: 1,
        n_heads: 2,
        d_ff: 64,
        max_len: 40,
        d_embed: 16,
        ..EncoderConfig::toy(vocab.len())
    };
    let art = |e: String| StartupError::Pipeline(e);
    let mut params = init_params(&cfg).map_err(|e| art(e.to_string()))?;
    let mut opt = AdamState::new(&params);
    let tc = TrainConfig {
        batch_size: 8,
        learning_rate: 3e-3,
        ..TrainConfig::default()
    };
    for _ in 0..epochs {
        train_epoch(&mut params, &mut opt, &corpus, &vocab, &tc).map_err(|e| art(e.to_string()))?;
    }

    let artifacts = dir.join("artifacts");
    std::fs::create_dir_all(&artifacts)?;
    vocab.save(artifacts.join("vocab.txt"))?;
    save_checkpoint(
        &params,
        &opt,
        &tc.adam(),
        &vocab.content_hash(),
        artifacts.join("model.ckpt"),
    )
    .map_err(|e| art(e.to_string()))?;
    let index = build_corpus_index(&params, &vocab, &corpus, IndexSide::Answer)
        .map_err(|e| art(e.to_string()))?;
    save_index(&StoredIndex::Exact(index), artifacts.join("answers.idx"))
        .map_err(|e| art(e.to_string()))?;
    std::fs::write(artifacts.join("es_en.tsv"), ES_DICTIONARY)?;

    let config_path = dir.join(CONFIG_FILE);
    std::fs::write(
        &config_path,
        r#"host = "127.0.0.1"
port = 0
vocab_path = "artifacts/vocab.txt"
checkpoint_path = "artifacts/model.ckpt"
index_path = "artifacts/answers.idx"
data_dir = "data"
top_k_default = 5
composer = "top1"

[[adapters]]
src = "es"
tgt = "en"
dictionary = "artifacts/es_en.tsv"
inverse = true

[summary]
k_rule = "sqrt"
"#,
    )?;
    let config = ServiceConfig::load(&config_path)?;
    Ok(FixtureFiles {
        config_path,
        config,
        corpus,
    })
}
