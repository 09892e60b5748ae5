//! Service configuration: one TOML or JSON file naming every artifact, with
//! host and port overridable from the environment.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use vernqa_core::langbridge::{DictionaryTranslator, TranslatorRegistry};
use vernqa_core::pipeline::{ComposerMode, Pipeline};
use vernqa_core::summarizer::SummaryConfig;

use crate::error::StartupError;

pub const ENV_HOST: &str = "VERNQA_HOST";
pub const ENV_PORT: &str = "VERNQA_PORT";
pub const DEFAULT_DISCLAIMER: &str =
    "This answer is preliminary information, not a medical diagnosis. Please consult a health worker.";

/// A dictionary adapter for `src -> tgt`. With `inverse`, the same file also
/// serves `tgt -> src`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterConfig {
    pub src: String,
    pub tgt: String,
    pub dictionary: PathBuf,
    #[serde(default)]
    pub inverse: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    pub vocab_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub index_path: PathBuf,
    pub adapters: Vec<AdapterConfig>,
    /// Where `sessions.jsonl` and `ehr.jsonl` live.
    pub data_dir: PathBuf,
    pub default_lang: String,
    pub top_k_default: usize,
    pub disclaimer_text: String,
    pub composer: String,
    pub summary: SummaryConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            host: "127.0.0.1".into(),
            port: 8080,
            vocab_path: "artifacts/vocab.txt".into(),
            checkpoint_path: "artifacts/model.ckpt".into(),
            index_path: "artifacts/answers.idx".into(),
            adapters: Vec::new(),
            data_dir: "data".into(),
            default_lang: "en".into(),
            top_k_default: 5,
            disclaimer_text: DEFAULT_DISCLAIMER.into(),
            composer: "stitch".into(),
            summary: SummaryConfig::default(),
        }
    }
}

impl ServiceConfig {
    /// Reads a `.json` file as JSON and anything else as TOML. Relative paths
    /// inside the file resolve against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, StartupError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| StartupError::Config(format!("{}: {e}", path.display())))?;
        let is_json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut cfg = if is_json {
            Self::from_json(&text)?
        } else {
            Self::from_toml(&text)?
        };
        if let Some(base) = path.parent() {
            cfg.resolve_relative_to(base);
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, StartupError> {
        toml::from_str(text).map_err(|e| StartupError::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, StartupError> {
        serde_json::from_str(text).map_err(|e| StartupError::Config(e.to_string()))
    }

    pub fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.vocab_path);
        fix(&mut self.checkpoint_path);
        fix(&mut self.index_path);
        fix(&mut self.data_dir);
        for a in &mut self.adapters {
            fix(&mut a.dictionary);
        }
    }

    /// Applies `VERNQA_HOST` / `VERNQA_PORT` from the process environment.
    pub fn apply_env(&mut self) -> Result<(), StartupError> {
        self.apply_env_from(|k| std::env::var(k).ok())
    }

    pub fn apply_env_from(
        &mut self,
        get: impl Fn(&str) -> Option<String>,
    ) -> Result<(), StartupError> {
        if let Some(h) = get(ENV_HOST) {
            self.host = h;
        }
        if let Some(p) = get(ENV_PORT) {
            self.port = p.trim().parse().map_err(|_| {
                StartupError::Config(format!("{ENV_PORT}={p:?} is not a port number"))
            })?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), StartupError> {
        if self.top_k_default == 0 {
            return Err(StartupError::Config(
                "top_k_default must be at least 1".into(),
            ));
        }
        if self.disclaimer_text.trim().is_empty() {
            return Err(StartupError::Config(
                "disclaimer_text must not be empty".into(),
            ));
        }
        if self.default_lang.trim().is_empty() {
            return Err(StartupError::Config(
                "default_lang must not be empty".into(),
            ));
        }
        self.composer_mode()?;
        Ok(())
    }

    pub fn composer_mode(&self) -> Result<ComposerMode, StartupError> {
        ComposerMode::parse(&self.composer)
            .ok_or_else(|| StartupError::Config(format!("unknown composer {:?}", self.composer)))
    }

    pub fn build_registry(&self) -> Result<TranslatorRegistry, StartupError> {
        let mut reg = TranslatorRegistry::new();
        for a in &self.adapters {
            require_file("dictionary", &a.dictionary)?;
            let dict = DictionaryTranslator::load_tsv(&a.dictionary).map_err(|e| {
                StartupError::Artifact {
                    path: a.dictionary.clone(),
                    reason: e.to_string(),
                }
            })?;
            if a.inverse {
                reg.register_adapter(&a.tgt, &a.src, Arc::new(dict.inverted()));
            }
            reg.register_adapter(&a.src, &a.tgt, Arc::new(dict));
        }
        Ok(reg)
    }

    /// Loads every artifact, failing on the first one that is missing or unreadable.
    pub fn load_pipeline(&self) -> Result<Pipeline, StartupError> {
        self.validate()?;
        require_file("vocabulary", &self.vocab_path)?;
        require_file("checkpoint", &self.checkpoint_path)?;
        require_file("index", &self.index_path)?;
        let registry = self.build_registry()?;
        Pipeline::from_artifacts(
            &self.vocab_path,
            &self.checkpoint_path,
            &self.index_path,
            registry,
            self.composer_mode()?,
        )
        .map_err(|e| StartupError::Pipeline(e.to_string()))
    }
}

fn require_file(kind: &'static str, path: &Path) -> Result<(), StartupError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(StartupError::MissingArtifact {
            kind,
            path: path.to_path_buf(),
        })
    }
}
