//! Server configuration file (TOML) and resource loading.
//!
//! ```toml
//! port = 8080
//! corpus = "data/toy_corpus"
//! export_dir = "exports"
//!
//! [stage]
//! operator_key = "change-me"
//! seed = 7
//! think_time_ms = 800
//!
//! [stage.scene]
//! max_duration_s = 360
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use improv_core::corpus::{build_vocab, corpus_files, ingest};
use improv_core::dialogue::Generators;
use improv_core::generation::{
    CandidateGenerator, DocFreqs, NgramGenerator, NgramModel, RemoteGenerator, DEFAULT_ORDER, DEFAULT_SMOOTHING,
};
use improv_core::sentiment::SentimentLexicon;
use improv_core::Exec;
use serde::{Deserialize, Serialize};

use crate::engine::{StageResources, StageSettings};

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_MAX_VOCAB: usize = 50_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub port: u16,
    /// Directory of corpus `*.txt` files; trains a model when `model` is unset.
    pub corpus: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    /// Serialized n-gram model.
    pub model: Option<PathBuf>,
    pub max_vocab: usize,
    pub remote_generator: Option<String>,
    pub remote_timeout_ms: u64,
    pub export_dir: Option<PathBuf>,
    /// Messages buffered per audience connection before the oldest is dropped.
    pub audience_outbox: usize,
    pub tick_ms: u64,
    pub stage: StageSettings,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            port: DEFAULT_PORT,
            corpus: None,
            lexicon: None,
            model: None,
            max_vocab: DEFAULT_MAX_VOCAB,
            remote_generator: None,
            remote_timeout_ms: 2000,
            export_dir: None,
            audience_outbox: 256,
            tick_ms: 100,
            stage: StageSettings::default(),
        }
    }
}

impl ServerConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let config: Self = toml::from_str(text).context("invalid server config")?;
        config.stage.scene.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }
}

pub fn load_lexicon(path: Option<&Path>) -> anyhow::Result<SentimentLexicon> {
    match path {
        Some(p) => Ok(SentimentLexicon::load(p)?),
        None => Ok(SentimentLexicon::bundled()),
    }
}

pub fn load_model(path: &Path) -> anyhow::Result<NgramModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read model {}", path.display()))?;
    NgramModel::from_text(&text).with_context(|| format!("invalid model {}", path.display()))
}

/// Train an n-gram model on a corpus directory.
pub fn train_from_dir(dir: &Path, max_vocab: usize, order: usize, smoothing: f64) -> anyhow::Result<NgramModel> {
    let corpus = ingest(&corpus_files(dir)?)?;
    let vocab = build_vocab(&corpus, max_vocab)?;
    Ok(NgramModel::train(&corpus, &vocab, order, smoothing)?)
}

/// Build the generators, lexicon and topic statistics a server needs.
pub fn load_resources(config: &ServerConfig) -> anyhow::Result<StageResources> {
    let corpus = match &config.corpus {
        Some(dir) => Some(ingest(&corpus_files(dir)?)?),
        None => None,
    };
    let model = match (&config.model, &corpus) {
        (Some(path), _) => load_model(path)?,
        (None, Some(corpus)) => {
            let vocab = build_vocab(corpus, config.max_vocab)?;
            NgramModel::train(corpus, &vocab, DEFAULT_ORDER, DEFAULT_SMOOTHING)?
        }
        (None, None) => bail!("a model file or a corpus directory is required"),
    };
    let doc_freqs = corpus.as_ref().map(|c| DocFreqs::from_corpus(c, Exec::default())).unwrap_or_default();
    let remote = match &config.remote_generator {
        Some(endpoint) => {
            let timeout = Duration::from_millis(config.remote_timeout_ms);
            let remote = RemoteGenerator::http(endpoint, timeout)?;
            Some(Arc::new(remote) as Arc<dyn CandidateGenerator>)
        }
        None => None,
    };
    Ok(StageResources {
        generators: Generators { in_process: Arc::new(NgramGenerator::new(Arc::new(model))), remote },
        lexicon: Arc::new(load_lexicon(config.lexicon.as_deref())?),
        doc_freqs: Arc::new(doc_freqs),
    })
}
