//! Candidate reply generation.
//!
//! The in-process generator is an add-k smoothed n-gram model
//! ([`NgramModel`]) sampled with a topic boost. [`remote`] speaks the JSON
//! protocol for delegating to an external generator.

mod ngram;
pub mod remote;
mod sample;
mod topics;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::detokenize;
use crate::par::Exec;

pub use ngram::{ContextCounts, NgramModel, BOS, EOS};
pub use remote::{GeneratorRequest, GeneratorResponse, RemoteError, RemoteGenerator};
pub use sample::{
    generate_candidates, generate_candidates_with, sample_one, sampling_distribution, topic_ids, SamplingConfig,
    DEFAULT_BOOST,
};
pub use topics::{extract_topics, is_stopword, DocFreqs, TopicProfile};

pub const DEFAULT_ORDER: usize = 3;
pub const DEFAULT_SMOOTHING: f64 = 0.1;

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("cannot train on an empty corpus")]
    EmptyCorpus,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("model line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Remote(#[from] RemoteError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSource {
    InProcess,
    Remote,
}

/// One generated reply with its (unboosted) model log-probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub tokens: Vec<String>,
    pub lm_logprob: f64,
    pub source: CandidateSource,
}

impl Candidate {
    pub fn text(&self) -> String {
        detokenize(&self.tokens)
    }
}

/// Everything a generator sees for one AI turn.
#[derive(Debug, Clone)]
pub struct GenerationRequest<'a> {
    pub context: &'a [String],
    pub topic: &'a TopicProfile,
    pub k: usize,
    pub seed: u64,
    pub max_len: usize,
}

pub trait CandidateGenerator: Send + Sync {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<Vec<Candidate>, GenerationError>;
}

/// In-process sampler over a shared n-gram model. The dialogue context
/// reaches it through the topic profile; every reply starts from `<s>`.
#[derive(Debug, Clone)]
pub struct NgramGenerator {
    pub model: Arc<NgramModel>,
    pub boost: f64,
    pub exec: Exec,
}

impl NgramGenerator {
    pub fn new(model: Arc<NgramModel>) -> Self {
        Self { model, boost: DEFAULT_BOOST, exec: Exec::default() }
    }
}

impl CandidateGenerator for NgramGenerator {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<Vec<Candidate>, GenerationError> {
        if request.k == 0 || request.max_len == 0 {
            return Err(GenerationError::InvalidArgument("k and max_len must be at least 1".into()));
        }
        let config = SamplingConfig { k: request.k, max_len: request.max_len, boost: self.boost };
        Ok(generate_candidates_with(self.exec, &self.model, request.topic, request.seed, &config))
    }
}

impl CandidateGenerator for RemoteGenerator {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<Vec<Candidate>, GenerationError> {
        let wire = GeneratorRequest {
            v: remote::PROTOCOL_VERSION,
            context: request.context.to_vec(),
            topic: request.topic.tokens().map(String::from).collect(),
            k: request.k,
            seed: request.seed,
            max_len: request.max_len,
        };
        Ok(self.request_candidates(&wire)?)
    }
}
