//! Scene state machine and reply selection.
//!
//! A scene moves `AwaitingSuggestion → Priming → AiTurn → (HumanTurn ↔
//! AiTurn)* → Ended`. The human performer primes the scene with a few lines,
//! then the AI answers and the two alternate strictly until the performer
//! (or the duration cap) ends it.

mod scene;
mod select;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use scene::{Generators, Line, Proposal, ReplyOrigin, Scene, FALLBACK_LINES};
pub use select::{score_candidates, ScoredCandidate, SelectionTrace, SelectionWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    AwaitingSuggestion,
    Priming,
    HumanTurn,
    AiTurn,
    Ended,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Human,
    Ai,
}

/// Who produced an AI-attributed line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlSource {
    Autonomous,
    Wizard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    PerformerInterrupt,
    DurationCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub priming_lines_required: usize,
    pub max_duration_s: u64,
    pub min_duration_s: u64,
    pub candidate_count: usize,
    pub max_len: usize,
    /// Transcript lines fed to the generator besides the suggestion.
    pub context_window: usize,
    pub target_len: usize,
    pub weights: SelectionWeights,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            priming_lines_required: 3,
            max_duration_s: 360,
            min_duration_s: 180,
            candidate_count: 5,
            max_len: 20,
            context_window: 6,
            target_len: 8,
            weights: SelectionWeights::default(),
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: &str| Err(SceneError::InvalidConfig(m.to_string()));
        if self.priming_lines_required < 1 {
            return bad("priming_lines_required must be at least 1");
        }
        if self.min_duration_s > self.max_duration_s {
            return bad("min_duration_s exceeds max_duration_s");
        }
        if self.candidate_count < 1 || self.max_len < 1 || self.target_len < 1 {
            return bad("candidate_count, max_len and target_len must be at least 1");
        }
        let w = self.weights;
        if ![w.lm, w.sentiment, w.topic, w.length].iter().all(|x| x.is_finite() && *x >= 0.0) {
            return bad("selection weights must be finite and non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("{0}")]
    InvalidArgument(String),
    #[error("invalid scene config: {0}")]
    InvalidConfig(String),
    #[error("`{operation}` is not allowed while the scene is {phase:?}")]
    WrongPhase { operation: &'static str, phase: Phase },
    #[error("duration cap not reached ({elapsed_ms} ms elapsed)")]
    CapNotReached { elapsed_ms: u64 },
}
