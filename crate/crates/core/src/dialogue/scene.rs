use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::select::{score_candidates, SelectionTrace};
use super::{ControlSource, EndReason, Phase, SceneConfig, SceneError, Speaker};
use crate::generation::{Candidate, CandidateGenerator, CandidateSource, GenerationRequest, TopicProfile};
use crate::sentiment::SentimentLexicon;
use crate::Millis;

/// Lines used when every generator attempt fails.
pub const FALLBACK_LINES: &[&str] = &[
    "Tell me more about that.",
    "I was not expecting that.",
    "Go on, I am listening.",
    "Why would you say that?",
    "That changes everything.",
    "Let us not get ahead of ourselves.",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub speaker: Speaker,
    pub text: String,
    pub timestamp: Millis,
    /// Present exactly for AI lines.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub control_source: Option<ControlSource>,
}

/// Generators available to an AI turn. The remote one, when set, is tried
/// first; the in-process one is the retry path.
#[derive(Clone)]
pub struct Generators {
    pub in_process: Arc<dyn CandidateGenerator>,
    pub remote: Option<Arc<dyn CandidateGenerator>>,
}

impl Generators {
    pub fn in_process(generator: Arc<dyn CandidateGenerator>) -> Self {
        Self { in_process: generator, remote: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplyOrigin {
    Generated(CandidateSource),
    Fallback,
}

/// The reply an AI turn would give, before it is committed.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub text: String,
    pub trace: Option<SelectionTrace>,
    pub origin: ReplyOrigin,
    /// Error messages of failed generator attempts, in order.
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    config: SceneConfig,
    phase: Phase,
    suggestion: Option<String>,
    transcript: Vec<Line>,
    rng: ChaCha8Rng,
    started_at: Millis,
    end_reason: Option<EndReason>,
}

impl Scene {
    /// A scene waiting for its audience suggestion.
    pub fn new(config: SceneConfig) -> Result<Self, SceneError> {
        config.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            config,
            phase: Phase::AwaitingSuggestion,
            suggestion: None,
            transcript: Vec::new(),
            rng,
            started_at: 0,
            end_reason: None,
        })
    }

    /// Create a scene and take its suggestion in one step.
    pub fn start(suggestion: &str, config: SceneConfig, now: Millis) -> Result<Self, SceneError> {
        let mut scene = Self::new(config)?;
        scene.suggest(suggestion, now)?;
        Ok(scene)
    }

    pub fn suggest(&mut self, suggestion: &str, now: Millis) -> Result<(), SceneError> {
        self.expect_phase("suggestion", &[Phase::AwaitingSuggestion])?;
        let suggestion = non_empty(suggestion, "suggestion")?;
        self.suggestion = Some(suggestion);
        self.started_at = now;
        self.phase = Phase::Priming;
        Ok(())
    }

    pub fn add_priming_line(&mut self, text: &str, now: Millis) -> Result<(), SceneError> {
        self.expect_phase("priming_line", &[Phase::Priming])?;
        let text = non_empty(text, "priming line")?;
        self.push(Speaker::Human, text, now, None);
        if self.transcript.len() >= self.config.priming_lines_required {
            self.phase = Phase::AiTurn;
        }
        Ok(())
    }

    pub fn human_line(&mut self, text: &str, now: Millis) -> Result<(), SceneError> {
        self.expect_phase("human_line", &[Phase::HumanTurn])?;
        let text = non_empty(text, "human line")?;
        self.push(Speaker::Human, text, now, None);
        self.phase = Phase::AiTurn;
        Ok(())
    }

    /// Generate, score and pick a reply without committing it. Draws from
    /// the scene RNG, so the next proposal differs.
    pub fn propose(
        &mut self,
        generators: &Generators,
        lexicon: &SentimentLexicon,
        topic: &TopicProfile,
    ) -> Result<Proposal, SceneError> {
        self.expect_phase("ai_turn", &[Phase::AiTurn])?;
        let context = self.context();
        let last_human = self.last_human_line().unwrap_or_default().to_string();
        let mut failures = Vec::new();

        let attempts: [&Arc<dyn CandidateGenerator>; 2] = match &generators.remote {
            Some(remote) => [remote, &generators.in_process],
            None => [&generators.in_process, &generators.in_process],
        };
        for generator in attempts {
            let seed = self.rng.gen::<u64>();
            let request = GenerationRequest {
                context: &context,
                topic,
                k: self.config.candidate_count,
                seed,
                max_len: self.config.max_len,
            };
            match generator.generate(&request).map(usable) {
                Ok(candidates) if !candidates.is_empty() => {
                    let source = candidates[0].source;
                    let trace = score_candidates(
                        candidates,
                        lexicon,
                        topic,
                        &last_human,
                        self.config.weights,
                        self.config.target_len,
                    );
                    return Ok(Proposal {
                        text: trace.chosen().text.clone(),
                        trace: Some(trace),
                        origin: ReplyOrigin::Generated(source),
                        failures,
                    });
                }
                Ok(_) => failures.push("generator returned no candidates".to_string()),
                Err(e) => failures.push(e.to_string()),
            }
        }
        let text = FALLBACK_LINES[self.rng.gen_range(0..FALLBACK_LINES.len())].to_string();
        Ok(Proposal { text, trace: None, origin: ReplyOrigin::Fallback, failures })
    }

    /// Append an AI line (autonomous or wizard) and hand the turn back.
    pub fn commit_ai_line(&mut self, text: &str, source: ControlSource, now: Millis) -> Result<(), SceneError> {
        self.expect_phase("ai_line", &[Phase::AiTurn])?;
        let text = non_empty(text, "ai line")?;
        self.push(Speaker::Ai, text, now, Some(source));
        self.phase = Phase::HumanTurn;
        Ok(())
    }

    /// Propose and commit an autonomous reply.
    pub fn ai_turn(
        &mut self,
        generators: &Generators,
        lexicon: &SentimentLexicon,
        topic: &TopicProfile,
        now: Millis,
    ) -> Result<Proposal, SceneError> {
        let proposal = self.propose(generators, lexicon, topic)?;
        self.commit_ai_line(&proposal.text, ControlSource::Autonomous, now)?;
        Ok(proposal)
    }

    /// End the scene. `DurationCap` is only accepted once `max_duration_s`
    /// has elapsed.
    pub fn end(&mut self, reason: EndReason, now: Millis) -> Result<(), SceneError> {
        self.expect_phase("end_scene", &[Phase::Priming, Phase::HumanTurn, Phase::AiTurn])?;
        if reason == EndReason::DurationCap && !self.cap_reached(now) {
            return Err(SceneError::CapNotReached { elapsed_ms: self.elapsed_ms(now) });
        }
        self.phase = Phase::Ended;
        self.end_reason = Some(reason);
        Ok(())
    }

    /// Watchdog hook: end with `DurationCap` if the scene is live and over
    /// its cap. Returns whether it ended the scene.
    pub fn expire_if_due(&mut self, now: Millis) -> bool {
        let live = matches!(self.phase, Phase::Priming | Phase::HumanTurn | Phase::AiTurn);
        live && self.cap_reached(now) && self.end(EndReason::DurationCap, now).is_ok()
    }

    fn cap_reached(&self, now: Millis) -> bool {
        self.elapsed_ms(now) >= self.config.max_duration_s * 1000
    }

    pub fn elapsed_ms(&self, now: Millis) -> u64 {
        now.saturating_sub(self.started_at)
    }

    /// Whether the scene has run at least `min_duration_s`.
    pub fn min_duration_reached(&self, now: Millis) -> bool {
        self.elapsed_ms(now) >= self.config.min_duration_s * 1000
    }

    /// Generator context: the suggestion followed by the last
    /// `context_window` transcript lines.
    pub fn context(&self) -> Vec<String> {
        let start = self.transcript.len().saturating_sub(self.config.context_window);
        self.suggestion
            .iter()
            .cloned()
            .chain(self.transcript[start..].iter().map(|l| l.text.clone()))
            .collect()
    }

    pub fn last_human_line(&self) -> Option<&str> {
        self.transcript
            .iter()
            .rev()
            .find(|l| l.speaker == Speaker::Human)
            .map(|l| l.text.as_str())
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn config(&self) -> &SceneConfig {
        &self.config
    }

    pub fn suggestion(&self) -> Option<&str> {
        self.suggestion.as_deref()
    }

    pub fn transcript(&self) -> &[Line] {
        &self.transcript
    }

    pub fn end_reason(&self) -> Option<EndReason> {
        self.end_reason
    }

    pub fn started_at(&self) -> Millis {
        self.started_at
    }

    /// Transcript as JSON lines: `speaker`, `text`, `timestamp`, and
    /// `control_source` on AI lines.
    pub fn transcript_jsonl(&self) -> String {
        self.transcript
            .iter()
            .map(|l| serde_json::to_string(l).expect("line serializes") + "\n")
            .collect()
    }

    /// Check the structural invariants of the transcript against the phase.
    pub fn check_invariants(&self) -> Result<(), String> {
        let priming = self.config.priming_lines_required;
        for (i, line) in self.transcript.iter().enumerate() {
            let expected = if i < priming || (i - priming) % 2 == 1 { Speaker::Human } else { Speaker::Ai };
            if line.speaker != expected {
                return Err(format!("line {i} spoken by {:?}, expected {expected:?}", line.speaker));
            }
            if (line.speaker == Speaker::Ai) != line.control_source.is_some() {
                return Err(format!("line {i} control_source does not match speaker"));
            }
            if i > 0 && line.timestamp < self.transcript[i - 1].timestamp {
                return Err(format!("line {i} timestamp goes backwards"));
            }
        }
        let n = self.transcript.len();
        let ok = match self.phase {
            Phase::AwaitingSuggestion => n == 0 && self.suggestion.is_none(),
            Phase::Priming => n < priming && self.suggestion.is_some(),
            Phase::AiTurn => n >= priming && (n - priming).is_multiple_of(2),
            Phase::HumanTurn => n > priming && (n - priming) % 2 == 1,
            Phase::Ended => self.end_reason.is_some(),
        };
        if !ok {
            return Err(format!("phase {:?} inconsistent with {n} transcript lines", self.phase));
        }
        Ok(())
    }

    fn expect_phase(&self, operation: &'static str, allowed: &[Phase]) -> Result<(), SceneError> {
        if allowed.contains(&self.phase) {
            Ok(())
        } else {
            Err(SceneError::WrongPhase { operation, phase: self.phase })
        }
    }

    fn push(&mut self, speaker: Speaker, text: String, now: Millis, control_source: Option<ControlSource>) {
        let floor = self.transcript.last().map_or(self.started_at, |l| l.timestamp);
        self.transcript.push(Line { speaker, text, timestamp: now.max(floor), control_source });
    }
}

fn usable(mut candidates: Vec<Candidate>) -> Vec<Candidate> {
    candidates.retain(|c| !c.tokens.is_empty() && c.lm_logprob.is_finite());
    candidates
}

fn non_empty(text: &str, what: &str) -> Result<String, SceneError> {
    let t = text.trim();
    if t.is_empty() {
        Err(SceneError::InvalidArgument(format!("{what} must not be empty")))
    } else {
        Ok(t.to_string())
    }
}
