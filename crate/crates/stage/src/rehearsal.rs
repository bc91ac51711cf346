//! Scripted shows on a simulated clock: the human side is read from a
//! script, the AI side is generated. Used to check that a seed and a model
//! file pin down the whole transcript.

use improv_core::dialogue::{Generators, Phase, Scene, SceneConfig, SceneError, SelectionTrace};
use improv_core::generation::{extract_topics, DocFreqs};
use improv_core::sentiment::SentimentLexicon;
use improv_core::Millis;

/// Gap between consecutive lines on the simulated clock.
pub const LINE_GAP_MS: Millis = 2_500;

#[derive(Debug, Clone, PartialEq)]
pub struct Script {
    pub suggestion: String,
    /// Human lines in order: priming lines first, then one per human turn.
    pub human_lines: Vec<String>,
}

impl Default for Script {
    /// Three priming lines and four replies: a 12-line scene.
    fn default() -> Self {
        Self {
            suggestion: "a submarine that is slowly sinking".into(),
            human_lines: [
                "Captain, the water is up to my knees.",
                "We have one map and it is upside down.",
                "Tell me you remember how to steer this thing.",
                "That is not a plan, that is a song.",
                "Fine. Where is the crew?",
                "I never trusted the cook with the radio.",
                "Hold my hand, we are going up.",
            ]
            .map(String::from)
            .to_vec(),
        }
    }
}

impl Script {
    /// First non-blank, non-`#` line is the suggestion; the rest are human lines.
    pub fn parse(text: &str) -> Option<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let suggestion = lines.next()?.to_string();
        Some(Self { suggestion, human_lines: lines.map(String::from).collect() })
    }
}

#[derive(Debug, Clone)]
pub struct Rehearsal {
    pub scene: Scene,
    /// One trace per generated AI line.
    pub traces: Vec<SelectionTrace>,
}

impl Rehearsal {
    pub fn transcript_jsonl(&self) -> String {
        self.scene.transcript_jsonl()
    }
}

/// Play `script` with autonomous AI turns until the human lines run out,
/// ending on an AI line.
pub fn rehearse(
    script: &Script,
    config: SceneConfig,
    generators: &Generators,
    lexicon: &SentimentLexicon,
    doc_freqs: &DocFreqs,
) -> Result<Rehearsal, SceneError> {
    let mut now: Millis = 0;
    let mut scene = Scene::start(&script.suggestion, config, now)?;
    let mut traces = Vec::new();
    let mut human = script.human_lines.iter();
    loop {
        now += LINE_GAP_MS;
        match scene.phase() {
            Phase::Priming | Phase::HumanTurn => match human.next() {
                Some(line) if scene.phase() == Phase::Priming => scene.add_priming_line(line, now)?,
                Some(line) => scene.human_line(line, now)?,
                None => break,
            },
            Phase::AiTurn => {
                let topic = extract_topics(&scene.context(), doc_freqs, 5);
                let proposal = scene.ai_turn(generators, lexicon, &topic, now)?;
                traces.extend(proposal.trace);
            }
            Phase::AwaitingSuggestion | Phase::Ended => break,
        }
    }
    Ok(Rehearsal { scene, traces })
}
