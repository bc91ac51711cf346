//! Audience games.
//!
//! `TuringVote`: the audience is told about the test, watches two scenes
//! (one secretly operator-driven, one autonomous, order drawn from a seed)
//! and votes for the scene it thinks was AI-led.
//!
//! `InCharacterReveal`: one operator-driven scene presented as the AI, then
//! the audience is asked whether the AI or a human was in control.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialogue::ControlSource;
use crate::Millis;

pub const TURING_OPTIONS: [&str; 2] = ["A", "B"];
pub const REVEAL_OPTIONS: [&str; 2] = ["AI", "Human"];
pub const DEFAULT_TURING_QUESTION: &str = "Which scene was performed by the AI?";
pub const DEFAULT_REVEAL_QUESTION: &str = "Was that the AI performing, or was a human in control?";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameKind {
    TuringVote,
    InCharacterReveal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameState {
    Setup,
    SceneA,
    SceneB,
    Polling,
    Revealed,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("`{operation}` is not allowed in game state {state:?}")]
    WrongState { operation: &'static str, state: GameState },
    #[error("the poll is closed")]
    PollClosed,
    #[error("the poll is still open")]
    PollOpen,
    #[error("unknown option `{0}`")]
    UnknownOption(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShowGame {
    kind: GameKind,
    order_seed: u64,
    assignment: Vec<ControlSource>,
    state: GameState,
}

impl ShowGame {
    pub fn start(kind: GameKind, order_seed: u64) -> Self {
        let assignment = match kind {
            GameKind::TuringVote => {
                let wizard_first = ChaCha8Rng::seed_from_u64(order_seed).gen_bool(0.5);
                if wizard_first {
                    vec![ControlSource::Wizard, ControlSource::Autonomous]
                } else {
                    vec![ControlSource::Autonomous, ControlSource::Wizard]
                }
            }
            GameKind::InCharacterReveal => vec![ControlSource::Wizard],
        };
        Self { kind, order_seed, assignment, state: GameState::Setup }
    }

    pub fn kind(&self) -> GameKind {
        self.kind
    }

    pub fn state(&self) -> GameState {
        self.state
    }

    pub fn order_seed(&self) -> u64 {
        self.order_seed
    }

    pub fn slot_count(&self) -> usize {
        self.assignment.len()
    }

    /// The hidden control assignment. Operator-side only; audience-facing
    /// code must go through [`ShowGame::public_assignment`].
    pub fn hidden_assignment(&self) -> &[ControlSource] {
        &self.assignment
    }

    /// The assignment once revealed, `None` before.
    pub fn public_assignment(&self) -> Option<&[ControlSource]> {
        (self.state == GameState::Revealed).then_some(self.assignment.as_slice())
    }

    /// Option label of the autonomous slot in a `TuringVote`.
    pub fn autonomous_option(&self) -> Option<&'static str> {
        match self.kind {
            GameKind::TuringVote => self
                .assignment
                .iter()
                .position(|c| *c == ControlSource::Autonomous)
                .map(|i| TURING_OPTIONS[i]),
            GameKind::InCharacterReveal => None,
        }
    }

    pub fn options(&self) -> Vec<String> {
        match self.kind {
            GameKind::TuringVote => TURING_OPTIONS.map(String::from).to_vec(),
            GameKind::InCharacterReveal => REVEAL_OPTIONS.map(String::from).to_vec(),
        }
    }

    pub fn default_question(&self) -> &'static str {
        match self.kind {
            GameKind::TuringVote => DEFAULT_TURING_QUESTION,
            GameKind::InCharacterReveal => DEFAULT_REVEAL_QUESTION,
        }
    }

    /// Move to the next scene slot; returns the slot index and its control.
    pub fn begin_scene(&mut self) -> Result<(usize, ControlSource), GameError> {
        let slot = match (self.kind, self.state) {
            (_, GameState::Setup) => 0,
            (GameKind::TuringVote, GameState::SceneA) => 1,
            (_, state) => return Err(GameError::WrongState { operation: "begin_scene", state }),
        };
        self.state = if slot == 0 { GameState::SceneA } else { GameState::SceneB };
        Ok((slot, self.assignment[slot]))
    }

    /// Open the poll after the last scene slot.
    pub fn open_poll(&mut self, question: Option<&str>, now: Millis) -> Result<VoteTally, GameError> {
        let ready = match self.kind {
            GameKind::TuringVote => self.state == GameState::SceneB,
            GameKind::InCharacterReveal => self.state == GameState::SceneA,
        };
        if !ready {
            return Err(GameError::WrongState { operation: "open_poll", state: self.state });
        }
        let question = question.unwrap_or(self.default_question());
        let tally = VoteTally::open(question, self.options(), now)?;
        self.state = GameState::Polling;
        Ok(tally)
    }

    /// Reveal the assignment. Needs a closed poll.
    pub fn reveal(&mut self, tally: &VoteTally) -> Result<&[ControlSource], GameError> {
        if self.state != GameState::Polling {
            return Err(GameError::WrongState { operation: "reveal", state: self.state });
        }
        if tally.is_open() {
            return Err(GameError::PollOpen);
        }
        self.state = GameState::Revealed;
        Ok(&self.assignment)
    }
}

/// One ballot per voter; re-voting before close overwrites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteTally {
    pub question: String,
    pub options: Vec<String>,
    ballots: BTreeMap<String, String>,
    pub opened_at: Millis,
    pub closed_at: Option<Millis>,
}

impl VoteTally {
    pub fn open(question: &str, options: Vec<String>, now: Millis) -> Result<Self, GameError> {
        if options.len() < 2 {
            return Err(GameError::InvalidArgument("a poll needs at least two options".into()));
        }
        Ok(Self {
            question: question.to_string(),
            options,
            ballots: BTreeMap::new(),
            opened_at: now,
            closed_at: None,
        })
    }

    pub fn is_open(&self) -> bool {
        self.closed_at.is_none()
    }

    pub fn cast_vote(&mut self, voter_id: &str, option: &str) -> Result<(), GameError> {
        if !self.is_open() {
            return Err(GameError::PollClosed);
        }
        if !self.options.iter().any(|o| o == option) {
            return Err(GameError::UnknownOption(option.to_string()));
        }
        if voter_id.is_empty() {
            return Err(GameError::InvalidArgument("empty voter id".into()));
        }
        self.ballots.insert(voter_id.to_string(), option.to_string());
        Ok(())
    }

    pub fn close(&mut self, now: Millis) -> Result<(), GameError> {
        if !self.is_open() {
            return Err(GameError::PollClosed);
        }
        self.closed_at = Some(now.max(self.opened_at));
        Ok(())
    }

    pub fn ballots(&self) -> &BTreeMap<String, String> {
        &self.ballots
    }

    pub fn counts(&self) -> BTreeMap<String, u64> {
        let mut counts: BTreeMap<String, u64> = self.options.iter().map(|o| (o.clone(), 0)).collect();
        for option in self.ballots.values() {
            *counts.entry(option.clone()).or_default() += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "option")]
pub enum Majority {
    Option(String),
    Tie,
    NoBallots,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TallyResult {
    pub counts: BTreeMap<String, u64>,
    pub total: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fraction_correct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fraction_believing_ai: Option<f64>,
    pub majority: Majority,
}

pub fn tally_result(game: &ShowGame, tally: &VoteTally) -> Result<TallyResult, GameError> {
    if tally.is_open() {
        return Err(GameError::PollOpen);
    }
    let counts = tally.counts();
    let total: u64 = counts.values().sum();
    let fraction = |option: &str| (total > 0).then(|| counts.get(option).copied().unwrap_or(0) as f64 / total as f64);
    let (fraction_correct, fraction_believing_ai) = match game.kind() {
        GameKind::TuringVote => (game.autonomous_option().and_then(fraction), None),
        GameKind::InCharacterReveal => (None, fraction(REVEAL_OPTIONS[0])),
    };
    let best = counts.values().copied().max().unwrap_or(0);
    let leaders: Vec<&String> = counts.iter().filter(|(_, &n)| n == best).map(|(o, _)| o).collect();
    let majority = match (total, leaders.as_slice()) {
        (0, _) => Majority::NoBallots,
        (_, [only]) => Majority::Option((*only).clone()),
        _ => Majority::Tie,
    };
    Ok(TallyResult { counts, total, fraction_correct, fraction_believing_ai, majority })
}

/// Everything needed to replay a finished game's tally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultExport {
    pub kind: GameKind,
    pub order_seed: u64,
    pub assignment: Vec<ControlSource>,
    pub question: String,
    pub options: Vec<String>,
    pub ballots: BTreeMap<String, String>,
    pub opened_at: Millis,
    pub closed_at: Option<Millis>,
    pub result: TallyResult,
}

impl ResultExport {
    pub fn new(game: &ShowGame, tally: &VoteTally) -> Result<Self, GameError> {
        if game.state() != GameState::Revealed {
            return Err(GameError::WrongState { operation: "export", state: game.state() });
        }
        Ok(Self {
            kind: game.kind(),
            order_seed: game.order_seed(),
            assignment: game.hidden_assignment().to_vec(),
            question: tally.question.clone(),
            options: tally.options.clone(),
            ballots: tally.ballots().clone(),
            opened_at: tally.opened_at,
            closed_at: tally.closed_at,
            result: tally_result(game, tally)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn played(kind: GameKind, seed: u64) -> (ShowGame, VoteTally) {
        let mut g = ShowGame::start(kind, seed);
        g.begin_scene().unwrap();
        if kind == GameKind::TuringVote {
            g.begin_scene().unwrap();
        }
        let t = g.open_poll(None, 10).unwrap();
        (g, t)
    }

    #[test]
    fn turing_vote_has_one_of_each() {
        for seed in 0..50 {
            let g = ShowGame::start(GameKind::TuringVote, seed);
            let a = g.hidden_assignment();
            assert_eq!(a.len(), 2);
            assert!(a.contains(&ControlSource::Wizard) && a.contains(&ControlSource::Autonomous));
            assert_eq!(ShowGame::start(GameKind::TuringVote, seed), g);
        }
    }

    #[test]
    fn in_character_reveal_is_single_wizard_slot() {
        let g = ShowGame::start(GameKind::InCharacterReveal, 3);
        assert_eq!(g.hidden_assignment(), [ControlSource::Wizard]);
    }

    #[test]
    fn wizard_first_frequency_balanced() {
        let wizard_first = (0..1000u64)
            .filter(|&s| ShowGame::start(GameKind::TuringVote, s).hidden_assignment()[0] == ControlSource::Wizard)
            .count();
        let f = wizard_first as f64 / 1000.0;
        assert!((0.45..=0.55).contains(&f), "{f}");
    }

    #[test]
    fn votes_overwrite_and_count() {
        let (_, mut t) = played(GameKind::TuringVote, 1);
        for i in 0..10 {
            t.cast_vote(&format!("v{i}"), "A").unwrap();
        }
        assert_eq!(t.ballots().len(), 10);
        t.cast_vote("v0", "B").unwrap();
        assert_eq!(t.ballots().len(), 10);
        assert_eq!(t.ballots()["v0"], "B");
        assert_eq!(t.cast_vote("v0", "C"), Err(GameError::UnknownOption("C".into())));
    }

    #[test]
    fn closed_poll_rejects_votes() {
        let (_, mut t) = played(GameKind::InCharacterReveal, 1);
        t.cast_vote("x", "AI").unwrap();
        t.close(20).unwrap();
        let before = t.clone();
        assert_eq!(t.cast_vote("y", "Human"), Err(GameError::PollClosed));
        assert_eq!(t, before);
    }

    #[test]
    fn turing_fraction_correct() {
        let (mut g, mut t) = played(GameKind::TuringVote, 5);
        let right = g.autonomous_option().unwrap();
        let wrong = if right == "A" { "B" } else { "A" };
        for i in 0..9 {
            t.cast_vote(&format!("v{i}"), right).unwrap();
        }
        t.cast_vote("v9", wrong).unwrap();
        assert_eq!(tally_result(&g, &t), Err(GameError::PollOpen));
        t.close(30).unwrap();
        let r = tally_result(&g, &t).unwrap();
        assert_eq!(r.fraction_correct, Some(0.9));
        assert_eq!(r.majority, Majority::Option(right.to_string()));
        g.reveal(&t).unwrap();
        assert_eq!(ResultExport::new(&g, &t).unwrap().result, r);
    }

    #[test]
    fn reveal_fraction_and_tie() {
        let (g, mut t) = played(GameKind::InCharacterReveal, 5);
        for i in 0..10 {
            t.cast_vote(&format!("v{i}"), if i < 5 { "AI" } else { "Human" }).unwrap();
        }
        t.close(30).unwrap();
        let r = tally_result(&g, &t).unwrap();
        assert_eq!(r.fraction_believing_ai, Some(0.5));
        assert_eq!(r.majority, Majority::Tie);
    }

    #[test]
    fn empty_poll_has_no_fractions() {
        let (g, mut t) = played(GameKind::TuringVote, 2);
        t.close(1).unwrap();
        let r = tally_result(&g, &t).unwrap();
        assert_eq!((r.fraction_correct, r.total, r.majority), (None, 0, Majority::NoBallots));
    }

    #[test]
    fn reveal_requires_closed_poll() {
        let (mut g, mut t) = played(GameKind::TuringVote, 2);
        assert!(g.public_assignment().is_none());
        assert_eq!(g.reveal(&t), Err(GameError::PollOpen));
        t.close(5).unwrap();
        assert_eq!(g.reveal(&t).unwrap().len(), 2);
        assert!(g.public_assignment().is_some());
        assert!(matches!(g.reveal(&t), Err(GameError::WrongState { .. })));
    }

    #[test]
    fn scene_order_enforced() {
        let mut g = ShowGame::start(GameKind::InCharacterReveal, 0);
        assert!(g.open_poll(None, 0).is_err());
        g.begin_scene().unwrap();
        assert!(g.begin_scene().is_err());
        let mut g = ShowGame::start(GameKind::TuringVote, 0);
        g.begin_scene().unwrap();
        assert!(g.open_poll(None, 0).is_err());
    }
}
