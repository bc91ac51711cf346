//! The stage engine: every scene, game and client connection, driven by
//! [`StageInput`]s and answering with [`Effect`]s.
//!
//! The engine does no IO and reads no clock; callers pass `now`. Feeding the
//! same inputs to a fresh engine reproduces the same effects, which is how
//! the server's command log is checked.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use improv_core::dialogue::{
    ControlSource, EndReason, Generators, Line, Phase, Proposal, ReplyOrigin, Scene, SceneConfig, SceneError,
};
use improv_core::generation::{extract_topics, DocFreqs};
use improv_core::sentiment::SentimentLexicon;
use improv_core::showrunner::{GameError, GameKind, GameState, ResultExport, ShowGame, VoteTally, TURING_OPTIONS};
use improv_core::Millis;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::embodiment::commands_for;
use crate::protocol::*;

pub type ConnId = u64;

pub const DEFAULT_THINK_TIME_MS: u64 = 800;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "input", rename_all = "snake_case")]
pub enum StageInput {
    Connect { conn: ConnId },
    Message { conn: ConnId, text: String },
    Disconnect { conn: ConnId },
    Tick,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    Send { conn: ConnId, message: StageMessage },
    /// Close the connection after delivering what was sent to it.
    Close { conn: ConnId },
    /// A finished transcript or game result to persist.
    Export { file_name: String, contents: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageSettings {
    /// Shared operator key. Without one, operator hellos are refused.
    pub operator_key: Option<String>,
    pub seed: u64,
    /// Earliest an AI line is delivered after its turn begins.
    pub think_time_ms: u64,
    pub voice_id: String,
    pub topic_keywords: usize,
    pub scene: SceneConfig,
}

impl Default for StageSettings {
    fn default() -> Self {
        Self {
            operator_key: None,
            seed: 0,
            think_time_ms: DEFAULT_THINK_TIME_MS,
            voice_id: "default".into(),
            topic_keywords: 5,
            scene: SceneConfig::default(),
        }
    }
}

/// Models and lexicons shared by every scene.
#[derive(Clone)]
pub struct StageResources {
    pub generators: Generators,
    pub lexicon: Arc<SentimentLexicon>,
    pub doc_freqs: Arc<DocFreqs>,
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Config(#[from] SceneError),
}

#[derive(Debug, Clone, Default)]
struct Conn {
    role: Option<Role>,
    last_seq: Option<u64>,
    next_seq: u64,
    voter: Option<String>,
}

#[derive(Debug, Clone)]
struct PendingLine {
    text: String,
    source: ControlSource,
    due: Millis,
}

#[derive(Debug, Clone)]
struct SceneSlot {
    scene: Scene,
    mode: ControlSource,
    game: Option<String>,
    turn_started: Millis,
    proposal: Option<Proposal>,
    pending: Option<PendingLine>,
}

impl SceneSlot {
    fn live(&self) -> bool {
        self.scene.phase() != Phase::Ended
    }
}

#[derive(Debug, Clone)]
struct GameSlot {
    game: ShowGame,
    tally: Option<VoteTally>,
}

/// Comparable view of everything the engine holds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageSnapshot {
    pub scenes: BTreeMap<String, SceneSnapshot>,
    pub games: BTreeMap<String, GameSnapshot>,
    pub connections: Vec<ConnId>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneSnapshot {
    pub phase: Phase,
    pub mode: ControlSource,
    pub end_reason: Option<EndReason>,
    pub transcript: Vec<Line>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameSnapshot {
    pub kind: GameKind,
    pub state: GameState,
    pub ballots: BTreeMap<String, String>,
}

pub struct Stage {
    settings: StageSettings,
    resources: StageResources,
    conns: BTreeMap<ConnId, Conn>,
    scenes: BTreeMap<String, SceneSlot>,
    games: BTreeMap<String, GameSlot>,
    rng: ChaCha8Rng,
    voters: BTreeSet<String>,
    scenes_created: u64,
    games_created: u64,
    out: Vec<Effect>,
}

type Outcome = Result<(), ProtocolError>;

fn scene_err(e: SceneError) -> ProtocolError {
    match e {
        SceneError::InvalidArgument(_) | SceneError::InvalidConfig(_) => ProtocolError::new(ErrorCode::Invalid, e.to_string()),
        SceneError::WrongPhase { .. } | SceneError::CapNotReached { .. } => ProtocolError::new(ErrorCode::State, e.to_string()),
    }
}

fn game_err(e: GameError) -> ProtocolError {
    match e {
        GameError::PollClosed => ProtocolError::new(ErrorCode::VoteRejected, "the poll is closed"),
        GameError::UnknownOption(_) => ProtocolError::new(ErrorCode::Invalid, "unknown option"),
        GameError::InvalidArgument(_) => ProtocolError::new(ErrorCode::Invalid, e.to_string()),
        GameError::WrongState { .. } | GameError::PollOpen => ProtocolError::new(ErrorCode::State, e.to_string()),
    }
}

fn to_value<T: Serialize>(payload: &T) -> Value {
    serde_json::to_value(payload).expect("payload serializes")
}

/// File-name-safe form of a client-chosen id.
pub fn export_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

impl Stage {
    pub fn new(settings: StageSettings, resources: StageResources) -> Result<Self, StageError> {
        settings.scene.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(settings.seed);
        Ok(Self {
            settings,
            resources,
            conns: BTreeMap::new(),
            scenes: BTreeMap::new(),
            games: BTreeMap::new(),
            rng,
            voters: BTreeSet::new(),
            scenes_created: 0,
            games_created: 0,
            out: Vec::new(),
        })
    }

    pub fn settings(&self) -> &StageSettings {
        &self.settings
    }

    pub fn apply(&mut self, now: Millis, input: StageInput) -> Vec<Effect> {
        match input {
            StageInput::Connect { conn } => {
                self.conns.entry(conn).or_insert_with(|| Conn { next_seq: 1, ..Default::default() });
            }
            StageInput::Disconnect { conn } => {
                self.conns.remove(&conn);
            }
            StageInput::Message { conn, text } => {
                self.sweep(now);
                self.on_message(conn, &text, now);
            }
            StageInput::Tick => self.sweep(now),
        }
        std::mem::take(&mut self.out)
    }

    /// Scenes not yet ended.
    pub fn active_scenes(&self) -> usize {
        self.scenes.values().filter(|s| s.live()).count()
    }

    pub fn scene(&self, id: &str) -> Option<&Scene> {
        self.scenes.get(id).map(|s| &s.scene)
    }

    pub fn mode(&self, id: &str) -> Option<ControlSource> {
        self.scenes.get(id).map(|s| s.mode)
    }

    pub fn game(&self, id: &str) -> Option<&ShowGame> {
        self.games.get(id).map(|g| &g.game)
    }

    pub fn role(&self, conn: ConnId) -> Option<Role> {
        self.conns.get(&conn).and_then(|c| c.role)
    }

    /// Whether an AI line is decided but not yet delivered.
    pub fn has_pending_line(&self, scene: &str) -> bool {
        self.scenes.get(scene).is_some_and(|s| s.pending.is_some())
    }

    pub fn snapshot(&self) -> StageSnapshot {
        StageSnapshot {
            scenes: self
                .scenes
                .iter()
                .map(|(id, s)| {
                    let snap = SceneSnapshot {
                        phase: s.scene.phase(),
                        mode: s.mode,
                        end_reason: s.scene.end_reason(),
                        transcript: s.scene.transcript().to_vec(),
                    };
                    (id.clone(), snap)
                })
                .collect(),
            games: self
                .games
                .iter()
                .map(|(id, g)| {
                    let snap = GameSnapshot {
                        kind: g.game.kind(),
                        state: g.game.state(),
                        ballots: g.tally.as_ref().map(|t| t.ballots().clone()).unwrap_or_default(),
                    };
                    (id.clone(), snap)
                })
                .collect(),
            connections: self.conns.keys().copied().collect(),
        }
    }

    /// Structural checks over every scene.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (id, s) in &self.scenes {
            s.scene.check_invariants().map_err(|e| format!("scene {id}: {e}"))?;
            if s.pending.is_some() && s.scene.phase() != Phase::AiTurn {
                return Err(format!("scene {id}: queued line outside an AI turn"));
            }
            if s.pending.as_ref().is_some_and(|p| p.source != s.mode) {
                return Err(format!("scene {id}: queued line does not match the control mode"));
            }
        }
        Ok(())
    }

    fn send(&mut self, conn: ConnId, kind: &str, session: &str, payload: Value) {
        let Some(c) = self.conns.get_mut(&conn) else { return };
        let seq = c.next_seq;
        c.next_seq += 1;
        let message = StageMessage {
            v: PROTOCOL_VERSION,
            kind: kind.to_string(),
            session: session.to_string(),
            seq,
            payload,
        };
        self.out.push(Effect::Send { conn, message });
    }

    /// Send to every greeted connection; `payload` picks the body per role,
    /// `None` skips that role.
    fn broadcast(&mut self, kind: &str, session: &str, payload: impl Fn(Role) -> Option<Value>) {
        let targets: Vec<(ConnId, Role)> =
            self.conns.iter().filter_map(|(&id, c)| c.role.map(|r| (id, r))).collect();
        for (conn, role) in targets {
            if let Some(body) = payload(role) {
                self.send(conn, kind, session, body);
            }
        }
    }

    fn error(&mut self, conn: ConnId, seq: Option<u64>, err: ProtocolError) {
        tracing::debug!(conn, code = ?err.code, "rejected message: {}", err.message);
        let body = ErrorPayload { code: err.code, message: err.message, in_reply_to: seq };
        self.send(conn, "error", "", to_value(&body));
    }

    fn on_message(&mut self, conn: ConnId, text: &str, now: Millis) {
        let Some(c) = self.conns.get_mut(&conn) else {
            tracing::warn!(conn, "message from unknown connection");
            return;
        };
        let inbound = match parse_envelope(text) {
            Ok(i) => i,
            Err((seq, e)) => return self.error(conn, seq, e),
        };
        if c.last_seq.is_some_and(|last| inbound.seq <= last) {
            tracing::debug!(conn, seq = inbound.seq, "dropped stale message");
            return;
        }
        c.last_seq = Some(inbound.seq);
        let role = c.role;
        let seq = Some(inbound.seq);
        let command = match decode_command(&inbound.kind, &inbound.payload) {
            Ok(cmd) => cmd,
            Err(e) if role.is_none() && inbound.kind == "hello" => return self.refuse(conn, seq, e),
            Err(e) => return self.error(conn, seq, e),
        };
        let (role, command) = match (role, command) {
            (None, Command::Hello(hello)) => return self.hello(conn, seq, hello),
            (None, _) => {
                return self.error(conn, seq, ProtocolError::new(ErrorCode::HelloRequired, "send hello first"))
            }
            (Some(_), Command::Hello(_)) => {
                return self.error(conn, seq, ProtocolError::new(ErrorCode::State, "connection already greeted"))
            }
            (Some(role), command) => (role, command),
        };
        if !role.may_send(&inbound.kind) {
            let e = ProtocolError::new(ErrorCode::Capability, "message type not permitted for this role");
            return self.error(conn, seq, e);
        }
        let session = inbound.session.as_str();
        let outcome = match command {
            Command::Hello(_) => unreachable!("handled above"),
            Command::Status => {
                self.status(conn, role);
                Ok(())
            }
            Command::Suggestion(p) => self.suggestion(session, p, now),
            Command::PrimingLine(p) => self.human_speech(session, &p.text, true, now),
            Command::HumanLine(p) => self.human_speech(session, &p.text, false, now),
            Command::EndScene => self.end_scene(session, now),
            Command::Takeover => self.set_mode(session, ControlSource::Wizard, now),
            Command::Release => self.set_mode(session, ControlSource::Autonomous, now),
            Command::OverrideLine(p) => self.override_line(session, p, now),
            Command::StartGame(p) => self.start_game(session, p),
            Command::OpenPoll(p) => self.open_poll(session, p, now),
            Command::Vote(p) => self.vote(conn, session, p),
            Command::ClosePoll => self.close_poll(session, now),
            Command::Reveal => self.reveal(session),
        };
        if let Err(e) = outcome {
            self.error(conn, seq, e);
        }
    }

    fn hello(&mut self, conn: ConnId, seq: Option<u64>, hello: Hello) {
        if hello.role == Role::Operator {
            let refusal = match &self.settings.operator_key {
                None => Some("operator access is not configured"),
                Some(key) if hello.key.as_deref() != Some(key.as_str()) => Some("operator key rejected"),
                Some(_) => None,
            };
            if let Some(reason) = refusal {
                return self.refuse(conn, seq, ProtocolError::new(ErrorCode::Auth, reason));
            }
        }
        let token = (hello.role == Role::Audience).then(|| match hello.token {
            Some(t) if self.voters.contains(&t) => t,
            _ => self.issue_voter_token(),
        });
        let c = self.conns.get_mut(&conn).expect("connection registered");
        c.role = Some(hello.role);
        c.voter = token.clone();
        tracing::info!(conn, role = ?hello.role, "client joined");
        let body = Welcome { role: hello.role, connection: conn, token };
        self.send(conn, "welcome", "", to_value(&body));
    }

    /// Reply with the reason and drop the connection.
    fn refuse(&mut self, conn: ConnId, seq: Option<u64>, err: ProtocolError) {
        tracing::warn!(conn, "refused connection: {}", err.message);
        self.error(conn, seq, err);
        self.out.push(Effect::Close { conn });
        self.conns.remove(&conn);
    }

    fn issue_voter_token(&mut self) -> String {
        loop {
            let token = format!("v-{:016x}", self.rng.gen::<u64>());
            if self.voters.insert(token.clone()) {
                return token;
            }
        }
    }

    fn status(&mut self, conn: ConnId, role: Role) {
        let full = role.sees_control();
        let scenes = self
            .scenes
            .iter()
            .map(|(id, s)| SceneStatus {
                scene: id.clone(),
                phase: s.scene.phase(),
                lines: s.scene.transcript().len(),
                mode: full.then_some(s.mode),
            })
            .collect();
        let games = self
            .games
            .iter()
            .filter(|(_, g)| full || announced(&g.game))
            .map(|(id, g)| GameStatus {
                game: id.clone(),
                kind: g.game.kind(),
                state: g.game.state(),
                poll_open: g.tally.as_ref().is_some_and(VoteTally::is_open),
                assignment: if full {
                    Some(g.game.hidden_assignment().to_vec())
                } else {
                    g.game.public_assignment().map(<[_]>::to_vec)
                },
            })
            .collect();
        self.send(conn, "status", "", to_value(&StatusPayload { scenes, games }));
    }

    fn scene_slot(&mut self, id: &str) -> Result<&mut SceneSlot, ProtocolError> {
        self.scenes.get_mut(id).ok_or_else(|| ProtocolError::new(ErrorCode::NotFound, "unknown scene"))
    }

    fn game_slot(&mut self, id: &str) -> Result<&mut GameSlot, ProtocolError> {
        self.games.get_mut(id).ok_or_else(|| ProtocolError::new(ErrorCode::NotFound, "unknown game"))
    }

    fn suggestion(&mut self, session: &str, p: SuggestionPayload, now: Millis) -> Outcome {
        let id = if session.is_empty() {
            fresh_id("scene", self.scenes_created, |id| self.scenes.contains_key(id))
        } else {
            session.to_string()
        };
        if self.scenes.contains_key(&id) {
            return Err(ProtocolError::new(ErrorCode::State, "scene id already in use"));
        }
        let config = SceneConfig {
            seed: self.settings.scene.seed.wrapping_add(self.settings.seed).wrapping_add(self.scenes_created),
            ..self.settings.scene.clone()
        };
        let scene = Scene::start(&p.text, config, now).map_err(scene_err)?;
        let (mode, label) = match &p.game {
            None => (ControlSource::Autonomous, None),
            Some(game_id) => {
                if self.scenes.values().any(|s| s.live() && s.game.as_deref() == Some(game_id.as_str())) {
                    return Err(ProtocolError::new(ErrorCode::State, "the game's previous scene is still running"));
                }
                let slot = self.game_slot(game_id)?;
                let (index, control) = slot.game.begin_scene().map_err(game_err)?;
                let label = (slot.game.kind() == GameKind::TuringVote).then(|| TURING_OPTIONS[index].to_string());
                (control, label)
            }
        };
        self.scenes_created += 1;
        tracing::info!(scene = %id, "scene started");
        let public = SceneStarted { scene: id.clone(), suggestion: scene.suggestion().unwrap_or_default().to_string(), label };
        let operator = OperatorSceneStarted { scene: public.clone(), mode, game: p.game.clone() };
        self.scenes.insert(
            id.clone(),
            SceneSlot { scene, mode, game: p.game, turn_started: now, proposal: None, pending: None },
        );
        let (public, operator) = (to_value(&public), to_value(&operator));
        self.broadcast("scene_started", &id, |role| Some(if role.sees_control() { operator.clone() } else { public.clone() }));
        Ok(())
    }

    fn human_speech(&mut self, id: &str, text: &str, priming: bool, now: Millis) -> Outcome {
        let slot = self.scene_slot(id)?;
        if priming {
            slot.scene.add_priming_line(text, now).map_err(scene_err)?;
        } else {
            slot.scene.human_line(text, now).map_err(scene_err)?;
        }
        let kind = if priming { "priming_line" } else { "human_line" };
        self.broadcast_last_line(id, kind);
        if self.scenes[id].scene.phase() == Phase::AiTurn {
            self.begin_ai_turn(id, now);
        }
        Ok(())
    }

    fn broadcast_last_line(&mut self, id: &str, kind: &str) {
        let scene = &self.scenes[id].scene;
        let index = scene.transcript().len() - 1;
        let line = &scene.transcript()[index];
        let public = LinePayload {
            scene: id.to_string(),
            index,
            speaker: line.speaker,
            text: line.text.clone(),
            timestamp: line.timestamp,
        };
        let operator = to_value(&OperatorLinePayload { line: public.clone(), control_source: line.control_source });
        let public = to_value(&public);
        self.broadcast(kind, id, |role| Some(if role.sees_control() { operator.clone() } else { public.clone() }));
    }

    /// Generate the reply for a new AI turn. Autonomous scenes queue it for
    /// delivery after the think time; operator-driven scenes only show it.
    fn begin_ai_turn(&mut self, id: &str, now: Millis) {
        let think = self.settings.think_time_ms;
        let resources = self.resources.clone();
        let k = self.settings.topic_keywords;
        let slot = self.scenes.get_mut(id).expect("scene exists");
        let topic = extract_topics(&slot.scene.context(), &resources.doc_freqs, k);
        let proposal = match slot.scene.propose(&resources.generators, &resources.lexicon, &topic) {
            Ok(p) => p,
            Err(e) => {
                tracing::error!(scene = %id, "cannot start AI turn: {e}");
                return;
            }
        };
        for failure in &proposal.failures {
            tracing::warn!(scene = %id, "generator attempt failed: {failure}");
        }
        slot.turn_started = now;
        if slot.mode == ControlSource::Autonomous {
            slot.pending = Some(PendingLine { text: proposal.text.clone(), source: ControlSource::Autonomous, due: now + think });
        }
        let body = CandidatesPayload {
            scene: id.to_string(),
            mode: slot.mode,
            trace: proposal.trace.clone(),
            fallback: proposal.origin == ReplyOrigin::Fallback,
            failures: proposal.failures.clone(),
        };
        slot.proposal = Some(proposal);
        let body = to_value(&body);
        self.broadcast("candidates", id, |role| role.sees_control().then(|| body.clone()));
        self.flush(id, now);
    }

    /// Deliver the scene's queued AI line if it is due.
    fn flush(&mut self, id: &str, now: Millis) {
        let slot = self.scenes.get_mut(id).expect("scene exists");
        let Some(pending) = slot.pending.take_if(|p| p.due <= now) else { return };
        if let Err(e) = slot.scene.commit_ai_line(&pending.text, pending.source, pending.due) {
            tracing::error!(scene = %id, "dropping queued line: {e}");
            return;
        }
        slot.proposal = None;
        self.broadcast_last_line(id, "ai_line");
        self.embody(id, &pending.text);
    }

    fn embody(&mut self, id: &str, text: &str) {
        let polarity = self.resources.lexicon.polarity(text);
        let commands = commands_for(id, text, polarity, &self.settings.voice_id);
        let targets: Vec<ConnId> =
            self.conns.iter().filter(|(_, c)| c.role == Some(Role::Embodiment)).map(|(&id, _)| id).collect();
        if targets.is_empty() {
            tracing::debug!(scene = %id, "no embodiment clients: {commands:?}");
        }
        for conn in targets {
            for command in &commands {
                self.send(conn, "embodiment", id, to_value(command));
            }
        }
    }

    /// Deliver due lines and end scenes that reached their duration cap.
    fn sweep(&mut self, now: Millis) {
        let ids: Vec<String> = self.scenes.iter().filter(|(_, s)| s.live()).map(|(id, _)| id.clone()).collect();
        for id in ids {
            let slot = &self.scenes[&id];
            let cap_at = slot.scene.started_at() + slot.scene.config().max_duration_s * 1000;
            let due = slot.pending.as_ref().map(|p| p.due);
            if due.is_some_and(|d| d < cap_at) {
                self.flush(&id, now);
            }
            let slot = self.scenes.get_mut(&id).expect("scene exists");
            if slot.scene.expire_if_due(now) {
                tracing::info!(scene = %id, "scene reached its duration cap");
                self.finish_scene(&id);
            }
        }
    }

    fn finish_scene(&mut self, id: &str) {
        let slot = self.scenes.get_mut(id).expect("scene exists");
        slot.pending = None;
        slot.proposal = None;
        let reason = slot.scene.end_reason().expect("ended scene has a reason");
        let contents = slot.scene.transcript_jsonl();
        let body = to_value(&SceneEnded { scene: id.to_string(), reason });
        self.broadcast("scene_ended", id, |_| Some(body.clone()));
        self.out.push(Effect::Export { file_name: format!("{}.transcript.jsonl", export_stem(id)), contents });
    }

    fn end_scene(&mut self, id: &str, now: Millis) -> Outcome {
        self.scene_slot(id)?.scene.end(EndReason::PerformerInterrupt, now).map_err(scene_err)?;
        tracing::info!(scene = %id, "scene ended by performer");
        self.finish_scene(id);
        Ok(())
    }

    fn set_mode(&mut self, id: &str, mode: ControlSource, now: Millis) -> Outcome {
        let think = self.settings.think_time_ms;
        let slot = self.scene_slot(id)?;
        if !slot.live() {
            return Err(ProtocolError::new(ErrorCode::State, "scene has ended"));
        }
        if slot.game.is_some() {
            return Err(ProtocolError::new(ErrorCode::State, "control of a game scene is fixed"));
        }
        let changed = slot.mode != mode;
        slot.mode = mode;
        if changed && slot.scene.phase() == Phase::AiTurn {
            match mode {
                ControlSource::Wizard => slot.pending = None,
                ControlSource::Autonomous => {
                    if let Some(proposal) = &slot.proposal {
                        let due = now.max(slot.turn_started + think);
                        slot.pending = Some(PendingLine { text: proposal.text.clone(), source: mode, due });
                    }
                }
            }
        }
        let body = to_value(&ControlPayload { scene: id.to_string(), mode, changed });
        self.broadcast("control", id, |role| role.sees_control().then(|| body.clone()));
        self.flush(id, now);
        Ok(())
    }

    fn override_line(&mut self, id: &str, p: OverridePayload, now: Millis) -> Outcome {
        let think = self.settings.think_time_ms;
        let slot = self.scene_slot(id)?;
        if slot.mode != ControlSource::Wizard {
            return Err(ProtocolError::new(ErrorCode::State, "scene is under autonomous control"));
        }
        if slot.scene.phase() != Phase::AiTurn {
            return Err(ProtocolError::new(ErrorCode::State, format!("no AI turn is open (phase {:?})", slot.scene.phase())));
        }
        if slot.pending.is_some() {
            return Err(ProtocolError::new(ErrorCode::State, "a reply is already queued"));
        }
        let text = match (p.text, p.candidate) {
            (Some(text), None) => text,
            (None, Some(i)) => slot
                .proposal
                .as_ref()
                .and_then(|pr| pr.trace.as_ref())
                .and_then(|t| t.candidates.get(i))
                .map(|c| c.text.clone())
                .ok_or_else(|| ProtocolError::new(ErrorCode::Invalid, "no such candidate"))?,
            _ => return Err(ProtocolError::new(ErrorCode::Invalid, "give exactly one of `text` or `candidate`")),
        };
        let text = text.trim().to_string();
        if text.is_empty() {
            return Err(ProtocolError::new(ErrorCode::Invalid, "ai line must not be empty"));
        }
        let due = now.max(slot.turn_started + think);
        slot.pending = Some(PendingLine { text, source: ControlSource::Wizard, due });
        self.flush(id, now);
        Ok(())
    }

    fn start_game(&mut self, session: &str, p: StartGamePayload) -> Outcome {
        let id = if session.is_empty() {
            fresh_id("game", self.games_created, |id| self.games.contains_key(id))
        } else {
            session.to_string()
        };
        if self.games.contains_key(&id) {
            return Err(ProtocolError::new(ErrorCode::State, "game id already in use"));
        }
        let seed = p.seed.unwrap_or_else(|| self.rng.gen());
        let game = ShowGame::start(p.kind, seed);
        self.games_created += 1;
        tracing::info!(game = %id, kind = ?p.kind, "game started");
        let public = GameStarted { game: id.clone(), kind: p.kind };
        let operator = to_value(&OperatorGameStarted {
            game: public.clone(),
            order_seed: seed,
            assignment: game.hidden_assignment().to_vec(),
        });
        let public = announced(&game).then(|| to_value(&public));
        self.games.insert(id.clone(), GameSlot { game, tally: None });
        self.broadcast("game_started", &id, |role| if role.sees_control() { Some(operator.clone()) } else { public.clone() });
        Ok(())
    }

    fn open_poll(&mut self, id: &str, p: OpenPollPayload, now: Millis) -> Outcome {
        if self.scenes.values().any(|s| s.live() && s.game.as_deref() == Some(id)) {
            return Err(ProtocolError::new(ErrorCode::State, "the game's scene is still running"));
        }
        let slot = self.game_slot(id)?;
        let tally = slot.game.open_poll(p.question.as_deref(), now).map_err(game_err)?;
        let body = to_value(&PollOpened { game: id.to_string(), question: tally.question.clone(), options: tally.options.clone() });
        slot.tally = Some(tally);
        self.broadcast("poll_opened", id, |_| Some(body.clone()));
        Ok(())
    }

    fn vote(&mut self, conn: ConnId, id: &str, p: VotePayload) -> Outcome {
        let voter = self.conns.get(&conn).and_then(|c| c.voter.clone()).expect("audience connections hold a token");
        let slot = self.game_slot(id)?;
        let tally = slot.tally.as_mut().ok_or_else(|| ProtocolError::new(ErrorCode::State, "no poll for this game"))?;
        tally.cast_vote(&voter, &p.option).map_err(game_err)?;
        self.send(conn, "vote_ack", id, to_value(&VoteAck { game: id.to_string(), option: p.option }));
        Ok(())
    }

    fn close_poll(&mut self, id: &str, now: Millis) -> Outcome {
        let slot = self.game_slot(id)?;
        let tally = slot.tally.as_mut().ok_or_else(|| ProtocolError::new(ErrorCode::State, "no poll for this game"))?;
        tally.close(now).map_err(game_err)?;
        let counts = tally.counts();
        let total = counts.values().sum();
        let body = to_value(&PollClosed { game: id.to_string(), counts, total });
        self.broadcast("poll_closed", id, |_| Some(body.clone()));
        Ok(())
    }

    fn reveal(&mut self, id: &str) -> Outcome {
        let slot = self.game_slot(id)?;
        let tally = slot.tally.as_ref().ok_or_else(|| ProtocolError::new(ErrorCode::State, "no poll for this game"))?;
        slot.game.reveal(tally).map_err(game_err)?;
        let export = ResultExport::new(&slot.game, tally).map_err(game_err)?;
        let body = to_value(&RevealPayload {
            game: id.to_string(),
            kind: export.kind,
            assignment: export.assignment.clone(),
            result: export.result.clone(),
        });
        tracing::info!(game = %id, "assignment revealed");
        self.broadcast("result", id, |_| Some(body.clone()));
        let contents = serde_json::to_string_pretty(&export).expect("export serializes") + "\n";
        self.out.push(Effect::Export { file_name: format!("{}.result.json", export_stem(id)), contents });
        Ok(())
    }
}

/// Whether the audience is told a game is running. The in-character game
/// only surfaces at its poll.
fn announced(game: &ShowGame) -> bool {
    game.kind() == GameKind::TuringVote || game.state() == GameState::Revealed
}

fn fresh_id(prefix: &str, start: u64, taken: impl Fn(&str) -> bool) -> String {
    (start + 1..)
        .map(|n| format!("{prefix}-{n}"))
        .find(|id| !taken(id))
        .expect("unbounded id space")
}
