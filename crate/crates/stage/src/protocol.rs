//! Wire protocol: JSON `StageMessage` envelopes over a websocket.
//!
//! Every message is `{"v":1,"type":...,"session":...,"seq":...,"payload":{...}}`.
//! `seq` is per connection and per direction. Inbound messages whose `seq`
//! is not above the last accepted one are dropped as duplicates.

use improv_core::dialogue::{ControlSource, EndReason, Phase, SelectionTrace, Speaker};
use improv_core::showrunner::{GameKind, GameState, TallyResult};
use improv_core::Millis;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMessage {
    pub v: u32,
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub session: String,
    pub seq: u64,
    #[serde(default)]
    pub payload: Value,
}

impl StageMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("stage message serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Performer,
    Operator,
    Audience,
    Embodiment,
}

impl Role {
    /// Whether this role may send `kind`.
    pub fn may_send(self, kind: &str) -> bool {
        match kind {
            "hello" | "status" => true,
            "suggestion" | "end_scene" => matches!(self, Role::Performer | Role::Operator),
            "priming_line" | "human_line" => self == Role::Performer,
            "takeover" | "release" | "override_line" | "start_game" | "open_poll" | "close_poll" | "reveal" => {
                self == Role::Operator
            }
            "vote" => self == Role::Audience,
            _ => false,
        }
    }

    /// Whether messages to this role may carry control information.
    pub fn sees_control(self) -> bool {
        self == Role::Operator
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Malformed,
    UnsupportedVersion,
    UnknownType,
    HelloRequired,
    Capability,
    Auth,
    State,
    NotFound,
    Invalid,
    VoteRejected,
}

/// Why an inbound message was not accepted. Messages never echo client input.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{message}")]
pub struct ProtocolError {
    pub code: ErrorCode,
    pub message: String,
}

impl ProtocolError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Hello {
    pub role: Role,
    #[serde(default)]
    pub key: Option<String>,
    #[serde(default)]
    pub token: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TextPayload {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SuggestionPayload {
    pub text: String,
    /// Game this scene belongs to.
    #[serde(default)]
    pub game: Option<String>,
}

/// Operator reply: free text, or the index of a suggested candidate.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct OverridePayload {
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub candidate: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct StartGamePayload {
    pub kind: GameKind,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct OpenPollPayload {
    #[serde(default)]
    pub question: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct VotePayload {
    pub option: String,
}

/// A decoded client command.
#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Hello(Hello),
    Status,
    Suggestion(SuggestionPayload),
    PrimingLine(TextPayload),
    HumanLine(TextPayload),
    EndScene,
    Takeover,
    Release,
    OverrideLine(OverridePayload),
    StartGame(StartGamePayload),
    OpenPoll(OpenPollPayload),
    Vote(VotePayload),
    ClosePoll,
    Reveal,
}

/// Message types the server emits and never accepts.
pub const SERVER_ONLY_TYPES: &[&str] = &[
    "welcome",
    "ai_line",
    "scene_started",
    "scene_ended",
    "candidates",
    "control",
    "game_started",
    "poll_opened",
    "poll_closed",
    "result",
    "vote_ack",
    "embodiment",
    "error",
];

/// An inbound envelope whose header is valid.
#[derive(Debug, Clone, PartialEq)]
pub struct Inbound {
    pub seq: u64,
    pub session: String,
    pub kind: String,
    pub payload: Value,
}

/// Check the envelope header. The error carries the `seq` when it could be read.
pub fn parse_envelope(text: &str) -> Result<Inbound, (Option<u64>, ProtocolError)> {
    let value: Value = serde_json::from_str(text)
        .map_err(|_| (None, ProtocolError::new(ErrorCode::Malformed, "message is not valid JSON")))?;
    let Value::Object(map) = value else {
        return Err((None, ProtocolError::new(ErrorCode::Malformed, "message must be a JSON object")));
    };
    let seq = map.get("seq").and_then(Value::as_u64);
    match map.get("v").and_then(Value::as_u64) {
        Some(v) if v == u64::from(PROTOCOL_VERSION) => {}
        Some(_) => return Err((seq, ProtocolError::new(ErrorCode::UnsupportedVersion, "unsupported protocol version"))),
        None => return Err((seq, ProtocolError::new(ErrorCode::Malformed, "missing protocol version `v`"))),
    }
    let Some(seq) = seq else {
        return Err((None, ProtocolError::new(ErrorCode::Malformed, "missing or invalid `seq`")));
    };
    let kind = match map.get("type") {
        Some(Value::String(s)) => s.clone(),
        _ => return Err((Some(seq), ProtocolError::new(ErrorCode::Malformed, "missing or invalid `type`"))),
    };
    let session = match map.get("session") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err((Some(seq), ProtocolError::new(ErrorCode::Malformed, "`session` must be a string"))),
    };
    let payload = map.get("payload").cloned().unwrap_or(Value::Null);
    Ok(Inbound { seq, session, kind, payload })
}

fn payload<T: DeserializeOwned>(value: &Value) -> Result<T, ProtocolError> {
    let value = if value.is_null() { Value::Object(Default::default()) } else { value.clone() };
    serde_json::from_value(value).map_err(|_| ProtocolError::new(ErrorCode::Malformed, "payload does not match the message type"))
}

/// Decode the payload for a known message type.
pub fn decode_command(kind: &str, body: &Value) -> Result<Command, ProtocolError> {
    Ok(match kind {
        "hello" => Command::Hello(payload(body)?),
        "status" => Command::Status,
        "suggestion" => Command::Suggestion(payload(body)?),
        "priming_line" => Command::PrimingLine(payload(body)?),
        "human_line" => Command::HumanLine(payload(body)?),
        "end_scene" => Command::EndScene,
        "takeover" => Command::Takeover,
        "release" => Command::Release,
        "override_line" => Command::OverrideLine(payload(body)?),
        "start_game" => Command::StartGame(payload(body)?),
        "open_poll" => Command::OpenPoll(payload(body)?),
        "vote" => Command::Vote(payload(body)?),
        "close_poll" => Command::ClosePoll,
        "reveal" => Command::Reveal,
        _ if SERVER_ONLY_TYPES.contains(&kind) => {
            return Err(ProtocolError::new(ErrorCode::Capability, "message type is sent by the server only"))
        }
        _ => return Err(ProtocolError::new(ErrorCode::UnknownType, "unknown message type")),
    })
}

// Outbound payloads. Types without control information are what
// non-operator roles receive.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Welcome {
    pub role: Role,
    pub connection: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub token: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub code: ErrorCode,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub in_reply_to: Option<u64>,
}

/// A transcript append as the audience sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinePayload {
    pub scene: String,
    pub index: usize,
    pub speaker: Speaker,
    pub text: String,
    pub timestamp: Millis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorLinePayload {
    #[serde(flatten)]
    pub line: LinePayload,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub control_source: Option<ControlSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneStarted {
    pub scene: String,
    pub suggestion: String,
    /// Scene label within a two-scene vote.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSceneStarted {
    #[serde(flatten)]
    pub scene: SceneStarted,
    pub mode: ControlSource,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub game: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEnded {
    pub scene: String,
    pub reason: EndReason,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidatesPayload {
    pub scene: String,
    pub mode: ControlSource,
    /// `None` when every generator failed and a fallback line was used.
    pub trace: Option<SelectionTrace>,
    pub fallback: bool,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPayload {
    pub scene: String,
    pub mode: ControlSource,
    pub changed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameStarted {
    pub game: String,
    pub kind: GameKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorGameStarted {
    #[serde(flatten)]
    pub game: GameStarted,
    pub order_seed: u64,
    pub assignment: Vec<ControlSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PollOpened {
    pub game: String,
    pub question: String,
    pub options: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PollClosed {
    pub game: String,
    pub counts: std::collections::BTreeMap<String, u64>,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteAck {
    pub game: String,
    pub option: String,
}

/// Sent to every role once the assignment is revealed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevealPayload {
    pub game: String,
    pub kind: GameKind,
    pub assignment: Vec<ControlSource>,
    pub result: TallyResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneStatus {
    pub scene: String,
    pub phase: Phase,
    pub lines: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mode: Option<ControlSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameStatus {
    pub game: String,
    pub kind: GameKind,
    pub state: GameState,
    pub poll_open: bool,
    /// Present once revealed, or for operators.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub assignment: Option<Vec<ControlSource>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusPayload {
    pub scenes: Vec<SceneStatus>,
    pub games: Vec<GameStatus>,
}
