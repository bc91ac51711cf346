//! Output surfaces for AI lines: projected caption, speech and robot act.

use serde::{Deserialize, Serialize};

/// Polarity at or beyond which a line counts as positive or negative.
pub const GESTURE_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gesture {
    Neutral,
    Positive,
    Negative,
}

impl Gesture {
    pub fn from_polarity(polarity: f64) -> Self {
        if polarity >= GESTURE_THRESHOLD {
            Gesture::Positive
        } else if polarity <= -GESTURE_THRESHOLD {
            Gesture::Negative
        } else {
            Gesture::Neutral
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbodimentCommand {
    DisplayText { scene: String, text: String },
    TtsSpeak { scene: String, text: String, voice_id: String },
    RobotAct { scene: String, text: String, gesture: Gesture },
}

impl EmbodimentCommand {
    pub fn text(&self) -> &str {
        match self {
            EmbodimentCommand::DisplayText { text, .. }
            | EmbodimentCommand::TtsSpeak { text, .. }
            | EmbodimentCommand::RobotAct { text, .. } => text,
        }
    }
}

/// The three commands for one AI line, in display, speech, act order.
pub fn commands_for(scene: &str, text: &str, polarity: f64, voice_id: &str) -> [EmbodimentCommand; 3] {
    [
        EmbodimentCommand::DisplayText { scene: scene.into(), text: text.into() },
        EmbodimentCommand::TtsSpeak { scene: scene.into(), text: text.into(), voice_id: voice_id.into() },
        EmbodimentCommand::RobotAct { scene: scene.into(), text: text.into(), gesture: Gesture::from_polarity(polarity) },
    ]
}
