//! Live stage server for an AI improv performer.
//!
//! [`engine::Stage`] holds scenes, games and client sessions and speaks the
//! [`protocol`]; [`runtime`] puts it behind a websocket; [`rehearsal`]
//! replays scripted shows for reproducibility checks.

pub mod config;
pub mod embodiment;
pub mod engine;
pub mod protocol;
pub mod rehearsal;
pub mod runtime;

pub use config::ServerConfig;
pub use embodiment::{EmbodimentCommand, Gesture};
pub use engine::{ConnId, Effect, Stage, StageInput, StageResources, StageSettings};
pub use protocol::{Role, StageMessage, PROTOCOL_VERSION};
pub use runtime::{StageHandle, StageRuntime};
