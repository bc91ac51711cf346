//! Engine for an AI improv performer.
//!
//! The crate covers everything that happens behind the stage server:
//!
//! - [`corpus`]: subtitle-style corpus ingestion, cleaning, tokenization and
//!   vocabulary building.
//! - [`generation`]: an add-k / backoff n-gram model, TF-IDF topic profiles,
//!   candidate sampling, and the wire protocol for remote generators.
//! - [`sentiment`]: lexicon valence scoring with negation and boosters.
//! - [`dialogue`]: the scene state machine and the candidate selection
//!   heuristic.
//! - [`showrunner`]: the two audience games (forewarned vote and
//!   in-character reveal) with hidden control assignment and tallying.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise.

pub mod corpus;
pub mod dialogue;
pub mod generation;
pub mod par;
pub mod sentiment;
pub mod showrunner;

pub use corpus::{clean_line, tokenize, Corpus, Vocabulary};
pub use dialogue::{ControlSource, Phase, Scene, SceneConfig, SelectionTrace, Speaker};
pub use generation::{Candidate, CandidateSource, NgramModel, TopicProfile};
pub use par::Exec;
pub use sentiment::SentimentLexicon;
pub use showrunner::{GameKind, ShowGame, VoteTally};

/// Milliseconds on whatever clock drives the show (wall clock in the
/// server, simulated in tests).
pub type Millis = u64;
