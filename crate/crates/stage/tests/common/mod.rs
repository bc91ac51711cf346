#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use improv_core::corpus::{build_vocab, corpus_files, ingest};
use improv_core::dialogue::Generators;
use improv_core::generation::{
    Candidate, CandidateGenerator, CandidateSource, DocFreqs, GenerationError, GenerationRequest, NgramGenerator,
    NgramModel,
};
use improv_core::sentiment::SentimentLexicon;
use improv_core::{tokenize, Exec, Millis};
use improv_stage::engine::{ConnId, Effect, Stage, StageInput, StageResources, StageSettings};
use improv_stage::protocol::{Role, StageMessage};
use serde_json::{json, Value};

pub const OPERATOR_KEY: &str = "backstage";

/// Words that must not reach the audience before a reveal.
pub const FORBIDDEN: [&str; 3] = ["control_source", "assignment", "wizard"];

pub fn toy_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/data/toy_corpus")
}

pub fn toy_model() -> Arc<NgramModel> {
    toy_parts().0
}

pub fn toy_doc_freqs() -> Arc<DocFreqs> {
    toy_parts().1
}

fn toy_parts() -> (Arc<NgramModel>, Arc<DocFreqs>) {
    static TOY: OnceLock<(Arc<NgramModel>, Arc<DocFreqs>)> = OnceLock::new();
    TOY.get_or_init(|| {
        let corpus = ingest(&corpus_files(&toy_dir()).unwrap()).unwrap();
        let vocab = build_vocab(&corpus, 5000).unwrap();
        let model = NgramModel::train(&corpus, &vocab, 3, 0.1).unwrap();
        (Arc::new(model), Arc::new(DocFreqs::from_corpus(&corpus, Exec::default())))
    })
    .clone()
}

pub fn toy_resources() -> StageResources {
    StageResources {
        generators: Generators::in_process(Arc::new(NgramGenerator::new(toy_model()))),
        lexicon: Arc::new(SentimentLexicon::bundled()),
        doc_freqs: toy_doc_freqs(),
    }
}

/// Always answers with the same candidates.
pub struct Fixed(pub Vec<(&'static str, f64)>);

impl CandidateGenerator for Fixed {
    fn generate(&self, _: &GenerationRequest<'_>) -> Result<Vec<Candidate>, GenerationError> {
        Ok(self
            .0
            .iter()
            .map(|(t, lp)| Candidate { tokens: tokenize(t), lm_logprob: *lp, source: CandidateSource::InProcess })
            .collect())
    }
}

pub fn fixed_resources(lines: Vec<(&'static str, f64)>) -> StageResources {
    StageResources {
        generators: Generators::in_process(Arc::new(Fixed(lines))),
        lexicon: Arc::new(SentimentLexicon::bundled()),
        doc_freqs: Arc::new(DocFreqs::default()),
    }
}

pub fn settings(think_time_ms: u64) -> StageSettings {
    StageSettings { operator_key: Some(OPERATOR_KEY.into()), think_time_ms, ..Default::default() }
}

/// Drives a [`Stage`] on a simulated clock and records every delivery.
pub struct Harness {
    pub stage: Stage,
    pub now: Millis,
    next_conn: ConnId,
    in_seq: BTreeMap<ConnId, u64>,
    out_seq: BTreeMap<ConnId, u64>,
    pub inbox: BTreeMap<ConnId, Vec<StageMessage>>,
    pub closed: Vec<ConnId>,
    pub exports: Vec<(String, String)>,
}

impl Harness {
    pub fn new(settings: StageSettings, resources: StageResources) -> Self {
        Self {
            stage: Stage::new(settings, resources).unwrap(),
            now: 1_000_000,
            next_conn: 1,
            in_seq: BTreeMap::new(),
            out_seq: BTreeMap::new(),
            inbox: BTreeMap::new(),
            closed: Vec::new(),
            exports: Vec::new(),
        }
    }

    pub fn toy(think_time_ms: u64) -> Self {
        Self::new(settings(think_time_ms), toy_resources())
    }

    pub fn apply(&mut self, input: StageInput) -> Vec<Effect> {
        let effects = self.stage.apply(self.now, input);
        for e in &effects {
            match e {
                Effect::Send { conn, message } => {
                    let last = self.out_seq.insert(*conn, message.seq);
                    assert!(last.is_none_or(|l| message.seq > l), "outbound seq went backwards on {conn}");
                    self.inbox.entry(*conn).or_default().push(message.clone());
                }
                Effect::Close { conn } => self.closed.push(*conn),
                Effect::Export { file_name, contents } => self.exports.push((file_name.clone(), contents.clone())),
            }
        }
        self.stage.check_invariants().unwrap();
        effects
    }

    pub fn open(&mut self) -> ConnId {
        let conn = self.next_conn;
        self.next_conn += 1;
        self.apply(StageInput::Connect { conn });
        conn
    }

    pub fn raw(&mut self, conn: ConnId, text: &str) -> Vec<Effect> {
        self.apply(StageInput::Message { conn, text: text.to_string() })
    }

    /// Send with the next inbound seq for `conn`.
    pub fn send(&mut self, conn: ConnId, kind: &str, session: &str, payload: Value) -> Vec<Effect> {
        let seq = self.sent_count(conn) + 1;
        self.send_seq(conn, seq, kind, session, payload)
    }

    pub fn send_seq(&mut self, conn: ConnId, seq: u64, kind: &str, session: &str, payload: Value) -> Vec<Effect> {
        let text = json!({"v": 1, "type": kind, "session": session, "seq": seq, "payload": payload}).to_string();
        self.in_seq.insert(conn, seq);
        self.raw(conn, &text)
    }

    fn sent_count(&self, conn: ConnId) -> u64 {
        self.in_seq.get(&conn).copied().unwrap_or(0)
    }

    pub fn join(&mut self, role: Role) -> ConnId {
        let conn = self.open();
        let payload = match role {
            Role::Operator => json!({"role": "operator", "key": OPERATOR_KEY}),
            r => json!({ "role": r }),
        };
        self.send(conn, "hello", "", payload);
        assert_eq!(self.stage.role(conn), Some(role));
        conn
    }

    pub fn tick(&mut self, advance_ms: Millis) -> Vec<Effect> {
        self.now += advance_ms;
        self.apply(StageInput::Tick)
    }

    pub fn messages(&self, conn: ConnId) -> &[StageMessage] {
        self.inbox.get(&conn).map_or(&[], Vec::as_slice)
    }

    pub fn of_kind(&self, conn: ConnId, kind: &str) -> Vec<&StageMessage> {
        self.messages(conn).iter().filter(|m| m.kind == kind).collect()
    }

    pub fn last(&self, conn: ConnId) -> &StageMessage {
        self.messages(conn).last().expect("a message")
    }

    pub fn last_error_code(&self, conn: ConnId) -> Option<String> {
        self.messages(conn)
            .iter()
            .rev()
            .find(|m| m.kind == "error")
            .map(|m| m.payload["code"].as_str().unwrap().to_string())
    }

    /// Start a scene and deliver the priming lines.
    pub fn primed_scene(&mut self, performer: ConnId, id: &str, game: Option<&str>) {
        let mut payload = json!({"text": "a lighthouse in a storm"});
        if let Some(g) = game {
            payload["game"] = json!(g);
        }
        self.send(performer, "suggestion", id, payload);
        for line in ["The lamp went out again.", "Someone is knocking on the door.", "It is the sea captain."] {
            self.send(performer, "priming_line", id, json!({ "text": line }));
        }
    }
}
