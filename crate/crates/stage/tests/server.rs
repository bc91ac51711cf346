mod common;

use std::sync::Arc;
use std::time::Duration;

use common::*;
use futures::{SinkExt, StreamExt};
use improv_stage::engine::{Effect, Stage};
use improv_stage::runtime::{self, RuntimeOptions, StageRuntime, SystemClock};
use improv_stage::StageMessage;
use serde_json::{json, Value};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

struct Client {
    ws: Ws,
    seq: u64,
}

impl Client {
    async fn connect(addr: &str) -> Self {
        let (ws, _) = connect_async(format!("ws://{addr}/ws")).await.unwrap();
        Self { ws, seq: 0 }
    }

    async fn send(&mut self, kind: &str, session: &str, payload: Value) {
        self.seq += 1;
        let text = json!({"v": 1, "type": kind, "session": session, "seq": self.seq, "payload": payload});
        self.ws.send(Message::text(text.to_string())).await.unwrap();
    }

    /// Next server message, or `None` once the server closed the socket.
    async fn recv(&mut self) -> Option<StageMessage> {
        loop {
            let next = tokio::time::timeout(Duration::from_secs(10), self.ws.next()).await.expect("server reply");
            match next {
                Some(Ok(Message::Text(t))) => return Some(serde_json::from_str(t.as_str()).unwrap()),
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return None,
                Some(Ok(_)) => {}
            }
        }
    }

    async fn until(&mut self, kind: &str) -> StageMessage {
        self.until_in(kind, None).await
    }

    async fn until_in(&mut self, kind: &str, session: Option<&str>) -> StageMessage {
        loop {
            let m = self.recv().await.expect("connection open");
            if m.kind == kind && session.is_none_or(|s| s == m.session) {
                return m;
            }
        }
    }
}

async fn http_get(addr: &str, path: &str) -> String {
    let mut stream = TcpStream::connect(addr).await.unwrap();
    stream
        .write_all(format!("GET {path} HTTP/1.1\r\nhost: {addr}\r\nconnection: close\r\n\r\n").as_bytes())
        .await
        .unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).await.unwrap();
    response
}

async fn start(options: RuntimeOptions) -> (String, StageRuntime) {
    let stage = Stage::new(settings(0), toy_resources()).unwrap();
    let engine = StageRuntime::spawn(stage, Arc::new(SystemClock), options);
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let handle = engine.handle();
    tokio::spawn(async move { runtime::serve(listener, handle).await.unwrap() });
    (addr, engine)
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn health_endpoint_reports_version_and_scenes() {
    let (addr, _engine) = start(RuntimeOptions::default()).await;
    let response = http_get(&addr, "/health").await;
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    let body: Value = serde_json::from_str(response.split("\r\n\r\n").nth(1).unwrap()).unwrap();
    assert_eq!(body["protocol"], 1);
    assert_eq!(body["active_scenes"], 0);
    assert_eq!(body["version"], env!("CARGO_PKG_VERSION"));

    let mut performer = Client::connect(&addr).await;
    performer.send("hello", "", json!({"role": "performer"})).await;
    performer.until("welcome").await;
    performer.send("suggestion", "s", json!({"text": "a cave"})).await;
    performer.until_in("scene_started", Some("s")).await;
    let body = http_get(&addr, "/health").await;
    assert!(body.contains(r#""active_scenes":1"#), "{body}");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn rejected_operator_is_disconnected() {
    let (addr, _engine) = start(RuntimeOptions::default()).await;
    let mut intruder = Client::connect(&addr).await;
    intruder.send("hello", "", json!({"role": "operator", "key": "wrong"})).await;
    let error = intruder.recv().await.unwrap();
    assert_eq!(error.payload["code"], "auth");
    assert!(intruder.recv().await.is_none());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn live_show_over_websockets_replays_identically() {
    let export_dir = tempfile::tempdir().unwrap();
    let options = RuntimeOptions {
        tick: Duration::from_millis(5),
        export_dir: Some(export_dir.path().to_path_buf()),
        record_log: true,
        ..RuntimeOptions::default()
    };
    let (addr, engine) = start(options).await;

    let mut operator = Client::connect(&addr).await;
    operator.send("hello", "", json!({"role": "operator", "key": OPERATOR_KEY})).await;
    operator.until("welcome").await;
    let mut audience = Client::connect(&addr).await;
    audience.send("hello", "", json!({"role": "audience"})).await;
    audience.until("welcome").await;

    // two performers drive two scenes at once while the operator steers one
    let scenes = ["north", "south"];
    let mut tasks = Vec::new();
    for id in scenes {
        let addr = addr.clone();
        tasks.push(tokio::spawn(async move {
            let mut performer = Client::connect(&addr).await;
            performer.send("hello", "", json!({"role": "performer"})).await;
            performer.until("welcome").await;
            performer.send("suggestion", id, json!({"text": format!("a {id} pole expedition")})).await;
            performer.until_in("scene_started", Some(id)).await;
            for line in ["It is cold.", "The dogs are restless.", "We should turn back."] {
                performer.send("priming_line", id, json!({ "text": line })).await;
            }
            performer.until_in("ai_line", Some(id)).await;
            for line in ["Not yet.", "Look, a light!", "Is that a cabin?"] {
                performer.send("human_line", id, json!({ "text": line })).await;
                performer.until_in("ai_line", Some(id)).await;
            }
            performer.send("end_scene", id, json!({})).await;
            performer.until_in("scene_ended", Some(id)).await;
        }));
    }
    let mut seen = Vec::new();
    while seen.len() < 2 {
        let m = operator.recv().await.unwrap();
        if m.kind == "scene_started" && !seen.contains(&m.session) {
            seen.push(m.session.clone());
            operator.send("status", "", json!({})).await;
        }
    }
    for t in tasks {
        t.await.unwrap();
    }

    let mut audience_lines = 0;
    let mut last_seq = 0;
    while audience_lines < 8 {
        let m = audience.recv().await.unwrap();
        assert!(m.seq > last_seq);
        last_seq = m.seq;
        assert!(!m.to_json().contains("control_source"));
        audience_lines += usize::from(m.kind == "ai_line");
    }

    let handle = engine.handle();
    let live = engine.shutdown();
    let log = handle.command_log();
    assert!(log.len() > 30);

    let mut replayed = Stage::new(settings(0), toy_resources()).unwrap();
    for entry in &log {
        let effects = replayed.apply(entry.now, entry.input.clone());
        assert_eq!(effects, entry.effects, "replay diverged at {:?}", entry.input);
    }
    assert_eq!(replayed.snapshot(), live.snapshot());
    for id in scenes {
        assert_eq!(live.scene(id).unwrap().transcript().len(), 10);
        let exported = std::fs::read_to_string(export_dir.path().join(format!("{id}.transcript.jsonl"))).unwrap();
        assert_eq!(exported, live.scene(id).unwrap().transcript_jsonl());
    }
    let exports: Vec<_> = log
        .iter()
        .flat_map(|e| &e.effects)
        .filter(|e| matches!(e, Effect::Export { .. }))
        .collect();
    assert_eq!(exports.len(), 2);
}
