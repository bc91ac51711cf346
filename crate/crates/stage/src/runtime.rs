//! Network runtime: one engine thread, websocket clients and a health route.
//!
//! All inputs go through a single channel to the thread that owns the
//! [`Stage`], so commands for a scene never interleave. Each client gets an
//! outbox; audience outboxes are bounded and drop their oldest message when
//! full, others never drop.

use std::collections::{HashMap, VecDeque};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use improv_core::Millis;
use serde::{Deserialize, Serialize};
use tokio::sync::Notify;

use crate::engine::{ConnId, Effect, Stage, StageInput};
use crate::protocol::{Role, Welcome, PROTOCOL_VERSION};

pub trait Clock: Send + Sync + 'static {
    fn now_ms(&self) -> Millis;
}

/// Milliseconds since the Unix epoch.
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> Millis {
        SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as Millis)
    }
}

/// A clock that only moves when told to.
#[derive(Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start: Millis) -> Self {
        Self(AtomicU64::new(start))
    }

    pub fn advance(&self, ms: Millis) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> Millis {
        self.0.load(Ordering::SeqCst)
    }
}

/// Outgoing messages for one client.
pub struct Outbox {
    queue: Mutex<VecDeque<String>>,
    notify: Notify,
    capacity: usize,
    lossy: AtomicBool,
    closed: AtomicBool,
    dropped: AtomicU64,
}

impl Outbox {
    pub fn new(capacity: usize) -> Self {
        Self {
            queue: Mutex::new(VecDeque::new()),
            notify: Notify::new(),
            capacity: capacity.max(1),
            lossy: AtomicBool::new(false),
            closed: AtomicBool::new(false),
            dropped: AtomicU64::new(0),
        }
    }

    /// Drop the oldest message instead of growing past capacity.
    pub fn set_lossy(&self, lossy: bool) {
        self.lossy.store(lossy, Ordering::SeqCst);
    }

    pub fn push(&self, message: String) {
        let mut queue = self.queue.lock().expect("outbox lock");
        if self.lossy.load(Ordering::SeqCst) && queue.len() >= self.capacity {
            queue.pop_front();
            self.dropped.fetch_add(1, Ordering::Relaxed);
        }
        queue.push_back(message);
        drop(queue);
        self.notify.notify_one();
    }

    pub fn drain(&self) -> Vec<String> {
        self.queue.lock().expect("outbox lock").drain(..).collect()
    }

    pub fn len(&self) -> usize {
        self.queue.lock().expect("outbox lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }

    pub fn close(&self) {
        self.closed.store(true, Ordering::SeqCst);
        self.notify.notify_one();
    }

    pub fn is_closed(&self) -> bool {
        self.closed.load(Ordering::SeqCst)
    }

    /// Wait until something was pushed or the outbox closed.
    pub async fn ready(&self) {
        self.notify.notified().await
    }
}

/// One processed input with the time it was applied and what it produced.
#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub now: Millis,
    pub input: StageInput,
    pub effects: Vec<Effect>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Health {
    pub version: String,
    pub protocol: u32,
    pub active_scenes: usize,
}

#[derive(Debug, Clone)]
pub struct RuntimeOptions {
    pub tick: Duration,
    pub audience_outbox: usize,
    pub export_dir: Option<PathBuf>,
    /// Keep every input and its effects for replay checks.
    pub record_log: bool,
}

impl Default for RuntimeOptions {
    fn default() -> Self {
        Self { tick: Duration::from_millis(100), audience_outbox: 256, export_dir: None, record_log: false }
    }
}

enum ActorMsg {
    Input(StageInput),
    Shutdown,
}

type Outboxes = Arc<Mutex<HashMap<ConnId, Arc<Outbox>>>>;

/// Cheap, cloneable access to a running stage.
#[derive(Clone)]
pub struct StageHandle {
    tx: mpsc::Sender<ActorMsg>,
    outboxes: Outboxes,
    next_conn: Arc<AtomicU64>,
    active: Arc<AtomicUsize>,
    log: Arc<Mutex<Vec<LogEntry>>>,
    audience_outbox: usize,
}

impl StageHandle {
    /// Register a client; its messages are then accepted by [`StageHandle::submit`].
    pub fn connect(&self) -> (ConnId, Arc<Outbox>) {
        let conn = self.next_conn.fetch_add(1, Ordering::SeqCst);
        let outbox = Arc::new(Outbox::new(self.audience_outbox));
        self.outboxes.lock().expect("outbox map lock").insert(conn, outbox.clone());
        let _ = self.tx.send(ActorMsg::Input(StageInput::Connect { conn }));
        (conn, outbox)
    }

    pub fn submit(&self, conn: ConnId, text: String) {
        let _ = self.tx.send(ActorMsg::Input(StageInput::Message { conn, text }));
    }

    pub fn disconnect(&self, conn: ConnId) {
        self.outboxes.lock().expect("outbox map lock").remove(&conn);
        let _ = self.tx.send(ActorMsg::Input(StageInput::Disconnect { conn }));
    }

    pub fn health(&self) -> Health {
        Health {
            version: env!("CARGO_PKG_VERSION").to_string(),
            protocol: PROTOCOL_VERSION,
            active_scenes: self.active.load(Ordering::SeqCst),
        }
    }

    pub fn command_log(&self) -> Vec<LogEntry> {
        self.log.lock().expect("log lock").clone()
    }
}

/// The engine thread and a handle to it.
pub struct StageRuntime {
    handle: StageHandle,
    thread: Option<JoinHandle<Stage>>,
}

impl StageRuntime {
    pub fn spawn(stage: Stage, clock: Arc<dyn Clock>, options: RuntimeOptions) -> Self {
        let (tx, rx) = mpsc::channel();
        let handle = StageHandle {
            tx,
            outboxes: Arc::default(),
            next_conn: Arc::new(AtomicU64::new(1)),
            active: Arc::default(),
            log: Arc::default(),
            audience_outbox: options.audience_outbox,
        };
        let actor = Actor { stage, clock, options, handle: handle.clone() };
        let thread = std::thread::Builder::new()
            .name("stage-engine".into())
            .spawn(move || actor.run(rx))
            .expect("spawn engine thread");
        Self { handle, thread: Some(thread) }
    }

    pub fn handle(&self) -> StageHandle {
        self.handle.clone()
    }

    /// Stop the engine thread and return the engine.
    pub fn shutdown(mut self) -> Stage {
        let _ = self.handle.tx.send(ActorMsg::Shutdown);
        self.thread.take().expect("running").join().expect("engine thread panicked")
    }
}

impl Drop for StageRuntime {
    fn drop(&mut self) {
        if let Some(thread) = self.thread.take() {
            let _ = self.handle.tx.send(ActorMsg::Shutdown);
            let _ = thread.join();
        }
    }
}

struct Actor {
    stage: Stage,
    clock: Arc<dyn Clock>,
    options: RuntimeOptions,
    handle: StageHandle,
}

impl Actor {
    fn run(mut self, rx: mpsc::Receiver<ActorMsg>) -> Stage {
        loop {
            let input = match rx.recv_timeout(self.options.tick) {
                Ok(ActorMsg::Input(input)) => input,
                Ok(ActorMsg::Shutdown) | Err(mpsc::RecvTimeoutError::Disconnected) => break,
                Err(mpsc::RecvTimeoutError::Timeout) => StageInput::Tick,
            };
            let now = self.clock.now_ms();
            let effects = self.stage.apply(now, input.clone());
            self.handle.active.store(self.stage.active_scenes(), Ordering::SeqCst);
            if self.options.record_log {
                self.handle.log.lock().expect("log lock").push(LogEntry { now, input, effects: effects.clone() });
            }
            self.dispatch(&effects);
        }
        self.stage
    }

    fn dispatch(&self, effects: &[Effect]) {
        let outboxes = self.handle.outboxes.lock().expect("outbox map lock");
        for effect in effects {
            match effect {
                Effect::Send { conn, message } => {
                    let Some(outbox) = outboxes.get(conn) else { continue };
                    if message.kind == "welcome" {
                        let role = serde_json::from_value::<Welcome>(message.payload.clone()).map(|w| w.role);
                        outbox.set_lossy(matches!(role, Ok(Role::Audience)));
                    }
                    outbox.push(message.to_json());
                }
                Effect::Close { conn } => {
                    if let Some(outbox) = outboxes.get(conn) {
                        outbox.close();
                    }
                }
                Effect::Export { file_name, contents } => self.export(file_name, contents),
            }
        }
    }

    fn export(&self, file_name: &str, contents: &str) {
        let Some(dir) = &self.options.export_dir else {
            tracing::info!(file_name, "export skipped, no export directory configured");
            return;
        };
        let path = dir.join(file_name);
        match std::fs::create_dir_all(dir).and_then(|_| std::fs::write(&path, contents)) {
            Ok(()) => tracing::info!(path = %path.display(), "exported"),
            Err(e) => tracing::error!(path = %path.display(), "export failed: {e}"),
        }
    }
}

/// `/ws` for show traffic, `/health` for liveness.
pub fn router(handle: StageHandle) -> Router {
    Router::new().route("/ws", get(ws_upgrade)).route("/health", get(health)).with_state(handle)
}

async fn health(State(handle): State<StageHandle>) -> Json<Health> {
    Json(handle.health())
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(handle): State<StageHandle>) -> Response {
    ws.on_upgrade(move |socket| client_session(socket, handle)).into_response()
}

async fn client_session(mut socket: WebSocket, handle: StageHandle) {
    let (conn, outbox) = handle.connect();
    tracing::debug!(conn, "websocket opened");
    'session: loop {
        tokio::select! {
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Text(text))) => handle.submit(conn, text.as_str().to_owned()),
                Some(Ok(Message::Binary(bytes))) => handle.submit(conn, String::from_utf8_lossy(&bytes).into_owned()),
                Some(Ok(Message::Ping(_) | Message::Pong(_))) => {}
                Some(Ok(Message::Close(_)) | Err(_)) | None => break,
            },
            _ = outbox.ready() => {
                for message in outbox.drain() {
                    if socket.send(Message::Text(message.into())).await.is_err() {
                        break 'session;
                    }
                }
                if outbox.is_closed() {
                    let _ = socket.send(Message::Close(None)).await;
                    break;
                }
            }
        }
    }
    handle.disconnect(conn);
    tracing::debug!(conn, "websocket closed");
}

/// Serve until the listener fails or ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, handle: StageHandle) -> std::io::Result<()> {
    axum::serve(listener, router(handle))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
