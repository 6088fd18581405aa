//! Websocket bridge for interactive target steering.
//!
//! The control loop runs on its own thread and publishes a snapshot after
//! every cycle into a watch slot. A publisher task forwards the newest
//! snapshot to a broadcast channel at most `snapshot_hz` times per second;
//! each websocket connection subscribes to that channel, so every client sees
//! the same frames. A client that falls behind the channel is disconnected.
//! Goal updates go straight to the episode's [`GoalInbox`].

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse};
use axum::routing::get;
use axum::Router;
use jointmpc::controller::{Episode, EpisodeLog, StepReport};
use jointmpc::costs::TERM_NAMES;
use jointmpc::simworld::GoalInbox;
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, watch};
use tower_http::services::ServeDir;

use crate::config::ExperimentConfig;
use crate::runner::{build_episode, initial_state};
use crate::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct BridgeConfig {
    /// Upper bound on snapshots per second.
    pub snapshot_hz: f64,
    /// Directory served at `/`; a placeholder page is served when unset.
    pub static_dir: Option<PathBuf>,
    /// Frames a client may fall behind before it is dropped.
    pub client_buffer: usize,
    /// Pace the loop at the control period; otherwise step as fast as possible.
    pub realtime: bool,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        BridgeConfig {
            snapshot_hz: 30.0,
            static_dir: None,
            client_buffer: 64,
            realtime: true,
        }
    }
}

/// Server → client state frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    #[serde(rename = "type")]
    pub kind: String,
    pub v: u32,
    pub t: f64,
    pub q: Vec<f64>,
    /// End-effector position, two coordinates for planar worlds.
    pub ee: Vec<f64>,
    pub goal: Vec<f64>,
    pub top_rollouts: Vec<Vec<Vec<f64>>>,
    /// Instantaneous cost per term plus `total`.
    pub costs: BTreeMap<String, f64>,
    pub latency_ms: f64,
}

impl Snapshot {
    pub fn from_report(report: &StepReport, dimension: usize) -> Self {
        let row = &report.row;
        let mut costs: BTreeMap<String, f64> = TERM_NAMES
            .iter()
            .zip(row.costs)
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        costs.insert("total".into(), row.cost_total);
        Snapshot {
            kind: "state".into(),
            v: SCHEMA_VERSION,
            t: row.t,
            q: row.position.clone(),
            ee: row.ee[..dimension].to_vec(),
            goal: row.goal[..dimension].to_vec(),
            top_rollouts: report
                .diagnostics
                .top_rollouts
                .iter()
                .map(|path| path.iter().map(|p| p[..dimension].to_vec()).collect())
                .collect(),
            costs,
            latency_ms: report.diagnostics.latency_ms,
        }
    }
}

/// Client → server messages.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    SetGoal { position: Vec<f64> },
    /// Toggles between paused and running.
    Pause,
    Reset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorFrame {
    #[serde(rename = "type")]
    pub kind: String,
    pub v: u32,
    pub message: String,
}

impl ErrorFrame {
    pub fn new(message: impl Into<String>) -> Self {
        ErrorFrame {
            kind: "error".into(),
            v: SCHEMA_VERSION,
            message: message.into(),
        }
    }
}

/// Parses and validates one client frame against the world dimension.
pub fn parse_client_message(text: &str, dimension: usize) -> Result<ClientMessage, String> {
    let msg: ClientMessage = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if let ClientMessage::SetGoal { position } = &msg {
        if position.len() != dimension {
            return Err(format!("set_goal needs {dimension} coordinates, got {}", position.len()));
        }
        if position.iter().any(|x| !x.is_finite()) {
            return Err("set_goal position must be finite".into());
        }
    }
    Ok(msg)
}

enum Command {
    Pause,
    Reset,
}

struct ControlLoop {
    episode: Episode,
    cfg: ExperimentConfig,
    dimension: usize,
    commands: mpsc::Receiver<Command>,
    snapshots: watch::Sender<Option<Arc<Snapshot>>>,
    stop: Arc<AtomicBool>,
    realtime: bool,
}

impl ControlLoop {
    fn reset(&mut self) -> Result<(), HarnessError> {
        let start = initial_state(&self.cfg, self.episode.controller().chain())?;
        self.episode
            .reset(start, self.cfg.scenario.noise_sigma, self.cfg.scenario.seed)?;
        Ok(())
    }

    fn run(mut self) -> EpisodeLog {
        let period = Duration::from_secs_f64(self.cfg.controller.control_period);
        let mut paused = false;
        let mut next = Instant::now();
        while !self.stop.load(Ordering::Relaxed) {
            while let Ok(cmd) = self.commands.try_recv() {
                match cmd {
                    Command::Pause => paused = !paused,
                    Command::Reset => {
                        if let Err(e) = self.reset() {
                            log::error!("reset failed: {e}");
                        }
                    }
                }
            }
            if !paused {
                match self.episode.step() {
                    Ok(report) => {
                        let snap = Snapshot::from_report(&report, self.dimension);
                        self.snapshots.send_replace(Some(Arc::new(snap)));
                    }
                    Err(e) => {
                        log::warn!("episode stopped ({e}); resetting");
                        if let Err(e) = self.reset() {
                            log::error!("reset failed: {e}");
                            break;
                        }
                    }
                }
            }
            if self.realtime || paused {
                next += period;
                let now = Instant::now();
                if next > now {
                    std::thread::sleep(next - now);
                } else {
                    next = now;
                }
            }
        }
        self.episode.into_log()
    }
}

#[derive(Clone)]
struct AppState {
    frames: broadcast::Sender<Arc<str>>,
    inbox: GoalInbox,
    commands: mpsc::SyncSender<Command>,
    dimension: usize,
}

/// A running bridge. Dropping it without [`BridgeHandle::stop`] leaves the
/// server running until the runtime shuts down.
pub struct BridgeHandle {
    pub addr: SocketAddr,
    stop: Arc<AtomicBool>,
    control: Option<JoinHandle<EpisodeLog>>,
    server: tokio::task::JoinHandle<()>,
    publisher: tokio::task::JoinHandle<()>,
}

impl BridgeHandle {
    /// Stops the control loop and the server; returns the log since the last reset.
    pub async fn stop(mut self) -> Result<EpisodeLog, HarnessError> {
        self.stop.store(true, Ordering::Relaxed);
        self.server.abort();
        self.publisher.abort();
        let control = self.control.take().expect("control thread present");
        tokio::task::spawn_blocking(move || control.join())
            .await
            .map_err(|e| HarnessError::Bridge(e.to_string()))?
            .map_err(|_| HarnessError::Bridge("control thread panicked".into()))
    }
}

/// Builds the episode, binds `addr` and starts serving. Must be called from
/// inside a tokio runtime.
pub async fn start(cfg: ExperimentConfig, bridge: BridgeConfig, addr: &str) -> Result<BridgeHandle, HarnessError> {
    if !(bridge.snapshot_hz > 0.0) {
        return Err(HarnessError::Config("snapshot rate must be positive".into()));
    }
    let inbox = GoalInbox::new();
    let episode = build_episode(&cfg, Some(inbox.clone()))?;
    let dimension = if episode.controller().world().dimension == 2 { 2 } else { 3 };

    let (snap_tx, snap_rx) = watch::channel(None);
    let (cmd_tx, cmd_rx) = mpsc::sync_channel(16);
    let (frames, _) = broadcast::channel(bridge.client_buffer.max(1));
    let stop = Arc::new(AtomicBool::new(false));

    let control = ControlLoop {
        episode,
        cfg,
        dimension,
        commands: cmd_rx,
        snapshots: snap_tx,
        stop: stop.clone(),
        realtime: bridge.realtime,
    };
    let control = std::thread::Builder::new()
        .name("control".into())
        .spawn(move || control.run())
        .map_err(|e| HarnessError::Bridge(e.to_string()))?;

    let publisher = tokio::spawn(publish(snap_rx, frames.clone(), bridge.snapshot_hz));

    let state = AppState {
        frames,
        inbox,
        commands: cmd_tx,
        dimension,
    };
    let router = Router::new().route("/ws", get(ws_upgrade));
    let router = match &bridge.static_dir {
        Some(dir) => router.fallback_service(ServeDir::new(dir)),
        None => router.route("/", get(placeholder)),
    }
    .with_state(state);

    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| HarnessError::Bridge(format!("cannot bind {addr}: {e}")))?;
    let addr = listener
        .local_addr()
        .map_err(|e| HarnessError::Bridge(e.to_string()))?;
    let server = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, router).await {
            log::error!("bridge server stopped: {e}");
        }
    });
    log::info!("bridge listening on {addr}");
    Ok(BridgeHandle {
        addr,
        stop,
        control: Some(control),
        server,
        publisher,
    })
}

async fn publish(mut snaps: watch::Receiver<Option<Arc<Snapshot>>>, frames: broadcast::Sender<Arc<str>>, hz: f64) {
    let min_gap = Duration::from_secs_f64(1.0 / hz);
    while snaps.changed().await.is_ok() {
        let snap = snaps.borrow_and_update().clone();
        if let Some(snap) = snap {
            let text: Arc<str> = serde_json::to_string(&*snap).expect("snapshot serializes").into();
            // no receivers is fine: the loop runs with or without clients
            let _ = frames.send(text);
        }
        tokio::time::sleep(min_gap).await;
    }
}

async fn placeholder() -> Html<&'static str> {
    Html("<!doctype html><title>jointmpc</title><p>Websocket endpoint: <code>/ws</code>. Start with <code>--static-dir</code> to serve the UI.</p>")
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client(socket, state))
}

async fn client(mut socket: WebSocket, state: AppState) {
    let mut frames = state.frames.subscribe();
    loop {
        tokio::select! {
            frame = frames.recv() => match frame {
                Ok(text) => {
                    if socket.send(Message::Text(text.as_ref().into())).await.is_err() {
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    log::info!("dropping slow client ({n} frames behind)");
                    let _ = socket.send(Message::Close(None)).await;
                    return;
                }
                Err(broadcast::error::RecvError::Closed) => return,
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Text(text))) => {
                    if let Err(message) = handle_message(&state, text.as_str()) {
                        let frame = serde_json::to_string(&ErrorFrame::new(message)).expect("error frame serializes");
                        if socket.send(Message::Text(frame.into())).await.is_err() {
                            return;
                        }
                    }
                }
                Some(Ok(Message::Binary(_))) => {
                    let frame = serde_json::to_string(&ErrorFrame::new("binary frames are not supported")).expect("error frame serializes");
                    if socket.send(Message::Text(frame.into())).await.is_err() {
                        return;
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

fn handle_message(state: &AppState, text: &str) -> Result<(), String> {
    match parse_client_message(text, state.dimension)? {
        ClientMessage::SetGoal { position } => state.inbox.post(position),
        ClientMessage::Pause => state.commands.try_send(Command::Pause).map_err(|e| e.to_string())?,
        ClientMessage::Reset => state.commands.try_send(Command::Reset).map_err(|e| e.to_string())?,
    }
    Ok(())
}
