//! Axum WebSocket service running one simulation per connection.

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path as AxumPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, watch};

use super::protocol::{ClientMessage, ErrorCode, ServerMessage, StateFrame};
use super::session::{Session, SessionTiming};
use crate::demos::io::write_demo;
use crate::sim::SimConfig;

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub sim: SimConfig,
    /// Finished recordings are written here as `<id>.jsonl`.
    pub out_dir: PathBuf,
    pub max_sessions: usize,
    pub state_rate: f64,
    pub timing: SessionTiming,
    /// Static browser client served under `/` when set.
    pub ui_dir: Option<PathBuf>,
}

impl ServerConfig {
    pub fn new(sim: SimConfig, out_dir: PathBuf) -> Self {
        Self {
            sim,
            out_dir,
            max_sessions: 4,
            state_rate: 30.0,
            timing: SessionTiming::default(),
            ui_dir: None,
        }
    }
}

struct Shared {
    cfg: ServerConfig,
    active: AtomicUsize,
    next_id: AtomicU64,
}

/// Releases a session slot when dropped.
struct Slot(Arc<Shared>);

impl Drop for Slot {
    fn drop(&mut self) {
        self.0.active.fetch_sub(1, Ordering::SeqCst);
    }
}

pub fn router(cfg: ServerConfig) -> Router {
    let shared = Arc::new(Shared {
        cfg,
        active: AtomicUsize::new(0),
        next_id: AtomicU64::new(1),
    });
    let router = Router::new().route("/session", get(upgrade));
    let router = match &shared.cfg.ui_dir {
        Some(_) => router
            .route("/", get(static_file))
            .route("/{*path}", get(static_file)),
        None => router,
    };
    router.with_state(shared)
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") => "text/javascript; charset=utf-8",
        Some("css") => "text/css; charset=utf-8",
        Some("json" | "map") => "application/json",
        Some("svg") => "image/svg+xml",
        _ => "application/octet-stream",
    }
}

async fn static_file(
    State(shared): State<Arc<Shared>>,
    path: Option<AxumPath<String>>,
) -> Response {
    let Some(root) = &shared.cfg.ui_dir else {
        return StatusCode::NOT_FOUND.into_response();
    };
    let rel = path.map_or_else(|| "index.html".to_string(), |AxumPath(p)| p);
    let rel = Path::new(&rel);
    if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return StatusCode::NOT_FOUND.into_response();
    }
    let full = root.join(rel);
    match tokio::fs::read(&full).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&full))], bytes).into_response(),
        Err(_) => StatusCode::NOT_FOUND.into_response(),
    }
}

/// Binds `addr` and serves until the task is dropped. Returns the bound address
/// through `on_bound` so callers may bind port 0.
pub async fn serve(
    addr: SocketAddr,
    cfg: ServerConfig,
    on_bound: impl FnOnce(SocketAddr),
) -> std::io::Result<()> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let listener = TcpListener::bind(addr).await?;
    on_bound(listener.local_addr()?);
    axum::serve(listener, router(cfg)).await
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> Response {
    let taken = shared.active.fetch_add(1, Ordering::SeqCst);
    let slot = Slot(shared.clone());
    if taken >= shared.cfg.max_sessions {
        return (StatusCode::SERVICE_UNAVAILABLE, "session limit reached").into_response();
    }
    let id = shared.next_id.fetch_add(1, Ordering::SeqCst);
    ws.on_upgrade(move |socket| async move {
        run_session(socket, &shared.cfg, id).await;
        drop(slot);
    })
}

fn text(msg: &ServerMessage) -> Message {
    Message::Text(
        serde_json::to_string(msg)
            .expect("server messages serialize")
            .into(),
    )
}

async fn run_session(socket: WebSocket, cfg: &ServerConfig, id: u64) {
    let mut session = match Session::new(id, cfg.sim.clone(), cfg.timing.clone(), id) {
        Ok(s) => s,
        Err(e) => {
            log::error!("session {id}: {e}");
            return;
        }
    };
    let (mut sink, mut stream) = socket.split();
    let (reply_tx, mut reply_rx) = mpsc::channel::<ServerMessage>(64);
    let (frame_tx, mut frame_rx) = watch::channel::<Option<StateFrame>>(None);

    // The writer owns the socket sink. State frames travel through a watch channel,
    // so a slow client only ever sees the newest frame and never stalls the sim.
    let writer = tokio::spawn(async move {
        loop {
            let msg = tokio::select! {
                biased;
                r = reply_rx.recv() => match r {
                    Some(m) => m,
                    None => break,
                },
                changed = frame_rx.changed() => {
                    if changed.is_err() {
                        break;
                    }
                    match frame_rx.borrow_and_update().clone() {
                        Some(f) => ServerMessage::State(f),
                        None => continue,
                    }
                }
            };
            if sink.send(text(&msg)).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });

    let _ = reply_tx.send(session.hello(cfg.state_rate)).await;
    let dt = cfg.sim.dt;
    let mut ticker = tokio::time::interval(Duration::from_secs_f64(dt));
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Burst);
    let decimation = cfg.state_rate * dt;
    let mut ticks: u64 = 0;
    loop {
        tokio::select! {
            _ = ticker.tick() => {
                if let Err(e) = session.tick() {
                    let _ = reply_tx.send(ServerMessage::Error { code: ErrorCode::Internal, message: e.to_string() }).await;
                    break;
                }
                ticks += 1;
                // emit when the running frame count crosses an integer
                if ((ticks as f64) * decimation).floor() > (((ticks - 1) as f64) * decimation).floor() {
                    let _ = frame_tx.send(Some(session.frame()));
                }
            }
            incoming = stream.next() => {
                let reply = match incoming {
                    None | Some(Err(_)) | Some(Ok(Message::Close(_))) => break,
                    Some(Ok(Message::Text(t))) => handle_text(&mut session, t.as_str(), cfg),
                    Some(Ok(Message::Binary(_))) => Some(ServerMessage::Error {
                        code: ErrorCode::Malformed,
                        message: "binary frames are not supported".into(),
                    }),
                    Some(Ok(_)) => None,
                };
                if let Some(r) = reply {
                    if reply_tx.send(r).await.is_err() {
                        break;
                    }
                }
            }
        }
    }
    drop(reply_tx);
    drop(frame_tx);
    let _ = writer.await;
}

fn handle_text(session: &mut Session, text: &str, cfg: &ServerConfig) -> Option<ServerMessage> {
    let msg: ClientMessage = match serde_json::from_str(text) {
        Ok(m) => m,
        Err(e) => {
            return Some(ServerMessage::Error {
                code: ErrorCode::Malformed,
                message: e.to_string(),
            })
        }
    };
    let quiet = matches!(msg, ClientMessage::Wrench { .. });
    let (reply, demo) = session.handle(msg);
    if let Some(demo) = demo {
        let path = cfg.out_dir.join(format!("{}.jsonl", demo.id));
        if let Err(e) = write_demo(&demo, &path) {
            return Some(ServerMessage::Error {
                code: ErrorCode::Internal,
                message: e.to_string(),
            });
        }
        log::info!("wrote {} samples to {}", demo.samples.len(), path.display());
    }
    // wrench updates are acknowledged only when rejected
    match reply {
        ServerMessage::Ack { .. } if quiet => None,
        r => Some(r),
    }
}
