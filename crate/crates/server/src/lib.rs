//! Websocket host for tabletop sessions.
//!
//! Routes:
//! - `GET /ws`: the `lp/1` session protocol (see `PROTOCOL.md`)
//! - `GET /tiles/{mode}/{z}/{x}/{y}.png`: map tiles, placeholders when offline
//! - `GET /sessions` and `GET /sessions/{id}/journal`: plain-text inspection
//! - everything else: static files from the UI directory, when configured

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use axum::extract::{Path, State, WebSocketUpgrade};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use livepaper_core::map::{MapMode, TileClient, TileRef};
use livepaper_core::session::SessionError;
use thiserror::Error;
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

mod connection;
pub mod hub;

pub use hub::{Hub, SessionFactory, SessionHandle, Update};

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8750";

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot create journal {}: {source}", path.display())]
    Journal { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("invalid session id `{0}`")]
    BadSessionId(String),
    #[error("session registry is poisoned")]
    Poisoned,
}

/// Shared server state, cheap to clone.
#[derive(Clone)]
pub struct App {
    pub hub: Arc<Hub>,
    tiles: Arc<TileClient>,
    started: Instant,
}

impl App {
    pub fn new(factory: SessionFactory, tiles: TileClient) -> Self {
        Self {
            hub: Arc::new(Hub::new(factory)),
            tiles: Arc::new(tiles),
            started: Instant::now(),
        }
    }

    /// Server clock in milliseconds; the only time source for events.
    pub fn now(&self) -> u64 {
        self.started.elapsed().as_millis() as u64
    }
}

pub fn router(app: App, ui_dir: Option<PathBuf>) -> Router {
    let router = Router::new()
        .route("/ws", get(ws_upgrade))
        .route("/tiles/{mode}/{z}/{x}/{file}", get(tile))
        .route("/sessions", get(list_sessions))
        .route("/sessions/{id}/journal", get(journal))
        .with_state(app);
    match ui_dir {
        Some(dir) => router.fallback_service(ServeDir::new(dir)),
        None => router,
    }
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(app): State<App>) -> Response {
    ws.on_upgrade(move |socket| connection::run(socket, app))
}

async fn tile(State(app): State<App>, Path((mode, z, x, file)): Path<(String, u8, u32, String)>) -> Response {
    let parsed = mode.parse::<MapMode>().ok().zip(
        file.strip_suffix(".png")
            .and_then(|y| y.parse::<u32>().ok())
            .and_then(|y| TileRef::new(z, x, y)),
    );
    let Some((mode, tile)) = parsed else {
        return (StatusCode::NOT_FOUND, "no such tile").into_response();
    };
    let tiles = app.tiles.clone();
    match tokio::task::spawn_blocking(move || tiles.fetch_tile(tile, mode)).await {
        Ok(png) => ([(header::CONTENT_TYPE, "image/png")], png).into_response(),
        Err(_) => StatusCode::INTERNAL_SERVER_ERROR.into_response(),
    }
}

async fn list_sessions(State(app): State<App>) -> String {
    app.hub.ids().into_iter().map(|id| id + "\n").collect()
}

async fn journal(State(app): State<App>, Path(id): Path<String>) -> Response {
    match app.hub.get(&id) {
        Some(handle) => handle.journal_text().into_response(),
        None => (StatusCode::NOT_FOUND, "no such session").into_response(),
    }
}

/// Binds `addr` and serves in a background task. Returns the bound address.
pub async fn spawn(addr: &str, app: App, ui_dir: Option<PathBuf>) -> Result<SocketAddr, ServerError> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let router = router(app, ui_dir);
    tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, router).await {
            log::error!("server stopped: {e}");
        }
    });
    Ok(local)
}

/// Serves until the process is stopped.
pub async fn serve(addr: &str, app: App, ui_dir: Option<PathBuf>) -> Result<(), ServerError> {
    let listener = TcpListener::bind(addr).await?;
    log::info!("listening on ws://{}/ws", listener.local_addr()?);
    axum::serve(listener, router(app, ui_dir)).await?;
    Ok(())
}
