//! HTTP host for co-study sessions: session lifecycle, event ingress, a
//! server-sent event stream with resume, log export and static assets.

pub mod app;
pub mod config;
pub mod persist;
pub mod worker;

use thiserror::Error;

pub use app::{router, AppState};
pub use config::ServerConfig;
pub use worker::Clock;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Session(#[from] costudy_core::ConfigError),
    #[error(transparent)]
    Transcript(#[from] costudy_core::transcript::TranscriptError),
    #[error(transparent)]
    Manifest(#[from] costudy_core::scheduler::ManifestError),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Serves `state` on `listener` until `shutdown` resolves. Sessions are
/// closed first so open streams end and logs are flushed.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let app = router(state.clone());
    let closing = async move {
        shutdown.await;
        state.shutdown().await;
    };
    axum::serve(listener, app).with_graceful_shutdown(closing).await
}
