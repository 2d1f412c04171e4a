//! HTTP backend: sessions and interaction events, the note store with its
//! scent index and discussion threads, and model-backed characterization and
//! recommendation.
//!
//! State changes are journalled to disk (see [`persist`]) before a request is
//! acknowledged. Reads take a shared lock on the in-memory state.

pub mod api;
pub mod persist;
pub mod state;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

pub use api::router;
pub use state::{AppState, LoadError, LoadedModel};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub bind: SocketAddr,
    /// Required bearer token; `None` disables authentication.
    pub token: Option<String>,
    pub model: Option<PathBuf>,
    /// Evaluation report whose kappa band is attached to characterizations.
    pub report: Option<PathBuf>,
    /// Journal entries between snapshots; 0 never snapshots.
    pub snapshot_every: usize,
    pub hover_min_ms: u64,
}

/// Recover state from `config.data_dir`.
pub fn open_state(config: &ServiceConfig) -> Result<Arc<AppState>, LoadError> {
    let model = config
        .model
        .as_deref()
        .map(|m| LoadedModel::from_files(m, config.report.as_deref()))
        .transpose()?;
    let (state, recovery) =
        AppState::open(&config.data_dir, config.snapshot_every, model, config.token.clone(), config.hover_min_ms)?;
    tracing::info!(
        replayed = recovery.replayed,
        truncated_bytes = recovery.truncated_bytes,
        "recovered state from {}",
        config.data_dir.display()
    );
    Ok(Arc::new(state))
}

/// Serve until ctrl-c.
pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    let state = open_state(&config).map_err(std::io::Error::other)?;
    serve_state(state, config.bind).await
}

/// Serve already recovered state until ctrl-c.
pub async fn serve_state(state: Arc<AppState>, bind: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
