//! Triadic listening-test service.
//!
//! Raters receive sessions of least-presented triads plus one attention
//! check whose answer is a pair of identical recordings. Every state change
//! is appended to a JSONL event log, and the service state is rebuilt from
//! that log on startup.

pub mod data;
pub mod http;
pub mod store;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub use data::{load_study_data, StudyData};
pub use http::{router, AppState};
pub use store::{Session, SessionView, Study, StudyConfig, StudyError};

/// Opens the study in `data_dir` and builds the HTTP app.
pub fn open_app(data_dir: &Path, config: Option<StudyConfig>, static_dir: Option<PathBuf>) -> Result<axum::Router, StudyError> {
    let data = load_study_data(data_dir)?;
    let study = Study::open(data.triads, config.unwrap_or(data.config), data_dir.join(data::LOG_FILE))?;
    Ok(router(
        AppState {
            study: Arc::new(study),
            clips: Arc::new(data.clips),
        },
        static_dir,
    ))
}

/// Serves until Ctrl-C.
pub async fn serve(app: axum::Router, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
