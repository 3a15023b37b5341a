//! HTTP service over the snapshot engine.
//!
//! Datasets are uploaded once and addressed by a digest of their inputs.
//! Sessions build a snapshot tree over a contiguous frame selection; every
//! layer operation is appended to a JSON log under the data directory and
//! the session is rebuilt by replaying that log after a restart.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/datasets` | multipart `tracking`, `links`, `events`, `config` |
//! | GET | `/datasets/{id}` | descriptor |
//! | GET | `/datasets/{id}/matrix?from=&to=` | link counts over an inclusive frame range |
//! | GET | `/datasets/{id}/projection?perplexity=&seed=&iters=` | t-SNE of frame vectors |
//! | GET | `/datasets/{id}/events` | score timeline and events |
//! | GET | `/datasets/{id}/membership?player=` or `?a=&b=` | frames containing a player or link |
//! | POST | `/sessions` | `{dataset_id, selection}` |
//! | GET | `/sessions/{id}` | tree and history |
//! | GET | `/sessions/{id}/log` | replayable session log |
//! | POST | `/sessions/{id}/layers` | `{thresholds, from_layer?}` |
//! | PUT | `/sessions/{id}/layers/top` | regenerate top with `{thresholds}` |
//! | DELETE | `/sessions/{id}/layers/top` | |
//! | GET | `/sessions/{id}/snapshots/{sid}` | snapshot detail |

pub mod dataset;
pub mod error;
pub mod routes;
pub mod state;
pub mod store;
pub mod views;

use std::net::SocketAddr;
use std::path::PathBuf;

use axum::extract::DefaultBodyLimit;
use axum::routing::{get, post, put};
use axum::Router;

pub use error::ApiError;
pub use state::AppState;

const MAX_UPLOAD: usize = 512 * 1024 * 1024;

pub fn router(state: AppState) -> Router {
    use routes::*;
    Router::new()
        .route("/health", get(health))
        .route("/datasets", post(upload_dataset))
        .route("/datasets/{id}", get(get_dataset))
        .route("/datasets/{id}/matrix", get(get_matrix))
        .route("/datasets/{id}/projection", get(get_projection))
        .route("/datasets/{id}/events", get(get_events))
        .route("/datasets/{id}/membership", get(get_membership))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/log", get(get_session_log))
        .route("/sessions/{id}/layers", post(post_layer))
        .route(
            "/sessions/{id}/layers/top",
            put(put_top_layer).delete(delete_top_layer),
        )
        .route("/sessions/{id}/snapshots/{sid}", get(get_snapshot))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD))
        .with_state(state)
}

/// Serve until Ctrl-C.
pub async fn serve(addr: SocketAddr, data_dir: PathBuf) -> std::io::Result<()> {
    let state = AppState::open(data_dir)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
