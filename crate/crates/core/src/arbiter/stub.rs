//! Stub scorers speaking the scorer wire protocol, for tests and local
//! experiments without the neural sidecar.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::routing::post;
use axum::{Json, Router};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

use super::{bm25_scores, ScoreRequest, ScoreResponse};

#[derive(Debug, Clone, PartialEq)]
pub enum StubMode {
    /// Every candidate gets the same score.
    Constant(f64),
    /// The same score array regardless of the request.
    Fixed(Vec<f64>),
    /// BM25 over the candidate micro-index.
    Bm25,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StubBehavior {
    pub mode: StubMode,
    pub delay_ms: u64,
}

impl StubBehavior {
    pub fn new(mode: StubMode) -> Self {
        Self { mode, delay_ms: 0 }
    }

    pub fn delayed(mut self, delay_ms: u64) -> Self {
        self.delay_ms = delay_ms;
        self
    }

    pub fn respond(&self, request: &ScoreRequest) -> ScoreResponse {
        let scores = match &self.mode {
            StubMode::Constant(v) => vec![*v; request.candidates.len()],
            StubMode::Fixed(v) => v.clone(),
            StubMode::Bm25 => bm25_scores(&request.query, &request.candidates)
                .unwrap_or_else(|_| vec![0.0; request.candidates.len()]),
        };
        ScoreResponse { scores }
    }
}

async fn score(State(behavior): State<Arc<StubBehavior>>, Json(req): Json<ScoreRequest>) -> Json<ScoreResponse> {
    if behavior.delay_ms > 0 {
        tokio::time::sleep(Duration::from_millis(behavior.delay_ms)).await;
    }
    Json(behavior.respond(&req))
}

pub fn router(behavior: StubBehavior) -> Router {
    Router::new()
        .route("/score", post(score))
        .with_state(Arc::new(behavior))
}

/// A stub scorer listening on a loopback port; aborted on drop.
pub struct StubServer {
    pub addr: SocketAddr,
    handle: JoinHandle<()>,
}

impl StubServer {
    pub async fn spawn(behavior: StubBehavior) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0").await?;
        let addr = listener.local_addr()?;
        let app = router(behavior);
        let handle = tokio::spawn(async move {
            if let Err(e) = axum::serve(listener, app).await {
                log::error!("stub scorer stopped: {e}");
            }
        });
        Ok(Self { addr, handle })
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}/score", self.addr)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.handle.abort();
    }
}
