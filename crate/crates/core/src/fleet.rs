//! Simulated black-box agents replaying recorded dataset responses, with
//! injectable latency. Served in-process or over the agent wire protocol.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

use crate::gateway::{Agent, RespondReply, RespondRequest};
use crate::model::{
    normalize_utterance, AgentProfile, AgentResponse, Dataset, FallbackPhrases, ResponseStatus,
};
use crate::router::fnv1a;

pub const DEFAULT_FALLBACK_TEXT: &str = "Didn't get that!";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencySpec {
    Fixed(u64),
    /// Uniform in `min_ms..=max_ms`, drawn from a generator keyed by
    /// `(seed, agent, query)` so the schedule does not depend on call order.
    Uniform { min_ms: u64, max_ms: u64, seed: u64 },
}

impl Default for LatencySpec {
    fn default() -> Self {
        LatencySpec::Fixed(0)
    }
}

impl LatencySpec {
    pub fn latency_for(&self, agent_id: &str, normalized_query: &str) -> u64 {
        match *self {
            LatencySpec::Fixed(ms) => ms,
            LatencySpec::Uniform { min_ms, max_ms, seed } => {
                let (lo, hi) = (min_ms.min(max_ms), min_ms.max(max_ms));
                let key = fnv1a(&[agent_id.as_bytes(), b"\x1f", normalized_query.as_bytes()]);
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ key);
                rng.gen_range(lo..=hi)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReplayAgent {
    profile: AgentProfile,
    lookup: HashMap<String, (String, ResponseStatus)>,
    default_fallback: String,
    latency: LatencySpec,
}

impl ReplayAgent {
    pub fn profile(&self) -> &AgentProfile {
        &self.profile
    }

    pub fn latency(&self) -> LatencySpec {
        self.latency
    }

    pub fn with_latency(mut self, latency: LatencySpec) -> Self {
        self.latency = latency;
        self
    }

    pub fn lookup_len(&self) -> usize {
        self.lookup.len()
    }

    /// The recorded answer without any delay; `latency_ms` is 0.
    pub fn replay(&self, query_text: &str) -> AgentResponse {
        let key = normalize_utterance(query_text);
        self.answer(&key, 0)
    }

    fn answer(&self, key: &str, latency_ms: u64) -> AgentResponse {
        let (text, status) = match self.lookup.get(key) {
            Some((text, status)) => (text.clone(), *status),
            None => (self.default_fallback.clone(), ResponseStatus::Fallback),
        };
        AgentResponse::reported(&self.profile.id, text, status, latency_ms)
    }

    /// Sleeps the injected latency, then answers as [`ReplayAgent::replay`].
    pub async fn respond(&self, query_text: &str) -> AgentResponse {
        let key = normalize_utterance(query_text);
        let latency_ms = self.latency.latency_for(&self.profile.id, &key);
        if latency_ms > 0 {
            tokio::time::sleep(Duration::from_millis(latency_ms)).await;
        }
        self.answer(&key, latency_ms)
    }
}

#[async_trait]
impl Agent for ReplayAgent {
    fn id(&self) -> &str {
        &self.profile.id
    }

    async fn respond(&self, text: &str) -> AgentResponse {
        ReplayAgent::respond(self, text).await
    }
}

/// One replay agent per dataset profile, keyed by normalized utterance.
/// When two utterances normalize to the same key with different recorded
/// answers for an agent, the first is kept.
pub fn build_fleet(
    dataset: &Dataset,
    latency: LatencySpec,
    fallback_text: &str,
    phrases: &FallbackPhrases,
) -> Vec<ReplayAgent> {
    dataset
        .agents
        .iter()
        .map(|profile| {
            let mut lookup: HashMap<String, (String, ResponseStatus)> = HashMap::new();
            for ex in &dataset.examples {
                let Some(recorded) = ex.responses.get(&profile.id) else {
                    continue;
                };
                let key = normalize_utterance(&ex.query.text);
                let entry = (recorded.text.clone(), phrases.classify(&recorded.text));
                match lookup.get(&key) {
                    Some(existing) if existing.0 != entry.0 => log::warn!(
                        "agent {}: utterance {:?} recorded twice with different answers; keeping the first",
                        profile.id,
                        ex.query.text
                    ),
                    Some(_) => {}
                    None => {
                        lookup.insert(key, entry);
                    }
                }
            }
            ReplayAgent {
                profile: profile.clone(),
                lookup,
                default_fallback: fallback_text.to_string(),
                latency,
            }
        })
        .collect()
}

struct FleetState {
    agents: HashMap<String, Arc<ReplayAgent>>,
    profiles: Vec<AgentProfile>,
}

async fn respond_handler(
    State(state): State<Arc<FleetState>>,
    Path(agent): Path<String>,
    Json(req): Json<RespondRequest>,
) -> Result<Json<RespondReply>, (StatusCode, String)> {
    let agent = state
        .agents
        .get(&agent)
        .ok_or((StatusCode::NOT_FOUND, format!("no agent {agent:?}")))?;
    let r = ReplayAgent::respond(agent, &req.text).await;
    Ok(Json(RespondReply {
        agent: r.agent_id,
        text: r.text,
        status: r.status,
    }))
}

async fn agents_handler(State(state): State<Arc<FleetState>>) -> Json<Vec<AgentProfile>> {
    Json(state.profiles.clone())
}

/// Serves every agent on one port: `POST /{agent_id}/respond`, plus
/// `GET /agents` listing the profiles.
pub fn fleet_router(fleet: Vec<ReplayAgent>) -> Router {
    let profiles = fleet.iter().map(|a| a.profile.clone()).collect();
    let agents = fleet
        .into_iter()
        .map(|a| (a.profile.id.clone(), Arc::new(a)))
        .collect();
    Router::new()
        .route("/agents", get(agents_handler))
        .route("/{agent}/respond", post(respond_handler))
        .with_state(Arc::new(FleetState { agents, profiles }))
}

/// Base URL of `agent_id` on a fleet served at `addr`.
pub fn agent_endpoint(addr: SocketAddr, agent_id: &str) -> String {
    format!("http://{addr}/{agent_id}")
}

/// Binds `addr` and serves the fleet until the returned task is aborted.
pub async fn spawn_fleet(
    fleet: Vec<ReplayAgent>,
    addr: SocketAddr,
) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<()>)> {
    let listener = TcpListener::bind(addr).await?;
    let bound = listener.local_addr()?;
    let app = fleet_router(fleet);
    let handle = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            log::error!("fleet server stopped: {e}");
        }
    });
    Ok((bound, handle))
}
