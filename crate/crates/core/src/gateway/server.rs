//! HTTP service: agent registry management and `POST /ask`.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

use super::{ask, Agent, AskResult, GatewayConfig, GatewayError, HttpAgent, Registry, Strategy, StrategyKind};
use crate::fleet::{build_fleet, ReplayAgent};
use crate::model::{
    load_agents, load_dataset, load_dataset_with_agents, AgentProfile, Dataset, ProfileRecord, Split,
};
use crate::router::{train_example_router, ExampleRouterModel, RouterHyperparams};

pub struct GatewayState {
    registry: RwLock<Registry>,
    router_model: Option<Arc<ExampleRouterModel>>,
    replay: HashMap<String, ReplayAgent>,
    config: GatewayConfig,
}

impl GatewayState {
    pub fn new(registry: Registry, router_model: Option<Arc<ExampleRouterModel>>, config: GatewayConfig) -> Self {
        Self {
            registry: RwLock::new(registry),
            router_model,
            replay: HashMap::new(),
            config,
        }
    }

    /// Replay agents available to `POST /agents` requests without an endpoint.
    pub fn with_replay(mut self, fleet: Vec<ReplayAgent>) -> Self {
        self.replay = fleet.into_iter().map(|a| (a.profile().id.clone(), a)).collect();
        self
    }

    /// Loads profiles, the optional replay dataset and the optional router
    /// model named by `config`. Without a model file, a router is trained on
    /// the dataset's train split when a dataset is configured.
    pub fn from_config(config: GatewayConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let profiles = match &config.agents_path {
            Some(p) => Some(load_agents(p)?),
            None => None,
        };
        let dataset: Option<Dataset> = match (&config.dataset_path, &profiles) {
            (Some(d), Some(p)) => Some(load_dataset_with_agents(d, config.vote_threshold, p.clone())?),
            (Some(d), None) => Some(load_dataset(d, config.vote_threshold)?),
            (None, _) => None,
        };
        let profiles = match (profiles, &dataset) {
            (Some(p), _) => p,
            (None, Some(ds)) => ds.agents.clone(),
            (None, None) => {
                return Err(GatewayError::Config("either agents_path or dataset_path is required".into()));
            }
        };
        let fleet = dataset
            .as_ref()
            .map(|ds| build_fleet(ds, config.replay_latency, &config.fallback_text, &config.phrases()))
            .unwrap_or_default();

        let router_model = match (&config.router_model_path, &dataset) {
            (Some(path), _) => {
                let file = std::fs::File::open(path)
                    .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
                Some(Arc::new(ExampleRouterModel::read_from(std::io::BufReader::new(file))?))
            }
            (None, Some(ds)) => {
                let examples: Vec<_> = ds
                    .split(Split::Train)
                    .map(|e| (e.query.text.clone(), e.gold_agents.clone()))
                    .collect();
                if examples.is_empty() {
                    None
                } else {
                    let hp = RouterHyperparams {
                        seed: config.seed,
                        ..Default::default()
                    };
                    log::info!("training example router on {} train utterances", examples.len());
                    Some(Arc::new(train_example_router(&examples, &ds.agent_ids(), hp)?))
                }
            }
            (None, None) => None,
        };

        let state = Self::new(Registry::new(), router_model, config).with_replay(fleet);
        {
            let mut registry = state.registry.write().expect("registry lock poisoned");
            for profile in profiles {
                let handle = state.handle_for(&profile)?;
                registry.register(profile, handle)?;
            }
        }
        Ok(state)
    }

    fn handle_for(&self, profile: &AgentProfile) -> Result<Arc<dyn Agent>, GatewayError> {
        match (&profile.endpoint, self.replay.get(&profile.id)) {
            (Some(endpoint), _) => Ok(Arc::new(HttpAgent::new(profile.id.clone(), endpoint.clone()))),
            (None, Some(replay)) => Ok(Arc::new(replay.clone())),
            (None, None) => Err(GatewayError::Config(format!(
                "agent {:?} has no endpoint and no replay data",
                profile.id
            ))),
        }
    }

    pub fn snapshot(&self) -> Registry {
        self.registry.read().expect("registry lock poisoned").clone()
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn router_model(&self) -> Option<Arc<ExampleRouterModel>> {
        self.router_model.clone()
    }

    pub fn register(&self, profile: AgentProfile) -> Result<AgentProfile, GatewayError> {
        let handle = self.handle_for(&profile)?;
        let mut registry = self.registry.write().expect("registry lock poisoned");
        registry.register(profile.clone(), handle)?;
        Ok(registry.get(&profile.id).map(|a| a.profile.clone()).unwrap_or(profile))
    }

    pub fn remove(&self, id: &str) -> Result<AgentProfile, GatewayError> {
        self.registry.write().expect("registry lock poisoned").remove(id)
    }

    pub fn strategy(
        &self,
        kind: StrategyKind,
        scorer: Option<&str>,
        filter_fallbacks: Option<bool>,
    ) -> Result<Strategy, GatewayError> {
        let scorer = self.config.resolve_scorer(scorer.unwrap_or(&self.config.default_scorer))?;
        Strategy::from_parts(
            kind,
            scorer,
            self.router_model.clone(),
            self.config.description_mode,
            filter_fallbacks.unwrap_or(self.config.filter_fallbacks),
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AskRequest {
    pub text: String,
    pub strategy: String,
    #[serde(default)]
    pub scorer: Option<String>,
    #[serde(default)]
    pub filter_fallbacks: Option<bool>,
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
}

impl GatewayError {
    fn status(&self) -> StatusCode {
        match self {
            GatewayError::UnknownStrategy(_)
            | GatewayError::UnknownScorer(_)
            | GatewayError::RouterModelMissing
            | GatewayError::BadRequest(_)
            | GatewayError::Dataset(_) => StatusCode::BAD_REQUEST,
            GatewayError::DuplicateAgent(_) => StatusCode::CONFLICT,
            GatewayError::UnknownAgent(_) => StatusCode::NOT_FOUND,
            GatewayError::EmptyRegistry => StatusCode::SERVICE_UNAVAILABLE,
            GatewayError::Score(_) => StatusCode::BAD_GATEWAY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for GatewayError {
    fn into_response(self) -> Response {
        let status = self.status();
        (status, Json(ErrorBody { error: self.to_string() })).into_response()
    }
}

async fn healthz() -> &'static str {
    "ok"
}

async fn list_agents(State(state): State<Arc<GatewayState>>) -> Json<Vec<AgentProfile>> {
    Json(state.snapshot().profiles())
}

async fn add_agent(
    State(state): State<Arc<GatewayState>>,
    Json(record): Json<ProfileRecord>,
) -> Result<(StatusCode, Json<AgentProfile>), GatewayError> {
    let profile = record.into_profile()?;
    Ok((StatusCode::CREATED, Json(state.register(profile)?)))
}

async fn remove_agent(
    State(state): State<Arc<GatewayState>>,
    Path(id): Path<String>,
) -> Result<StatusCode, GatewayError> {
    state.remove(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn ask_handler(
    State(state): State<Arc<GatewayState>>,
    Json(req): Json<AskRequest>,
) -> Result<Json<AskResult>, GatewayError> {
    if req.text.trim().is_empty() {
        return Err(GatewayError::BadRequest("empty query text".into()));
    }
    let kind: StrategyKind = req.strategy.parse()?;
    let strategy = state.strategy(kind, req.scorer.as_deref(), req.filter_fallbacks)?;
    let registry = state.snapshot();
    Ok(Json(ask(&req.text, &strategy, &registry, state.config.fanout()).await?))
}

pub fn app(state: Arc<GatewayState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/agents", get(list_agents).post(add_agent))
        .route("/agents/{id}", delete(remove_agent))
        .route("/ask", post(ask_handler))
        .with_state(state)
}

/// Binds `addr` and serves the gateway in a background task.
pub async fn spawn_gateway(
    state: Arc<GatewayState>,
    addr: SocketAddr,
) -> Result<(SocketAddr, tokio::task::JoinHandle<()>), GatewayError> {
    let listener = TcpListener::bind(addr).await.map_err(|e| GatewayError::Bind(addr.to_string(), e))?;
    let bound = listener.local_addr().map_err(|e| GatewayError::Bind(addr.to_string(), e))?;
    let router = app(state);
    let handle = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, router).await {
            log::error!("gateway stopped: {e}");
        }
    });
    Ok((bound, handle))
}

/// Serves the gateway described by `config` until Ctrl-C.
pub async fn serve(config: GatewayConfig) -> Result<(), GatewayError> {
    let bind = config.bind.clone();
    let state = Arc::new(GatewayState::from_config(config)?);
    let listener = TcpListener::bind(&bind).await.map_err(|e| GatewayError::Bind(bind.clone(), e))?;
    log::info!(
        "gateway listening on {} with {} agents",
        listener.local_addr().map(|a| a.to_string()).unwrap_or(bind.clone()),
        state.snapshot().len()
    );
    axum::serve(listener, app(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| GatewayError::Bind(bind, e))
}
