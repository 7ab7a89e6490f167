//! The unified gateway: agent registry, concurrent fan-out with per-agent
//! timeouts, strategy execution and the HTTP service in front of them.
//!
//! Agents speak a small wire protocol:
//!
//! ```text
//! POST {endpoint}/respond  {"text": "..."}
//!   -> {"agent": "...", "text": "...", "status": "answered" | "fallback"}
//! ```

mod agent;
mod ask;
mod config;
mod fanout;
mod registry;
mod server;

pub use agent::{Agent, HttpAgent, RespondReply, RespondRequest};
pub use ask::{ask, rank_by_descriptions, AskResult, CandidateOutcome, Strategy, StrategyKind, APOLOGY};
pub use config::GatewayConfig;
pub use fanout::{fan_out, FanoutConfig, DEFAULT_AGENT_TIMEOUT_MS};
pub use registry::{RegisteredAgent, Registry};
pub use server::{app, serve, spawn_gateway, AskRequest, GatewayState};

use thiserror::Error;

use crate::arbiter::ScoreError;
use crate::lexical::IndexError;
use crate::model::DatasetError;
use crate::router::RouterError;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("no agents registered")]
    EmptyRegistry,
    #[error("strategy qa-examples requires a trained router model")]
    RouterModelMissing,
    #[error("unknown strategy {0:?}; expected qa-examples, qa-descriptions or qr")]
    UnknownStrategy(String),
    #[error("{0}")]
    UnknownScorer(String),
    #[error("agent {0:?} is already registered")]
    DuplicateAgent(String),
    #[error("agent {0:?} is not registered")]
    UnknownAgent(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot bind {0}: {1}")]
    Bind(String, #[source] std::io::Error),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Router(#[from] RouterError),
}
