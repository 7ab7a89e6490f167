use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use super::RegisteredAgent;
use crate::model::AgentResponse;

pub const DEFAULT_AGENT_TIMEOUT_MS: u64 = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FanoutConfig {
    pub per_agent_timeout_ms: u64,
    /// `None` dispatches to every agent at once.
    pub max_parallelism: Option<usize>,
}

impl Default for FanoutConfig {
    fn default() -> Self {
        Self {
            per_agent_timeout_ms: DEFAULT_AGENT_TIMEOUT_MS,
            max_parallelism: None,
        }
    }
}

impl FanoutConfig {
    pub fn with_timeout(per_agent_timeout_ms: u64) -> Self {
        Self {
            per_agent_timeout_ms,
            ..Self::default()
        }
    }
}

fn elapsed_ms(start: Instant) -> u64 {
    start.elapsed().as_millis() as u64
}

/// Dispatches `query_text` to every agent concurrently. Each agent gets its
/// own timeout; results come back in `agents` order with measured latency.
pub async fn fan_out(query_text: &str, agents: &[RegisteredAgent], config: FanoutConfig) -> Vec<AgentResponse> {
    let timeout = Duration::from_millis(config.per_agent_timeout_ms.max(1));
    let limiter = config.max_parallelism.map(|n| Arc::new(Semaphore::new(n.max(1))));

    let tasks: Vec<_> = agents
        .iter()
        .map(|agent| {
            let id = agent.profile.id.clone();
            let handle = Arc::clone(&agent.handle);
            let query = query_text.to_string();
            let limiter = limiter.clone();
            let task = tokio::spawn({
                let id = id.clone();
                async move {
                    let _permit = match limiter {
                        Some(sem) => sem.acquire_owned().await.ok(),
                        None => None,
                    };
                    let start = Instant::now();
                    match tokio::time::timeout(timeout, handle.respond(&query)).await {
                        Ok(r) => AgentResponse::reported(&id, r.text, r.status, elapsed_ms(start)),
                        Err(_) => AgentResponse::timeout(&id, elapsed_ms(start)),
                    }
                }
            });
            (id, task)
        })
        .collect();

    let mut out = Vec::with_capacity(tasks.len());
    for (id, task) in tasks {
        out.push(match task.await {
            Ok(r) => r,
            Err(e) => AgentResponse::error(&id, format!("dispatch task failed: {e}"), 0),
        });
    }
    out
}
