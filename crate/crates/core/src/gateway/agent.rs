use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::arbiter::remote::shared_client;
use crate::model::{AgentResponse, ResponseStatus};

/// A black-box conversational agent: text in, text out.
#[async_trait]
pub trait Agent: Send + Sync {
    fn id(&self) -> &str;

    /// Never fails at the call level; failures are reported via status.
    async fn respond(&self, text: &str) -> AgentResponse;
}

/// Body of `POST {endpoint}/respond`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RespondRequest {
    pub text: String,
}

/// Reply of `POST {endpoint}/respond`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RespondReply {
    pub agent: String,
    pub text: String,
    pub status: ResponseStatus,
}

/// An agent reached over the agent wire protocol.
#[derive(Debug, Clone)]
pub struct HttpAgent {
    id: String,
    endpoint: String,
}

impl HttpAgent {
    pub fn new(id: impl Into<String>, endpoint: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

#[async_trait]
impl Agent for HttpAgent {
    fn id(&self) -> &str {
        &self.id
    }

    async fn respond(&self, text: &str) -> AgentResponse {
        let url = format!("{}/respond", self.endpoint);
        let sent = shared_client()
            .post(&url)
            .json(&RespondRequest { text: text.to_string() })
            .send()
            .await;
        let reply = match sent {
            Ok(resp) if resp.status().is_success() => resp.json::<RespondReply>().await,
            Ok(resp) => {
                return AgentResponse::error(&self.id, format!("HTTP {}", resp.status()), 0);
            }
            Err(e) => Err(e),
        };
        match reply {
            Ok(r) => {
                let status = match r.status {
                    // Agents may only report answered or fallback.
                    ResponseStatus::Answered | ResponseStatus::Fallback => r.status,
                    _ => ResponseStatus::Error,
                };
                AgentResponse::reported(&self.id, r.text, status, 0)
            }
            Err(e) => AgentResponse::error(&self.id, e.to_string(), 0),
        }
    }
}
