use std::sync::OnceLock;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Candidate, ScoreError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub query: String,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: Vec<f64>,
}

pub(crate) fn shared_client() -> &'static reqwest::Client {
    static CLIENT: OnceLock<reqwest::Client> = OnceLock::new();
    CLIENT.get_or_init(reqwest::Client::new)
}

/// Sends one batch request for all candidates of `query` and validates the
/// reply: same length as `candidates`, every score finite.
pub async fn remote_score(
    endpoint: &str,
    query: &str,
    candidates: &[Candidate],
    timeout_ms: u64,
) -> Result<Vec<f64>, ScoreError> {
    let body = ScoreRequest {
        query: query.to_string(),
        candidates: candidates.to_vec(),
    };
    let timeout = Duration::from_millis(timeout_ms);
    let exchange = async {
        let resp = shared_client()
            .post(endpoint)
            .timeout(timeout)
            .json(&body)
            .send()
            .await
            .map_err(|e| classify(e, timeout_ms))?;
        if !resp.status().is_success() {
            return Err(ScoreError::Status(resp.status().as_u16()));
        }
        let bytes = resp.bytes().await.map_err(|e| classify(e, timeout_ms))?;
        serde_json::from_slice::<ScoreResponse>(&bytes).map_err(|e| ScoreError::Malformed(e.to_string()))
    };
    let reply = tokio::time::timeout(timeout, exchange)
        .await
        .map_err(|_| ScoreError::Timeout(timeout_ms))??;

    if reply.scores.len() != candidates.len() {
        return Err(ScoreError::LengthMismatch {
            expected: candidates.len(),
            got: reply.scores.len(),
        });
    }
    if let Some(i) = reply.scores.iter().position(|s| !s.is_finite()) {
        return Err(ScoreError::NonFinite(i));
    }
    Ok(reply.scores)
}

fn classify(e: reqwest::Error, timeout_ms: u64) -> ScoreError {
    if e.is_timeout() {
        ScoreError::Timeout(timeout_ms)
    } else if e.is_connect() || e.is_request() {
        ScoreError::Unreachable(e.to_string())
    } else if e.is_decode() || e.is_body() {
        ScoreError::Malformed(e.to_string())
    } else {
        ScoreError::Other(e.to_string())
    }
}
