//! Question-response pairing: score every returned response against the
//! query and keep the best one.
//!
//! Local scorers run in-process. BM25 builds a micro-index over just the
//! candidate responses of one query, so scores never depend on other
//! queries or on agents outside the candidate set. The remote scorer speaks
//! a batch-per-query JSON protocol:
//!
//! ```text
//! request:  {"query": "...", "candidates": [{"id": "...", "text": "..."}, ...]}
//! response: {"scores": [r1, r2, ...]}
//! ```

pub mod conformance;
pub(crate) mod remote;
pub mod stub;

use std::fmt;
use std::str::FromStr;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexical::{Bm25Index, Bm25Params, IndexError};
use crate::model::{rank_candidates, RankedCandidate};

pub use remote::{remote_score, ScoreRequest, ScoreResponse};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("remote scorer timed out after {0} ms")]
    Timeout(u64),
    #[error("remote scorer unreachable: {0}")]
    Unreachable(String),
    #[error("remote scorer returned HTTP {0}")]
    Status(u16),
    #[error("malformed scorer reply: {0}")]
    Malformed(String),
    #[error("scorer returned {got} scores for {expected} candidates")]
    LengthMismatch { expected: usize, got: usize },
    #[error("scorer returned a non-finite score at position {0}")]
    NonFinite(usize),
    #[error("scorer {0:?} requires an endpoint")]
    MissingEndpoint(ScorerKind),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("{0}")]
    Other(String),
}

/// A candidate response on the scorer wire and in-process.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub text: String,
}

impl Candidate {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    Bm25,
    TfidfCosine,
    Remote,
}

/// What to do when the remote scorer fails.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RemoteFailurePolicy {
    #[default]
    Error,
    FallBackToBm25,
}

pub const DEFAULT_SCORER_TIMEOUT_MS: u64 = 5000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorerHandle {
    pub kind: ScorerKind,
    pub remote_endpoint: Option<String>,
    pub timeout_ms: u64,
    #[serde(default)]
    pub on_remote_failure: RemoteFailurePolicy,
}

impl ScorerHandle {
    pub fn bm25() -> Self {
        Self::local(ScorerKind::Bm25)
    }

    pub fn tfidf() -> Self {
        Self::local(ScorerKind::TfidfCosine)
    }

    fn local(kind: ScorerKind) -> Self {
        Self {
            kind,
            remote_endpoint: None,
            timeout_ms: DEFAULT_SCORER_TIMEOUT_MS,
            on_remote_failure: RemoteFailurePolicy::Error,
        }
    }

    pub fn remote(endpoint: impl Into<String>, timeout_ms: u64) -> Self {
        Self {
            kind: ScorerKind::Remote,
            remote_endpoint: Some(endpoint.into()),
            timeout_ms,
            on_remote_failure: RemoteFailurePolicy::Error,
        }
    }

    pub fn with_failure_policy(mut self, policy: RemoteFailurePolicy) -> Self {
        self.on_remote_failure = policy;
        self
    }

    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ScorerHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.kind, &self.remote_endpoint) {
            (ScorerKind::Bm25, _) => f.write_str("bm25"),
            (ScorerKind::TfidfCosine, _) => f.write_str("tfidf"),
            (ScorerKind::Remote, Some(e)) => write!(f, "remote:{e}"),
            (ScorerKind::Remote, None) => f.write_str("remote"),
        }
    }
}

impl FromStr for ScorerHandle {
    type Err = String;

    /// Accepts `bm25`, `tfidf` or `remote:<endpoint>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bm25" => Ok(Self::bm25()),
            "tfidf" | "tfidf-cosine" | "tfidf_cosine" => Ok(Self::tfidf()),
            other => match other.strip_prefix("remote:") {
                Some(endpoint) if !endpoint.is_empty() => {
                    Ok(Self::remote(endpoint, DEFAULT_SCORER_TIMEOUT_MS))
                }
                _ => Err(format!(
                    "unknown scorer {other:?}; expected bm25, tfidf or remote:<endpoint>"
                )),
            },
        }
    }
}

/// Anything that can score a batch of candidate responses for one query.
#[async_trait]
pub trait ResponseScorer: Send + Sync {
    /// One score per candidate, in candidate order.
    async fn score(&self, query: &str, candidates: &[Candidate]) -> Result<Vec<f64>, ScoreError>;

    fn label(&self) -> String;
}

/// BM25 over a micro-index holding only `candidates`.
pub fn bm25_scores(query: &str, candidates: &[Candidate]) -> Result<Vec<f64>, ScoreError> {
    let index = micro_index(candidates)?;
    candidates
        .iter()
        .map(|c| Ok(index.score(query, &c.id)?))
        .collect()
}

/// tf-idf cosine with idf statistics from the candidate micro-index.
pub fn tfidf_scores(query: &str, candidates: &[Candidate]) -> Result<Vec<f64>, ScoreError> {
    let index = micro_index(candidates)?;
    Ok(candidates
        .iter()
        .map(|c| index.tfidf_cosine(query, &c.text))
        .collect())
}

fn micro_index(candidates: &[Candidate]) -> Result<Bm25Index, IndexError> {
    Bm25Index::build(
        candidates.iter().map(|c| (c.id.clone(), c.text.as_str())),
        Bm25Params::default(),
    )
}

#[async_trait]
impl ResponseScorer for ScorerHandle {
    async fn score(&self, query: &str, candidates: &[Candidate]) -> Result<Vec<f64>, ScoreError> {
        match self.kind {
            ScorerKind::Bm25 => bm25_scores(query, candidates),
            ScorerKind::TfidfCosine => tfidf_scores(query, candidates),
            ScorerKind::Remote => {
                let endpoint = self
                    .remote_endpoint
                    .as_deref()
                    .ok_or(ScoreError::MissingEndpoint(ScorerKind::Remote))?;
                match remote_score(endpoint, query, candidates, self.timeout_ms).await {
                    Ok(scores) => Ok(scores),
                    Err(e) => match self.on_remote_failure {
                        RemoteFailurePolicy::Error => Err(e),
                        RemoteFailurePolicy::FallBackToBm25 => {
                            log::warn!("remote scorer failed ({e}); falling back to bm25");
                            bm25_scores(query, candidates)
                        }
                    },
                }
            }
        }
    }

    fn label(&self) -> String {
        self.to_string()
    }
}

/// Scores `(agent_id, response_text)` pairs, returning `(agent_id, score)`.
pub async fn score_candidates(
    scorer: &dyn ResponseScorer,
    query: &str,
    candidates: &[(String, String)],
) -> Result<Vec<(String, f64)>, ScoreError> {
    let wire: Vec<Candidate> = candidates
        .iter()
        .map(|(id, text)| Candidate::new(id.clone(), text.clone()))
        .collect();
    let scores = scorer.score(query, &wire).await?;
    if scores.len() != wire.len() {
        return Err(ScoreError::LengthMismatch {
            expected: wire.len(),
            got: scores.len(),
        });
    }
    Ok(wire.into_iter().map(|c| c.id).zip(scores).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArbitrationResult {
    pub ranked: Vec<RankedCandidate>,
    pub selected_agent: Option<String>,
    pub selected_text: Option<String>,
}

/// Argmax with ties broken by ascending agent id.
pub fn select_best(scores: Vec<(String, f64)>) -> ArbitrationResult {
    let ranked = rank_candidates(scores);
    ArbitrationResult {
        selected_agent: ranked.first().map(|r| r.agent_id.clone()),
        selected_text: None,
        ranked,
    }
}

/// Scores and selects in one step, attaching the winning response text.
pub async fn arbitrate(
    scorer: &dyn ResponseScorer,
    query: &str,
    candidates: &[(String, String)],
) -> Result<ArbitrationResult, ScoreError> {
    let scores = score_candidates(scorer, query, candidates).await?;
    let mut result = select_best(scores);
    result.selected_text = result.selected_agent.as_ref().and_then(|winner| {
        candidates
            .iter()
            .find(|(id, _)| id == winner)
            .map(|(_, text)| text.clone())
    });
    Ok(result)
}
