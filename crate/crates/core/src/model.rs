//! Domain types shared by every other module, plus dataset ingestion and
//! gold-label derivation.
//!
//! A dataset file is line-delimited JSON, one utterance per line:
//!
//! ```text
//! {"id": "q1", "text": "...", "domain": "weather", "split": "train",
//!  "responses": [{"agent": "alexa", "text": "...", "votes": 4}, ...]}
//! ```
//!
//! `votes` may be omitted on every response when the record instead carries a
//! precomputed `"gold": ["alexa", ...]` list.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::router::split_description;

/// Maximum number of annotators per response.
pub const MAX_VOTES: i64 = 5;

/// Default number of agreeing annotators required for a response to be gold.
pub const DEFAULT_VOTE_THRESHOLD: u8 = 3;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate query id {id:?}")]
    DuplicateQueryId { line: usize, id: String },
    #[error("line {line}: unknown agent id {agent:?}")]
    UnknownAgent { line: usize, agent: String },
    #[error("line {line}: {source}")]
    Votes {
        line: usize,
        #[source]
        source: VoteError,
    },
    #[error("duplicate agent id {0:?}")]
    DuplicateAgent(String),
    #[error("invalid id {0:?}: no ASCII alphanumeric characters")]
    InvalidId(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("vote count {votes} for agent {agent:?} outside 0..={max}", max = MAX_VOTES)]
pub struct VoteError {
    pub agent: String,
    pub votes: i64,
}

/// Normalizes an identifier to lowercase ASCII words joined by hyphens.
///
/// `"Recipe agent"` becomes `"recipe-agent"`.
pub fn normalize_id(raw: &str) -> Result<String, DatasetError> {
    let mut out = String::with_capacity(raw.len());
    let mut pending_hyphen = false;
    for c in raw.chars() {
        if c.is_ascii_alphanumeric() {
            if pending_hyphen && !out.is_empty() {
                out.push('-');
            }
            pending_hyphen = false;
            out.push(c.to_ascii_lowercase());
        } else {
            pending_hyphen = true;
        }
    }
    if out.is_empty() {
        return Err(DatasetError::InvalidId(raw.to_string()));
    }
    Ok(out)
}

/// Lowercases and collapses whitespace; the replay lookup key for utterances.
pub fn normalize_utterance(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => f.write_str("train"),
            Split::Test => f.write_str("test"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    pub domain: String,
    pub split: Split,
}

/// Public identity and capability summary of one black-box agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub id: String,
    pub display_name: String,
    pub description: String,
    /// Sentence split of `description`, derived at construction.
    pub skill_sentences: Vec<String>,
    pub endpoint: Option<String>,
}

impl AgentProfile {
    pub fn new(
        id: &str,
        display_name: impl Into<String>,
        description: impl Into<String>,
        endpoint: Option<String>,
    ) -> Result<Self, DatasetError> {
        let description = description.into();
        Ok(Self {
            id: normalize_id(id)?,
            display_name: display_name.into(),
            skill_sentences: split_description(&description),
            description,
            endpoint,
        })
    }

    /// A profile carrying nothing but the id.
    pub fn bare(id: &str) -> Result<Self, DatasetError> {
        Self::new(id, id, "", None)
    }
}

/// On-disk form of an agent profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileRecord {
    pub id: String,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub endpoint: Option<String>,
}

impl ProfileRecord {
    pub fn into_profile(self) -> Result<AgentProfile, DatasetError> {
        let name = self.name.unwrap_or_else(|| self.id.clone());
        AgentProfile::new(&self.id, name, self.description, self.endpoint)
    }
}

impl From<&AgentProfile> for ProfileRecord {
    fn from(p: &AgentProfile) -> Self {
        Self {
            id: p.id.clone(),
            name: Some(p.display_name.clone()),
            description: p.description.clone(),
            endpoint: p.endpoint.clone(),
        }
    }
}

/// Loads an agent profile file: either line-delimited records or a single
/// JSON array of records.
pub fn load_agents(path: &Path) -> Result<Vec<AgentProfile>, DatasetError> {
    let raw = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_agents(&raw)
}

pub fn parse_agents(raw: &str) -> Result<Vec<AgentProfile>, DatasetError> {
    let records: Vec<ProfileRecord> = if raw.trim_start().starts_with('[') {
        serde_json::from_str(raw).map_err(|e| DatasetError::Malformed {
            line: e.line(),
            message: e.to_string(),
        })?
    } else {
        let mut out = Vec::new();
        for (idx, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            out.push(
                serde_json::from_str(line).map_err(|e| DatasetError::Malformed {
                    line: idx + 1,
                    message: e.to_string(),
                })?,
            );
        }
        out
    };
    let mut seen = HashSet::new();
    let mut profiles = Vec::with_capacity(records.len());
    for record in records {
        let profile = record.into_profile()?;
        if !seen.insert(profile.id.clone()) {
            return Err(DatasetError::DuplicateAgent(profile.id));
        }
        profiles.push(profile);
    }
    Ok(profiles)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseStatus {
    Answered,
    Fallback,
    Timeout,
    Error,
}

impl fmt::Display for ResponseStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ResponseStatus::Answered => "answered",
            ResponseStatus::Fallback => "fallback",
            ResponseStatus::Timeout => "timeout",
            ResponseStatus::Error => "error",
        };
        f.write_str(s)
    }
}

/// One agent's reply to one query as observed by the gateway.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub agent_id: String,
    pub text: String,
    pub status: ResponseStatus,
    pub latency_ms: u64,
}

impl AgentResponse {
    /// Builds a response from agent-reported text, downgrading an empty
    /// "answer" to a fallback so that `answered` always carries text.
    pub fn reported(agent_id: &str, text: String, status: ResponseStatus, latency_ms: u64) -> Self {
        let status = match status {
            ResponseStatus::Answered if text.trim().is_empty() => ResponseStatus::Fallback,
            other => other,
        };
        let text = if status == ResponseStatus::Timeout {
            String::new()
        } else {
            text
        };
        Self {
            agent_id: agent_id.to_string(),
            text,
            status,
            latency_ms,
        }
    }

    pub fn timeout(agent_id: &str, latency_ms: u64) -> Self {
        Self::reported(agent_id, String::new(), ResponseStatus::Timeout, latency_ms)
    }

    pub fn error(agent_id: &str, message: String, latency_ms: u64) -> Self {
        Self::reported(agent_id, message, ResponseStatus::Error, latency_ms)
    }

    /// Whether this response can enter response scoring at all.
    pub fn is_scorable(&self) -> bool {
        matches!(self.status, ResponseStatus::Answered | ResponseStatus::Fallback)
    }
}

/// Exact-match list of canned non-answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallbackPhrases(pub Vec<String>);

impl Default for FallbackPhrases {
    fn default() -> Self {
        Self(vec!["Didn't get that!".to_string(), "Out of scope!".to_string()])
    }
}

impl FallbackPhrases {
    pub fn is_fallback(&self, text: &str) -> bool {
        let text = text.trim();
        text.is_empty() || self.0.iter().any(|p| p.trim() == text)
    }

    pub fn classify(&self, text: &str) -> ResponseStatus {
        if self.is_fallback(text) {
            ResponseStatus::Fallback
        } else {
            ResponseStatus::Answered
        }
    }
}

/// A recorded response to a dataset utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedResponse {
    pub text: String,
    /// Annotator votes; absent when the record only published gold labels.
    pub votes: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledExample {
    pub query: Query,
    pub responses: BTreeMap<String, RecordedResponse>,
    pub gold_agents: BTreeSet<String>,
}

impl LabeledExample {
    pub fn has_gold(&self) -> bool {
        !self.gold_agents.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub examples: Vec<LabeledExample>,
    pub agents: Vec<AgentProfile>,
    pub vote_threshold: u8,
}

impl Dataset {
    pub fn agent_ids(&self) -> Vec<String> {
        self.agents.iter().map(|a| a.id.clone()).collect()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &LabeledExample> {
        self.examples.iter().filter(move |e| e.query.split == split)
    }
}

/// Returns the agents whose vote count reaches `threshold`.
pub fn derive_gold<'a, I>(votes: I, threshold: u8) -> Result<BTreeSet<String>, VoteError>
where
    I: IntoIterator<Item = (&'a str, i64)>,
{
    let mut gold = BTreeSet::new();
    for (agent, v) in votes {
        if !(0..=MAX_VOTES).contains(&v) {
            return Err(VoteError {
                agent: agent.to_string(),
                votes: v,
            });
        }
        if v >= i64::from(threshold) {
            gold.insert(agent.to_string());
        }
    }
    Ok(gold)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ResponseRecord {
    agent: String,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    votes: Option<i64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ExampleRecord {
    id: String,
    text: String,
    domain: String,
    split: Split,
    responses: Vec<ResponseRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gold: Option<Vec<String>>,
}

pub fn load_dataset(path: &Path, vote_threshold: u8) -> Result<Dataset, DatasetError> {
    let file = open(path)?;
    read_dataset(BufReader::new(file), vote_threshold, None)
}

/// Like [`load_dataset`], but every response must belong to a known profile.
pub fn load_dataset_with_agents(
    path: &Path,
    vote_threshold: u8,
    agents: Vec<AgentProfile>,
) -> Result<Dataset, DatasetError> {
    let file = open(path)?;
    read_dataset(BufReader::new(file), vote_threshold, Some(agents))
}

fn open(path: &Path) -> Result<File, DatasetError> {
    File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parses line-delimited example records.
///
/// Without `agents`, the agent list is the sorted set of ids seen in
/// responses, each with an empty description.
pub fn read_dataset<R: BufRead>(
    reader: R,
    vote_threshold: u8,
    agents: Option<Vec<AgentProfile>>,
) -> Result<Dataset, DatasetError> {
    let known: Option<HashSet<String>> = agents
        .as_ref()
        .map(|a| a.iter().map(|p| p.id.clone()).collect());
    let mut seen_ids = HashSet::new();
    let mut referenced = BTreeSet::new();
    let mut examples = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| DatasetError::Io {
            path: format!("<line {line_no}>"),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ExampleRecord =
            serde_json::from_str(&line).map_err(|e| DatasetError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
        let example = build_example(record, line_no, vote_threshold)?;
        if !seen_ids.insert(example.query.id.clone()) {
            return Err(DatasetError::DuplicateQueryId {
                line: line_no,
                id: example.query.id,
            });
        }
        for agent in example.responses.keys() {
            if let Some(known) = &known {
                if !known.contains(agent) {
                    return Err(DatasetError::UnknownAgent {
                        line: line_no,
                        agent: agent.clone(),
                    });
                }
            }
            referenced.insert(agent.clone());
        }
        examples.push(example);
    }

    let agents = match agents {
        Some(a) => a,
        None => referenced
            .iter()
            .map(|id| AgentProfile::bare(id))
            .collect::<Result<_, _>>()?,
    };
    Ok(Dataset {
        examples,
        agents,
        vote_threshold,
    })
}

fn build_example(
    record: ExampleRecord,
    line: usize,
    vote_threshold: u8,
) -> Result<LabeledExample, DatasetError> {
    let malformed = |message: String| DatasetError::Malformed { line, message };
    if record.text.trim().is_empty() {
        return Err(malformed("empty utterance text".into()));
    }
    if record.id.is_empty() {
        return Err(malformed("empty query id".into()));
    }

    let mut responses = BTreeMap::new();
    let mut raw_votes = Vec::with_capacity(record.responses.len());
    let mut all_voted = !record.responses.is_empty();
    for r in record.responses {
        let agent = normalize_id(&r.agent).map_err(|e| malformed(e.to_string()))?;
        let votes = match r.votes {
            Some(v) => {
                if !(0..=MAX_VOTES).contains(&v) {
                    return Err(DatasetError::Votes {
                        line,
                        source: VoteError { agent, votes: v },
                    });
                }
                raw_votes.push((agent.clone(), v));
                Some(v as u8)
            }
            None => {
                all_voted = false;
                None
            }
        };
        if responses
            .insert(agent.clone(), RecordedResponse { text: r.text, votes })
            .is_some()
        {
            return Err(malformed(format!("agent {agent:?} responds twice")));
        }
    }

    let gold_agents = if all_voted {
        derive_gold(raw_votes.iter().map(|(a, v)| (a.as_str(), *v)), vote_threshold)
            .map_err(|source| DatasetError::Votes { line, source })?
    } else {
        let mut gold = BTreeSet::new();
        for g in record.gold.unwrap_or_default() {
            let g = normalize_id(&g).map_err(|e| malformed(e.to_string()))?;
            if !responses.contains_key(&g) {
                return Err(malformed(format!("gold agent {g:?} has no response")));
            }
            gold.insert(g);
        }
        gold
    };

    Ok(LabeledExample {
        query: Query {
            id: record.id,
            text: record.text,
            domain: record.domain,
            split: record.split,
        },
        responses,
        gold_agents,
    })
}

/// Serializes examples in the same line format [`read_dataset`] accepts.
pub fn write_dataset<W: Write>(dataset: &Dataset, mut out: W) -> std::io::Result<()> {
    for ex in &dataset.examples {
        let all_voted = !ex.responses.is_empty() && ex.responses.values().all(|r| r.votes.is_some());
        let record = ExampleRecord {
            id: ex.query.id.clone(),
            text: ex.query.text.clone(),
            domain: ex.query.domain.clone(),
            split: ex.query.split,
            responses: ex
                .responses
                .iter()
                .map(|(agent, r)| ResponseRecord {
                    agent: agent.clone(),
                    text: r.text.clone(),
                    votes: r.votes.map(i64::from),
                })
                .collect(),
            gold: (!all_voted).then(|| ex.gold_agents.iter().cloned().collect()),
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainCounts {
    pub train: usize,
    pub test: usize,
    pub with_gold: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub total: usize,
    pub train: usize,
    pub test: usize,
    pub with_gold: usize,
    pub without_gold: usize,
    pub train_with_gold: usize,
    pub test_with_gold: usize,
    pub per_domain: BTreeMap<String, DomainCounts>,
}

pub fn dataset_stats(dataset: &Dataset) -> DatasetStats {
    let mut stats = DatasetStats::default();
    for ex in &dataset.examples {
        let has_gold = ex.has_gold();
        stats.total += 1;
        let domain = stats.per_domain.entry(ex.query.domain.clone()).or_default();
        match ex.query.split {
            Split::Train => {
                stats.train += 1;
                domain.train += 1;
                stats.train_with_gold += usize::from(has_gold);
            }
            Split::Test => {
                stats.test += 1;
                domain.test += 1;
                stats.test_with_gold += usize::from(has_gold);
            }
        }
        if has_gold {
            stats.with_gold += 1;
            domain.with_gold += 1;
        } else {
            stats.without_gold += 1;
        }
    }
    stats
}

/// An agent and the score some strategy assigned it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub agent_id: String,
    pub score: f64,
}

/// Sorts scores descending; equal scores are ordered by agent id ascending.
pub fn rank_candidates(scores: impl IntoIterator<Item = (String, f64)>) -> Vec<RankedCandidate> {
    let mut ranked: Vec<RankedCandidate> = scores
        .into_iter()
        // Adding 0.0 turns -0.0 into 0.0, which total_cmp would otherwise order lower.
        .map(|(agent_id, score)| RankedCandidate {
            agent_id,
            score: score + 0.0,
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.agent_id.cmp(&b.agent_id))
    });
    ranked
}
