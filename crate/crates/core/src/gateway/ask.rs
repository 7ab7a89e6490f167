use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{fan_out, FanoutConfig, GatewayError, Registry};
use crate::arbiter::{remote_score, score_candidates, select_best, Candidate, ResponseScorer, ScorerHandle, ScorerKind};
use crate::lexical::Bm25Params;
use crate::model::{AgentProfile, AgentResponse, RankedCandidate, ResponseStatus};
use crate::router::{
    rank_by_sentence_scores, route_by_description, Bm25Similarity, DescriptionMode, ExampleRouterModel,
    SkillSentences, TfidfSimilarity,
};

/// Answer text used whenever no agent produced a usable answer.
pub const APOLOGY: &str = "No agent could answer that.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    QaExamples,
    QaDescriptions,
    Qr,
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StrategyKind::QaExamples => "qa-examples",
            StrategyKind::QaDescriptions => "qa-descriptions",
            StrategyKind::Qr => "qr",
        })
    }
}

impl FromStr for StrategyKind {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "qa-examples" | "qa_examples" => Ok(StrategyKind::QaExamples),
            "qa-descriptions" | "qa_descriptions" => Ok(StrategyKind::QaDescriptions),
            "qr" => Ok(StrategyKind::Qr),
            other => Err(GatewayError::UnknownStrategy(other.to_string())),
        }
    }
}

/// A fully configured selection policy.
#[derive(Clone)]
pub enum Strategy {
    /// Route with a model trained on example queries, then dispatch once.
    QaExamples { model: Arc<ExampleRouterModel> },
    /// Route by description similarity, then dispatch once.
    QaDescriptions { scorer: ScorerHandle, mode: DescriptionMode },
    /// Dispatch to every agent and arbitrate between the responses.
    Qr {
        scorer: Arc<dyn ResponseScorer>,
        filter_fallbacks: bool,
    },
}

impl fmt::Debug for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Strategy({})", self.label())
    }
}

impl Strategy {
    pub fn qr(scorer: impl ResponseScorer + 'static) -> Self {
        Strategy::Qr {
            scorer: Arc::new(scorer),
            filter_fallbacks: false,
        }
    }

    pub fn kind(&self) -> StrategyKind {
        match self {
            Strategy::QaExamples { .. } => StrategyKind::QaExamples,
            Strategy::QaDescriptions { .. } => StrategyKind::QaDescriptions,
            Strategy::Qr { .. } => StrategyKind::Qr,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Strategy::QaExamples { .. } => "qa-examples".to_string(),
            Strategy::QaDescriptions { scorer, mode } => match mode {
                DescriptionMode::Sentences => format!("qa-descriptions/{scorer}"),
                DescriptionMode::Whole => format!("qa-descriptions/{scorer}/whole"),
            },
            Strategy::Qr { scorer, .. } => format!("qr/{}", scorer.label()),
        }
    }

    /// Builds a strategy from its kind plus the pieces it needs.
    pub fn from_parts(
        kind: StrategyKind,
        scorer: ScorerHandle,
        model: Option<Arc<ExampleRouterModel>>,
        mode: DescriptionMode,
        filter_fallbacks: bool,
    ) -> Result<Self, GatewayError> {
        Ok(match kind {
            StrategyKind::QaExamples => Strategy::QaExamples {
                model: model.ok_or(GatewayError::RouterModelMissing)?,
            },
            StrategyKind::QaDescriptions => Strategy::QaDescriptions { scorer, mode },
            StrategyKind::Qr => Strategy::Qr {
                scorer: Arc::new(scorer),
                filter_fallbacks,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateOutcome {
    pub agent_id: String,
    pub text: String,
    pub status: ResponseStatus,
    /// Arbitration score under qr, routing score under qa strategies;
    /// absent for candidates that were never scored.
    pub score: Option<f64>,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskResult {
    pub query_text: String,
    pub strategy: StrategyKind,
    pub strategy_label: String,
    pub selected_agent: Option<String>,
    pub answer_text: String,
    /// Set when `answer_text` is the gateway apology rather than an agent answer.
    pub apology: bool,
    pub candidates: Vec<CandidateOutcome>,
    /// Full ranking produced by routing or arbitration.
    pub ranking: Vec<RankedCandidate>,
    pub total_latency_ms: u64,
}

/// Ranks registered agents by description similarity.
pub async fn rank_by_descriptions(
    query_text: &str,
    profiles: &[AgentProfile],
    scorer: &ScorerHandle,
    mode: DescriptionMode,
) -> Result<Vec<RankedCandidate>, GatewayError> {
    let skills: Vec<SkillSentences> = profiles
        .iter()
        .map(|p| SkillSentences::from_profile(p, mode))
        .collect();
    Ok(match scorer.kind {
        ScorerKind::Bm25 => {
            let sim = Bm25Similarity::over_sentences(&skills, Bm25Params::default())?;
            route_by_description(query_text, &skills, &sim)
        }
        ScorerKind::TfidfCosine => {
            let sim = TfidfSimilarity::over_sentences(&skills)?;
            route_by_description(query_text, &skills, &sim)
        }
        ScorerKind::Remote => {
            let endpoint = scorer
                .remote_endpoint
                .as_deref()
                .ok_or(GatewayError::Config("remote scorer without endpoint".into()))?;
            let flat: Vec<Candidate> = skills
                .iter()
                .flat_map(|s| {
                    s.sentences
                        .iter()
                        .enumerate()
                        .map(move |(i, t)| Candidate::new(format!("{}#{i}", s.agent_id), t.clone()))
                })
                .collect();
            let flat_scores = remote_score(endpoint, query_text, &flat, scorer.timeout_ms).await?;
            let mut it = flat_scores.into_iter();
            let per_agent: Vec<Vec<f64>> = skills
                .iter()
                .map(|s| it.by_ref().take(s.sentences.len()).collect())
                .collect();
            rank_by_sentence_scores(&skills, &per_agent)
        }
    })
}

fn outcome(r: &AgentResponse, score: Option<f64>) -> CandidateOutcome {
    CandidateOutcome {
        agent_id: r.agent_id.clone(),
        text: r.text.clone(),
        status: r.status,
        score,
        latency_ms: r.latency_ms,
    }
}

/// Runs one query through `strategy` against a registry snapshot.
///
/// QA strategies dispatch exactly one request, to the top-ranked agent; qr
/// dispatches to every registered agent. When the chosen response is not an
/// answer, or nothing could be chosen, the answer is the gateway apology.
pub async fn ask(
    query_text: &str,
    strategy: &Strategy,
    registry: &Registry,
    config: FanoutConfig,
) -> Result<AskResult, GatewayError> {
    if registry.is_empty() {
        return Err(GatewayError::EmptyRegistry);
    }
    let start = Instant::now();

    let (selected, ranking, candidates) = match strategy {
        Strategy::QaExamples { .. } | Strategy::QaDescriptions { .. } => {
            let ranking = match strategy {
                Strategy::QaExamples { model } => model
                    .rank(query_text)
                    .into_iter()
                    .filter(|r| registry.get(&r.agent_id).is_some())
                    .collect(),
                Strategy::QaDescriptions { scorer, mode } => {
                    rank_by_descriptions(query_text, &registry.profiles(), scorer, *mode).await?
                }
                Strategy::Qr { .. } => unreachable!(),
            };
            match ranking.first() {
                Some(top) => {
                    let target = registry.get(&top.agent_id).cloned().into_iter().collect::<Vec<_>>();
                    let responses = fan_out(query_text, &target, config).await;
                    let candidates: Vec<CandidateOutcome> =
                        responses.iter().map(|r| outcome(r, Some(top.score))).collect();
                    (Some(top.agent_id.clone()), ranking, candidates)
                }
                None => (None, ranking, Vec::new()),
            }
        }
        Strategy::Qr {
            scorer,
            filter_fallbacks,
        } => {
            let responses = fan_out(query_text, registry.agents(), config).await;
            let pool: Vec<(String, String)> = responses
                .iter()
                .filter(|r| r.is_scorable())
                .filter(|r| !(*filter_fallbacks && r.status == ResponseStatus::Fallback))
                .map(|r| (r.agent_id.clone(), r.text.clone()))
                .collect();
            let scores = score_candidates(scorer.as_ref(), query_text, &pool).await?;
            let candidates = responses
                .iter()
                .map(|r| {
                    let s = scores.iter().find(|(id, _)| *id == r.agent_id).map(|(_, s)| *s);
                    outcome(r, s)
                })
                .collect();
            let arbitration = select_best(scores);
            (arbitration.selected_agent, arbitration.ranked, candidates)
        }
    };

    let answer = selected.as_ref().and_then(|id| {
        candidates
            .iter()
            .find(|c| &c.agent_id == id && c.status == ResponseStatus::Answered)
            .map(|c| c.text.clone())
    });
    let apology = answer.is_none();

    Ok(AskResult {
        query_text: query_text.to_string(),
        strategy: strategy.kind(),
        strategy_label: strategy.label(),
        selected_agent: selected,
        answer_text: answer.unwrap_or_else(|| APOLOGY.to_string()),
        apology,
        candidates,
        ranking,
        total_latency_ms: start.elapsed().as_millis() as u64,
    })
}
