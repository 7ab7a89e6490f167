//! Precision@1 evaluation over labeled utterances.
//!
//! Only utterances with at least one gold agent are evaluated by default.
//! When an agent subset is evaluated, gold sets are first restricted to that
//! subset, so the filter and every baseline refer to the subset.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arbiter::{score_candidates, select_best, ScoreError};
use crate::gateway::{ask, rank_by_descriptions, FanoutConfig, GatewayError, Registry, Strategy};
use crate::model::{AgentProfile, Dataset, FallbackPhrases, LabeledExample, ResponseStatus, Split};
use crate::router::{train_example_router, ExampleRouterModel, RouterError, RouterHyperparams};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no gold entry for query {0:?}")]
    MissingGold(String),
    #[error("unknown agent {0:?}")]
    UnknownAgent(String),
    #[error("scorer failed on query {query:?}: {source}")]
    Score {
        query: String,
        #[source]
        source: ScoreError,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Router(#[from] RouterError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("report record line {line}: {message}")]
    Format { line: usize, message: String },
}

/// Fraction of selections whose agent is gold. An absent selection counts
/// as wrong; an empty selection list yields 0.
pub fn precision_at_1(
    selections: &[(String, Option<String>)],
    gold: &HashMap<String, BTreeSet<String>>,
) -> Result<f64, EvalError> {
    let mut correct = 0usize;
    for (qid, selected) in selections {
        let g = gold.get(qid).ok_or_else(|| EvalError::MissingGold(qid.clone()))?;
        if selected.as_ref().is_some_and(|a| g.contains(a)) {
            correct += 1;
        }
    }
    if selections.is_empty() {
        Ok(0.0)
    } else {
        Ok(correct as f64 / selections.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub split: Split,
    /// Restrict candidates, gold sets and baselines to these agents.
    pub agents: Option<Vec<String>>,
    /// Drop utterances with no gold agent (after subsetting).
    pub require_gold: bool,
    pub phrases: FallbackPhrases,
    pub concurrency: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            split: Split::Test,
            agents: None,
            require_gold: true,
            phrases: FallbackPhrases::default(),
            concurrency: 8,
        }
    }
}

/// Utterances selected for evaluation, with gold restricted to the agent set.
#[derive(Debug, Clone)]
pub struct EvalSet<'a> {
    pub agents: Vec<AgentProfile>,
    pub examples: Vec<(&'a LabeledExample, BTreeSet<String>)>,
}

impl<'a> EvalSet<'a> {
    pub fn new(dataset: &'a Dataset, options: &EvalOptions) -> Result<Self, EvalError> {
        let agents: Vec<AgentProfile> = match &options.agents {
            None => dataset.agents.clone(),
            Some(ids) => ids
                .iter()
                .map(|id| {
                    dataset
                        .agents
                        .iter()
                        .find(|a| &a.id == id)
                        .cloned()
                        .ok_or_else(|| EvalError::UnknownAgent(id.clone()))
                })
                .collect::<Result<_, _>>()?,
        };
        let keep: BTreeSet<&str> = agents.iter().map(|a| a.id.as_str()).collect();
        let examples = dataset
            .split(options.split)
            .map(|ex| {
                let gold: BTreeSet<String> = ex
                    .gold_agents
                    .iter()
                    .filter(|a| keep.contains(a.as_str()))
                    .cloned()
                    .collect();
                (ex, gold)
            })
            .filter(|(_, gold)| !options.require_gold || !gold.is_empty())
            .collect();
        Ok(Self { agents, examples })
    }

    pub fn agent_ids(&self) -> Vec<String> {
        self.agents.iter().map(|a| a.id.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    fn gold_map(&self) -> HashMap<String, BTreeSet<String>> {
        self.examples
            .iter()
            .map(|(ex, g)| (ex.query.id.clone(), g.clone()))
            .collect()
    }
}

/// Precision@1 of always choosing `agent_id`.
pub fn individual_agent_baseline(set: &EvalSet<'_>, agent_id: &str) -> Result<f64, EvalError> {
    if !set.agents.iter().any(|a| a.id == agent_id) {
        return Err(EvalError::UnknownAgent(agent_id.to_string()));
    }
    let selections: Vec<(String, Option<String>)> = set
        .examples
        .iter()
        .map(|(ex, _)| (ex.query.id.clone(), Some(agent_id.to_string())))
        .collect();
    precision_at_1(&selections, &set.gold_map())
}

/// Result of evaluating one utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleOutcome {
    pub query_id: String,
    pub domain: String,
    pub selected: Option<String>,
    pub correct: bool,
}

/// Precision@1 restricted to each domain.
pub fn per_domain_breakdown(outcomes: &[ExampleOutcome]) -> BTreeMap<String, f64> {
    let mut tally: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for o in outcomes {
        let t = tally.entry(o.domain.clone()).or_default();
        t.0 += usize::from(o.correct);
        t.1 += 1;
    }
    tally
        .into_iter()
        .map(|(d, (c, n))| (d, c as f64 / n as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub strategy: String,
    pub n_agents: usize,
    pub n_evaluated: usize,
    /// Evaluated utterances where no agent could be selected.
    pub n_unselected: usize,
    /// `None` when nothing was evaluated.
    pub overall_precision_at_1: Option<f64>,
    /// Share of utterances with a selection that went to each agent.
    pub per_agent_selection_share: BTreeMap<String, f64>,
    pub per_domain_accuracy: BTreeMap<String, f64>,
    pub per_domain_counts: BTreeMap<String, usize>,
    pub individual_agent_baselines: BTreeMap<String, f64>,
}

/// Assembles a report from per-utterance outcomes. Only counts are reduced,
/// so the result does not depend on outcome order.
pub fn build_report(label: &str, set: &EvalSet<'_>, outcomes: &[ExampleOutcome]) -> Result<EvalReport, EvalError> {
    let n = outcomes.len();
    let mut counts: BTreeMap<String, usize> = set.agents.iter().map(|a| (a.id.clone(), 0)).collect();
    let mut n_unselected = 0;
    for o in outcomes {
        match &o.selected {
            Some(a) => *counts.entry(a.clone()).or_default() += 1,
            None => n_unselected += 1,
        }
    }
    let n_selected = n - n_unselected;
    let share = counts
        .into_iter()
        .map(|(a, c)| {
            let s = if n_selected == 0 { 0.0 } else { c as f64 / n_selected as f64 };
            (a, s)
        })
        .collect();
    let mut per_domain_counts = BTreeMap::new();
    for o in outcomes {
        *per_domain_counts.entry(o.domain.clone()).or_default() += 1;
    }
    let correct = outcomes.iter().filter(|o| o.correct).count();
    let baselines = set
        .agents
        .iter()
        .map(|a| Ok((a.id.clone(), individual_agent_baseline(set, &a.id)?)))
        .collect::<Result<_, EvalError>>()?;
    Ok(EvalReport {
        strategy: label.to_string(),
        n_agents: set.agents.len(),
        n_evaluated: n,
        n_unselected,
        overall_precision_at_1: (n > 0).then(|| correct as f64 / n as f64),
        per_agent_selection_share: share,
        per_domain_accuracy: per_domain_breakdown(outcomes),
        per_domain_counts,
        individual_agent_baselines: baselines,
    })
}

async fn select_offline(
    strategy: &Strategy,
    ex: &LabeledExample,
    agents: &[AgentProfile],
    phrases: &FallbackPhrases,
) -> Result<Option<String>, EvalError> {
    let query = &ex.query.text;
    match strategy {
        Strategy::QaExamples { model } => Ok(model
            .rank(query)
            .into_iter()
            .find(|r| agents.iter().any(|a| a.id == r.agent_id))
            .map(|r| r.agent_id)),
        Strategy::QaDescriptions { scorer, mode } => {
            let ranking = rank_by_descriptions(query, agents, scorer, *mode).await?;
            Ok(ranking.into_iter().next().map(|r| r.agent_id))
        }
        Strategy::Qr {
            scorer,
            filter_fallbacks,
        } => {
            let pool: Vec<(String, String)> = agents
                .iter()
                .filter_map(|a| ex.responses.get(&a.id).map(|r| (a.id.clone(), r.text.clone())))
                .filter(|(_, text)| !(*filter_fallbacks && phrases.classify(text) == ResponseStatus::Fallback))
                .collect();
            let scores = score_candidates(scorer.as_ref(), query, &pool)
                .await
                .map_err(|source| EvalError::Score {
                    query: ex.query.id.clone(),
                    source,
                })?;
            Ok(select_best(scores).selected_agent)
        }
    }
}

/// Evaluates `strategy` offline: qr candidates are the recorded responses,
/// so no network is involved for local scorers. A scorer failure aborts.
pub async fn run_eval(strategy: &Strategy, dataset: &Dataset, options: &EvalOptions) -> Result<EvalReport, EvalError> {
    let set = EvalSet::new(dataset, options)?;
    let agents = &set.agents;
    let outcomes: Vec<ExampleOutcome> = stream::iter(set.examples.iter())
        .map(|(ex, gold)| async move {
            let selected = select_offline(strategy, ex, agents, &options.phrases).await?;
            Ok::<_, EvalError>(ExampleOutcome {
                query_id: ex.query.id.clone(),
                domain: ex.query.domain.clone(),
                correct: selected.as_ref().is_some_and(|a| gold.contains(a)),
                selected,
            })
        })
        .buffered(options.concurrency.max(1))
        .collect::<Vec<_>>()
        .await
        .into_iter()
        .collect::<Result<_, _>>()?;
    build_report(&strategy.label(), &set, &outcomes)
}

/// Evaluates through the gateway: every utterance goes through [`ask`]
/// against `registry`, e.g. a replay fleet served over the wire.
pub async fn run_eval_via_gateway(
    strategy: &Strategy,
    dataset: &Dataset,
    registry: &Registry,
    fanout: FanoutConfig,
    options: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    let mut options = options.clone();
    if options.agents.is_none() {
        options.agents = Some(registry.profiles().into_iter().map(|p| p.id).collect());
    }
    let set = EvalSet::new(dataset, &options)?;
    let outcomes: Vec<ExampleOutcome> = stream::iter(set.examples.iter())
        .map(|(ex, gold)| async move {
            let result = ask(&ex.query.text, strategy, registry, fanout).await?;
            Ok::<_, EvalError>(ExampleOutcome {
                query_id: ex.query.id.clone(),
                domain: ex.query.domain.clone(),
                correct: result.selected_agent.as_ref().is_some_and(|a| gold.contains(a)),
                selected: result.selected_agent,
            })
        })
        .buffered(options.concurrency.max(1))
        .collect::<Vec<_>>()
        .await
        .into_iter()
        .collect::<Result<_, _>>()?;
    build_report(&strategy.label(), &set, &outcomes)
}

/// Trains the example router on the train split only.
pub fn train_router_on_train_split(
    dataset: &Dataset,
    agents: Option<&[String]>,
    hyperparams: RouterHyperparams,
) -> Result<Arc<ExampleRouterModel>, EvalError> {
    let agent_ids: Vec<String> = agents.map(<[String]>::to_vec).unwrap_or_else(|| dataset.agent_ids());
    let keep: BTreeSet<&str> = agent_ids.iter().map(String::as_str).collect();
    let examples: Vec<(String, BTreeSet<String>)> = dataset
        .split(Split::Train)
        .map(|e| {
            let gold = e
                .gold_agents
                .iter()
                .filter(|a| keep.contains(a.as_str()))
                .cloned()
                .collect();
            (e.query.text.clone(), gold)
        })
        .collect();
    Ok(Arc::new(train_example_router(&examples, &agent_ids, hyperparams)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Table,
    Records,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "records" => Ok(ReportFormat::Records),
            other => Err(format!("unknown report format {other:?}; expected table or records")),
        }
    }
}

/// One line of the records format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub strategy: String,
    pub metric: String,
    pub key: Option<String>,
    pub value: Option<f64>,
}

fn pct(v: Option<f64>) -> String {
    v.map(|x| format!("{:.2}", 100.0 * x)).unwrap_or_default()
}

/// Method row with accuracy and per-agent selection share columns, then
/// the individual-agent baselines, all in percent.
pub fn render_table(report: &EvalReport) -> String {
    let agents: Vec<&String> = report.individual_agent_baselines.keys().collect();
    let acc_header = format!("Accuracy (n={})", report.n_agents);
    let method_w = agents
        .iter()
        .map(|a| a.len() + 2)
        .chain([report.strategy.len(), "Individual agents".len()])
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    let _ = write!(out, "{:<method_w$}  {:>acc_w$}", "Method", acc_header, acc_w = acc_header.len());
    for a in &agents {
        let _ = write!(out, "  {:>w$}", a, w = a.len().max(6));
    }
    out.push('\n');
    let evaluated = report.n_evaluated > 0;
    let _ = write!(
        out,
        "{:<method_w$}  {:>acc_w$}",
        report.strategy,
        pct(report.overall_precision_at_1),
        acc_w = acc_header.len()
    );
    for a in &agents {
        let share = report
            .per_agent_selection_share
            .get(*a)
            .copied()
            .filter(|_| evaluated);
        let _ = write!(out, "  {:>w$}", pct(share), w = a.len().max(6));
    }
    out.push('\n');
    let _ = writeln!(out, "Individual agents");
    for a in &agents {
        let b = report.individual_agent_baselines.get(*a).copied().filter(|_| evaluated);
        let _ = writeln!(out, "{:<method_w$}  {:>acc_w$}", format!("  {a}"), pct(b), acc_w = acc_header.len());
    }
    let _ = writeln!(
        out,
        "evaluated={} unselected={}",
        report.n_evaluated, report.n_unselected
    );
    out
}

pub fn report_records(report: &EvalReport) -> Vec<ReportRecord> {
    let rec = |metric: &str, key: Option<&str>, value: Option<f64>| ReportRecord {
        strategy: report.strategy.clone(),
        metric: metric.to_string(),
        key: key.map(str::to_string),
        value,
    };
    let mut out = vec![
        rec("n_agents", None, Some(report.n_agents as f64)),
        rec("n_evaluated", None, Some(report.n_evaluated as f64)),
        rec("n_unselected", None, Some(report.n_unselected as f64)),
        rec("overall_precision_at_1", None, report.overall_precision_at_1),
    ];
    out.extend(report.per_agent_selection_share.iter().map(|(k, v)| rec("selection_share", Some(k), Some(*v))));
    out.extend(report.per_domain_accuracy.iter().map(|(k, v)| rec("domain_accuracy", Some(k), Some(*v))));
    out.extend(report.per_domain_counts.iter().map(|(k, v)| rec("domain_count", Some(k), Some(*v as f64))));
    out.extend(report.individual_agent_baselines.iter().map(|(k, v)| rec("agent_baseline", Some(k), Some(*v))));
    out
}

pub fn render_records(report: &EvalReport) -> String {
    report_records(report)
        .iter()
        .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
        .collect()
}

/// Inverse of [`render_records`] for a single strategy.
pub fn parse_records(raw: &str) -> Result<EvalReport, EvalError> {
    let mut report = EvalReport {
        strategy: String::new(),
        n_agents: 0,
        n_evaluated: 0,
        n_unselected: 0,
        overall_precision_at_1: None,
        per_agent_selection_share: BTreeMap::new(),
        per_domain_accuracy: BTreeMap::new(),
        per_domain_counts: BTreeMap::new(),
        individual_agent_baselines: BTreeMap::new(),
    };
    for (i, line) in raw.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fail = |message: String| EvalError::Format { line: i + 1, message };
        let r: ReportRecord = serde_json::from_str(line).map_err(|e| fail(e.to_string()))?;
        report.strategy = r.strategy.clone();
        let value = || r.value.ok_or_else(|| fail(format!("{} needs a value", r.metric)));
        let key = || r.key.clone().ok_or_else(|| fail(format!("{} needs a key", r.metric)));
        match r.metric.as_str() {
            "n_agents" => report.n_agents = value()? as usize,
            "n_evaluated" => report.n_evaluated = value()? as usize,
            "n_unselected" => report.n_unselected = value()? as usize,
            "overall_precision_at_1" => report.overall_precision_at_1 = r.value,
            "selection_share" => {
                report.per_agent_selection_share.insert(key()?, value()?);
            }
            "domain_accuracy" => {
                report.per_domain_accuracy.insert(key()?, value()?);
            }
            "domain_count" => {
                report.per_domain_counts.insert(key()?, value()? as usize);
            }
            "agent_baseline" => {
                report.individual_agent_baselines.insert(key()?, value()?);
            }
            other => return Err(fail(format!("unknown metric {other:?}"))),
        }
    }
    Ok(report)
}

/// Writes the report to `path`. Concurrent writers to one path: last wins.
pub fn emit_report(report: &EvalReport, format: ReportFormat, path: &Path) -> Result<(), EvalError> {
    let body = match format {
        ReportFormat::Table => render_table(report),
        ReportFormat::Records => render_records(report),
    };
    std::fs::write(path, body).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })
}
