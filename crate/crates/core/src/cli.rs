//! The `ofa` command line.
//!
//! Exit codes: 0 on success, 1 when an input fails validation or a command
//! fails at run time, 2 on usage errors. `OFA_CONFIG` may name a gateway
//! config file; flags override its values. Commands that write files
//! replace them whole, so concurrent writers to one path leave the last
//! writer's output.

use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::arbiter::RemoteFailurePolicy;
use crate::eval::{emit_report, render_records, render_table, run_eval, train_router_on_train_split, EvalOptions, ReportFormat};
use crate::fleet::{agent_endpoint, build_fleet, spawn_fleet, LatencySpec};
use crate::gateway::{serve, GatewayConfig, Strategy, StrategyKind};
use crate::lexical::{tokenize, Bm25Index, Bm25Params};
use crate::model::{dataset_stats, load_agents, load_dataset, load_dataset_with_agents, Dataset, ProfileRecord};
use crate::router::{split_description, ExampleRouterModel, RouterHyperparams};

pub const CONFIG_ENV: &str = "OFA_CONFIG";

#[derive(Debug, Parser)]
#[command(name = "ofa", version, about = "Gateway over black-box conversational agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Lint a dataset and print its statistics.
    Validate(ValidateArgs),
    /// Train the example router on the train split.
    TrainRouter(TrainArgs),
    /// Evaluate a strategy on a dataset split.
    Eval(EvalArgs),
    /// Serve the gateway.
    Serve(ServeArgs),
    /// Serve replay agents for every agent in a dataset.
    Fleet(FleetArgs),
    /// Print BM25 term statistics and per-term score contributions.
    ScoreDebug(ScoreDebugArgs),
}

#[derive(Debug, Args)]
struct Inputs {
    /// Gateway config file; overrides OFA_CONFIG.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Agent profiles (JSONL or JSON array).
    #[arg(long)]
    agents: Option<PathBuf>,
    /// Minimum votes for an agent to count as gold.
    #[arg(long)]
    threshold: Option<u8>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Also write the statistics as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, value_parser = parse_strategy)]
    strategy: StrategyKind,
    /// bm25, tfidf, remote:<endpoint> or a configured scorer name.
    #[arg(long)]
    scorer: Option<String>,
    /// Remote scorer timeout.
    #[arg(long)]
    timeout_ms: Option<u64>,
    /// Seed for router training when no model file is given.
    #[arg(long)]
    seed: Option<u64>,
    /// Trained example router; trained on the train split when absent.
    #[arg(long)]
    router_model: Option<PathBuf>,
    /// Comma-separated agent subset.
    #[arg(long, value_delimiter = ',')]
    subset: Option<Vec<String>>,
    #[arg(long)]
    filter_fallbacks: bool,
    /// Score with BM25 when the remote scorer fails instead of aborting.
    #[arg(long)]
    remote_fallback_bm25: bool,
    /// Keep utterances without a gold agent.
    #[arg(long)]
    include_no_gold: bool,
    #[arg(long, default_value = "table")]
    format: ReportFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    scorer: Option<String>,
    /// Per-agent timeout.
    #[arg(long)]
    timeout_ms: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    router_model: Option<PathBuf>,
    #[arg(long)]
    filter_fallbacks: bool,
}

#[derive(Debug, Args)]
struct FleetArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, default_value_t = 9000)]
    port: u16,
    /// Fixed reply latency.
    #[arg(long)]
    latency_ms: Option<u64>,
    /// Upper bound of a seeded uniform latency in [latency_ms, max_latency_ms].
    #[arg(long, requires = "latency_ms")]
    max_latency_ms: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write agent profiles pointing at the fleet, usable as --agents.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScoreDebugArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    query: Option<String>,
    /// Extra document as id=text; repeatable.
    #[arg(long = "doc", value_parser = parse_doc)]
    docs: Vec<(String, String)>,
}

fn parse_strategy(s: &str) -> Result<StrategyKind, String> {
    s.parse().map_err(|e: crate::gateway::GatewayError| e.to_string())
}

fn parse_doc(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(id, text)| (id.to_string(), text.to_string()))
        .ok_or_else(|| "expected id=text".to_string())
}

/// Failure of a command, mapped onto an exit code.
enum Failure {
    Usage(String),
    Invalid(String),
}

impl Failure {
    fn invalid(e: impl std::fmt::Display) -> Self {
        Failure::Invalid(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

/// Parses `argv` (including the program name) and runs the command.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Validate(a) => validate(a),
        Command::TrainRouter(a) => train(a),
        Command::Eval(a) => block_on(eval(a)),
        Command::Serve(a) => block_on(serve_cmd(a)),
        Command::Fleet(a) => block_on(fleet(a)),
        Command::ScoreDebug(a) => score_debug(a),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}\n\nRun with --help for usage.");
            2
        }
        Err(Failure::Invalid(m)) => {
            eprintln!("error: {m}");
            1
        }
    }
}

fn block_on(fut: impl std::future::Future<Output = CmdResult>) -> CmdResult {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(Failure::invalid)?
        .block_on(fut)
}

impl Inputs {
    /// Config from --config or OFA_CONFIG, with these flags applied on top.
    fn config(&self) -> Result<GatewayConfig, Failure> {
        let path = self
            .config
            .clone()
            .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
        let mut config = match path {
            Some(p) => GatewayConfig::load(&p).map_err(Failure::invalid)?,
            None => GatewayConfig::default(),
        };
        if let Some(d) = &self.dataset {
            config.dataset_path = Some(d.clone());
        }
        if let Some(a) = &self.agents {
            config.agents_path = Some(a.clone());
        }
        if let Some(t) = self.threshold {
            config.vote_threshold = t;
        }
        Ok(config)
    }
}

fn load(config: &GatewayConfig) -> Result<Dataset, Failure> {
    let path = config
        .dataset_path
        .as_deref()
        .ok_or_else(|| Failure::Usage("--dataset is required".into()))?;
    let dataset = match &config.agents_path {
        Some(a) => {
            let agents = load_agents(a).map_err(Failure::invalid)?;
            load_dataset_with_agents(path, config.vote_threshold, agents)
        }
        None => load_dataset(path, config.vote_threshold),
    };
    dataset.map_err(Failure::invalid)
}

fn write_file(path: &Path, body: &[u8]) -> CmdResult {
    std::fs::write(path, body).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn validate(args: ValidateArgs) -> CmdResult {
    let config = args.inputs.config()?;
    let dataset = load(&config)?;
    let stats = dataset_stats(&dataset);
    println!(
        "utterances={} train={} test={} with_gold={} without_gold={} train_with_gold={} test_with_gold={} agents={} domains={}",
        stats.total,
        stats.train,
        stats.test,
        stats.with_gold,
        stats.without_gold,
        stats.train_with_gold,
        stats.test_with_gold,
        dataset.agents.len(),
        stats.per_domain.len()
    );
    for (domain, c) in &stats.per_domain {
        println!("domain={domain} train={} test={} with_gold={}", c.train, c.test, c.with_gold);
    }
    if let Some(out) = args.out {
        let body = serde_json::to_vec_pretty(&stats).map_err(Failure::invalid)?;
        write_file(&out, &body)?;
    }
    Ok(())
}

fn train(args: TrainArgs) -> CmdResult {
    let config = args.inputs.config()?;
    let dataset = load(&config)?;
    let defaults = RouterHyperparams::default();
    let hp = RouterHyperparams {
        seed: args.seed.unwrap_or(config.seed),
        epochs: args.epochs.unwrap_or(defaults.epochs),
        learning_rate: args.learning_rate.unwrap_or(defaults.learning_rate),
        ..defaults
    };
    let model = train_router_on_train_split(&dataset, None, hp).map_err(Failure::invalid)?;
    let mut buf = Vec::new();
    model.write_to(&mut buf).map_err(Failure::invalid)?;
    write_file(&args.out, &buf)?;
    eprintln!("wrote router for {} agents to {}", model.agents().len(), args.out.display());
    Ok(())
}

fn read_model(path: &Path) -> Result<ExampleRouterModel, Failure> {
    let file = std::fs::File::open(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    ExampleRouterModel::read_from(std::io::BufReader::new(file)).map_err(Failure::invalid)
}

async fn eval(args: EvalArgs) -> CmdResult {
    let mut config = args.inputs.config()?;
    if let Some(ms) = args.timeout_ms {
        config.scorer_timeout_ms = ms;
    }
    let dataset = load(&config)?;
    let mut scorer = config
        .resolve_scorer(args.scorer.as_deref().unwrap_or(&config.default_scorer))
        .map_err(|e| Failure::Usage(e.to_string()))?;
    if args.remote_fallback_bm25 {
        scorer = scorer.with_failure_policy(RemoteFailurePolicy::FallBackToBm25);
    }
    let model = match (args.strategy, &args.router_model, &config.router_model_path) {
        (StrategyKind::QaExamples, Some(p), _) | (StrategyKind::QaExamples, None, Some(p)) => {
            Some(Arc::new(read_model(p)?))
        }
        (StrategyKind::QaExamples, None, None) => {
            let hp = RouterHyperparams {
                seed: args.seed.unwrap_or(config.seed),
                ..Default::default()
            };
            Some(train_router_on_train_split(&dataset, args.subset.as_deref(), hp).map_err(Failure::invalid)?)
        }
        _ => None,
    };
    let strategy = Strategy::from_parts(
        args.strategy,
        scorer,
        model,
        config.description_mode,
        args.filter_fallbacks || config.filter_fallbacks,
    )
    .map_err(Failure::invalid)?;
    let options = EvalOptions {
        agents: args.subset,
        require_gold: !args.include_no_gold,
        phrases: config.phrases(),
        ..Default::default()
    };
    let report = run_eval(&strategy, &dataset, &options).await.map_err(Failure::invalid)?;
    match &args.out {
        Some(path) => emit_report(&report, args.format, path).map_err(Failure::invalid),
        None => {
            let body = match args.format {
                ReportFormat::Table => render_table(&report),
                ReportFormat::Records => render_records(&report),
            };
            print!("{body}");
            Ok(())
        }
    }
}

async fn serve_cmd(args: ServeArgs) -> CmdResult {
    let mut config = args.inputs.config()?;
    if let Some(port) = args.port {
        let host = config
            .bind
            .rsplit_once(':')
            .map(|(h, _)| h.to_string())
            .unwrap_or_else(|| "127.0.0.1".into());
        config.bind = format!("{host}:{port}");
    }
    if let Some(s) = args.scorer {
        config.default_scorer = s;
    }
    if let Some(ms) = args.timeout_ms {
        config.per_agent_timeout_ms = ms;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(p) = args.router_model {
        config.router_model_path = Some(p);
    }
    config.filter_fallbacks |= args.filter_fallbacks;
    if config.agents_path.is_none() && config.dataset_path.is_none() {
        return Err(Failure::Usage("--agents or --dataset is required".into()));
    }
    serve(config).await.map_err(Failure::invalid)
}

async fn fleet(args: FleetArgs) -> CmdResult {
    let config = args.inputs.config()?;
    let dataset = load(&config)?;
    let latency = match (args.latency_ms, args.max_latency_ms) {
        (None, _) => config.replay_latency,
        (Some(ms), None) => LatencySpec::Fixed(ms),
        (Some(min_ms), Some(max_ms)) if max_ms >= min_ms => LatencySpec::Uniform {
            min_ms,
            max_ms,
            seed: args.seed,
        },
        (Some(_), Some(_)) => return Err(Failure::Usage("--max-latency-ms must be >= --latency-ms".into())),
    };
    let agents = build_fleet(&dataset, latency, &config.fallback_text, &config.phrases());
    let profiles: Vec<_> = agents.iter().map(|a| a.profile().clone()).collect();
    let addr = SocketAddr::from(([127, 0, 0, 1], args.port));
    let (bound, handle) = spawn_fleet(agents, addr).await.map_err(Failure::invalid)?;
    let mut records = Vec::new();
    for p in profiles {
        let mut record = ProfileRecord::from(&p);
        record.endpoint = Some(agent_endpoint(bound, &p.id));
        records.push(serde_json::to_string(&record).map_err(Failure::invalid)?);
    }
    let body = records.join("\n") + "\n";
    match &args.out {
        Some(path) => write_file(path, body.as_bytes())?,
        None => print!("{body}"),
    }
    let _ = std::io::stdout().flush();
    log::info!("fleet listening on {bound}");
    let _ = tokio::signal::ctrl_c().await;
    handle.abort();
    Ok(())
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum DebugRecord<'a> {
    Term {
        term: &'a str,
        df: usize,
        idf: f64,
    },
    QueryToken {
        token: &'a str,
    },
    Contribution {
        doc_id: &'a str,
        term: &'a str,
        tf: u32,
        idf: f64,
        contribution: f64,
    },
    Score {
        doc_id: &'a str,
        score: f64,
    },
}

fn score_debug(args: ScoreDebugArgs) -> CmdResult {
    let config = args.inputs.config()?;
    let mut docs = args.docs;
    if let Some(path) = &config.agents_path {
        for p in load_agents(path).map_err(Failure::invalid)? {
            for (i, s) in split_description(&p.description).into_iter().enumerate() {
                docs.push((format!("{}#{i}", p.id), s));
            }
        }
    }
    if docs.is_empty() {
        return Err(Failure::Usage("give --agents or at least one --doc".into()));
    }
    let index = Bm25Index::build(docs, Bm25Params::default()).map_err(Failure::invalid)?;
    let mut out = std::io::stdout().lock();
    let mut emit = |r: &DebugRecord<'_>| -> CmdResult {
        let line = serde_json::to_string(r).map_err(Failure::invalid)?;
        writeln!(out, "{line}").map_err(Failure::invalid)
    };
    for t in index.term_stats() {
        emit(&DebugRecord::Term {
            term: &t.term,
            df: t.df,
            idf: t.idf,
        })?;
    }
    if let Some(query) = &args.query {
        for token in tokenize(query) {
            emit(&DebugRecord::QueryToken { token: &token })?;
        }
        for c in index.explain(query) {
            emit(&DebugRecord::Contribution {
                doc_id: &c.doc_id,
                term: &c.term,
                tf: c.tf,
                idf: c.idf,
                contribution: c.contribution,
            })?;
        }
        for (doc_id, score) in index.score_all(query) {
            emit(&DebugRecord::Score { doc_id: &doc_id, score })?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run_cli(["ofa", "bogus"]), 2);
        assert_eq!(run_cli(["ofa", "train-router"]), 2);
        assert_eq!(run_cli(["ofa", "eval", "--strategy", "magic", "--dataset", "x"]), 2);
        assert_eq!(run_cli(["ofa", "score-debug"]), 2);
    }

    #[test]
    fn missing_dataset_file_exits_one() {
        assert_eq!(run_cli(["ofa", "validate", "--dataset", "/nonexistent/d.jsonl"]), 1);
    }

    #[test]
    fn score_debug_on_inline_docs() {
        assert_eq!(
            run_cli(["ofa", "score-debug", "--doc", "a=weather today", "--query", "weather"]),
            0
        );
    }
}
