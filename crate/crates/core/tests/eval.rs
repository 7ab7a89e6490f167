mod common;

use std::collections::{BTreeMap, BTreeSet};

use ofa_core::arbiter::stub::{StubBehavior, StubMode, StubServer};
use ofa_core::arbiter::ScorerHandle;
use ofa_core::eval::{
    emit_report, parse_records, render_table, run_eval, EvalOptions, ReportFormat,
};
use ofa_core::gateway::Strategy;
use ofa_core::model::{read_dataset, Dataset};
use ofa_core::router::DescriptionMode;
use proptest::prelude::*;
use serde_json::Value;

use common::{separable_profiles, synthetic_jsonl, OracleScorer};

const AGENTS: [&str; 4] = ["houndify", "google", "alexa", "adasa"];

/// (split, domain, gold) per utterance, read straight from the records.
fn raw_rows(jsonl: &str) -> Vec<(String, String, BTreeSet<String>)> {
    jsonl
        .lines()
        .map(|l| {
            let v: Value = serde_json::from_str(l).unwrap();
            let gold = v["responses"]
                .as_array()
                .unwrap()
                .iter()
                .filter(|r| r["votes"].as_i64().unwrap() >= 3)
                .map(|r| r["agent"].as_str().unwrap().to_string())
                .collect();
            (v["split"].as_str().unwrap().into(), v["domain"].as_str().unwrap().into(), gold)
        })
        .collect()
}

fn dataset(seed: u64, n: usize) -> (String, Dataset) {
    let jsonl = synthetic_jsonl(seed, &AGENTS, n);
    let ds = read_dataset(jsonl.as_bytes(), 3, None).unwrap();
    (jsonl, ds)
}

#[tokio::test]
async fn oracle_scores_perfectly() {
    let (_, ds) = dataset(1, 200);
    let report = run_eval(&Strategy::qr(OracleScorer::for_dataset(&ds)), &ds, &EvalOptions::default())
        .await
        .unwrap();
    assert_eq!(report.overall_precision_at_1, Some(1.0));
    assert_eq!(report.n_unselected, 0);
}

#[tokio::test]
async fn constant_scorer_equals_tie_break_winner_baseline() {
    let (jsonl, ds) = dataset(2, 300);
    let stub = StubServer::spawn(StubBehavior::new(StubMode::Constant(-1.0))).await.unwrap();
    let report = run_eval(&Strategy::qr(ScorerHandle::remote(stub.endpoint(), 2000)), &ds, &EvalOptions::default())
        .await
        .unwrap();
    let rows: Vec<_> = raw_rows(&jsonl).into_iter().filter(|(s, _, g)| s == "test" && !g.is_empty()).collect();
    let hits = rows.iter().filter(|(_, _, g)| g.contains("adasa")).count();
    assert_eq!(report.overall_precision_at_1, Some(hits as f64 / rows.len() as f64));
    assert_eq!(report.individual_agent_baselines["adasa"], hits as f64 / rows.len() as f64);
    assert_eq!(report.n_evaluated, rows.len());

    let mut per_domain: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (_, d, g) in &rows {
        let e = per_domain.entry(d.clone()).or_default();
        e.0 += usize::from(g.contains("adasa"));
        e.1 += 1;
    }
    for (d, (h, n)) in per_domain {
        assert_eq!(report.per_domain_accuracy[&d], h as f64 / n as f64);
        assert_eq!(report.per_domain_counts[&d], n);
    }
}

#[tokio::test]
async fn report_arithmetic_is_consistent() {
    let (_, ds) = dataset(3, 240);
    let report = run_eval(&Strategy::qr(ScorerHandle::bm25()), &ds, &EvalOptions::default()).await.unwrap();
    let weighted: f64 = report
        .per_domain_accuracy
        .iter()
        .map(|(d, a)| a * report.per_domain_counts[d] as f64)
        .sum::<f64>()
        / report.n_evaluated as f64;
    assert!((weighted - report.overall_precision_at_1.unwrap()).abs() < 1e-12);
    let share: f64 = report.per_agent_selection_share.values().sum();
    assert!((share - 1.0).abs() < 1e-12);
    assert_eq!(report.per_domain_counts.values().sum::<usize>(), report.n_evaluated);
    let best = report.individual_agent_baselines.values().cloned().fold(0.0, f64::max);
    assert!(best <= 1.0);
}

#[tokio::test]
async fn subset_restricts_gold_and_candidates() {
    let (jsonl, ds) = dataset(4, 240);
    let opts = EvalOptions {
        agents: Some(vec!["alexa".into(), "google".into()]),
        ..Default::default()
    };
    let report = run_eval(&Strategy::qr(ScorerHandle::bm25()), &ds, &opts).await.unwrap();
    let rows: Vec<_> = raw_rows(&jsonl)
        .into_iter()
        .filter(|(s, _, g)| s == "test" && (g.contains("alexa") || g.contains("google")))
        .collect();
    assert_eq!(report.n_agents, 2);
    assert_eq!(report.n_evaluated, rows.len());
    let google = rows.iter().filter(|(_, _, g)| g.contains("google")).count() as f64 / rows.len() as f64;
    assert_eq!(report.individual_agent_baselines["google"], google);
    assert_eq!(report.per_agent_selection_share.len(), 2);

    let unknown = EvalOptions {
        agents: Some(vec!["siri".into()]),
        ..Default::default()
    };
    assert!(run_eval(&Strategy::qr(ScorerHandle::bm25()), &ds, &unknown).await.is_err());
}

#[tokio::test]
async fn remote_description_scoring_matches_local() {
    let jsonl = synthetic_jsonl(6, &["forecaster", "jukebox", "ticker"], 60);
    let ds = read_dataset(jsonl.as_bytes(), 3, Some(separable_profiles())).unwrap();
    let stub = StubServer::spawn(StubBehavior::new(StubMode::Bm25)).await.unwrap();
    let local = Strategy::QaDescriptions {
        scorer: ScorerHandle::bm25(),
        mode: DescriptionMode::Sentences,
    };
    let remote = Strategy::QaDescriptions {
        scorer: ScorerHandle::remote(stub.endpoint(), 2000),
        mode: DescriptionMode::Sentences,
    };
    let opts = EvalOptions::default();
    let a = run_eval(&local, &ds, &opts).await.unwrap();
    let b = run_eval(&remote, &ds, &opts).await.unwrap();
    assert_eq!(a.overall_precision_at_1, b.overall_precision_at_1);
    assert_eq!(a.per_agent_selection_share, b.per_agent_selection_share);
}

#[tokio::test]
async fn records_and_table_outputs() {
    let (_, ds) = dataset(7, 120);
    let report = run_eval(&Strategy::qr(ScorerHandle::bm25()), &ds, &EvalOptions::default()).await.unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.jsonl");
    emit_report(&report, ReportFormat::Records, &path).unwrap();
    assert_eq!(parse_records(&std::fs::read_to_string(&path).unwrap()).unwrap(), report);

    let table = render_table(&report);
    let header: Vec<&str> = table.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(&header[..3], ["Method", "Accuracy", "(n=4)"]);
    let mut agents = AGENTS.to_vec();
    agents.sort();
    assert_eq!(&header[3..], agents);
    assert!(table.contains("Individual agents"));
}

#[tokio::test]
async fn empty_split_gives_empty_report() {
    let (_, ds) = dataset(8, 30);
    let opts = EvalOptions {
        agents: Some(vec!["adasa".into()]),
        ..Default::default()
    };
    let mut no_test = ds.clone();
    no_test.examples.retain(|e| e.query.split == ofa_core::model::Split::Train);
    let report = run_eval(&Strategy::qr(ScorerHandle::bm25()), &no_test, &opts).await.unwrap();
    assert_eq!(report.n_evaluated, 0);
    assert_eq!(report.overall_precision_at_1, None);
    let row = render_table(&report).lines().nth(1).unwrap().to_string();
    assert_eq!(row.split_whitespace().count(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn precision_ignores_example_order(seed in any::<u64>(), rot in 0usize..50) {
        let (_, ds) = dataset(seed, 50);
        let mut shuffled = ds.clone();
        shuffled.examples.rotate_left(rot);
        shuffled.examples.reverse();
        let rt = tokio::runtime::Builder::new_current_thread().build().unwrap();
        let strategy = Strategy::qr(ScorerHandle::bm25());
        let a = rt.block_on(run_eval(&strategy, &ds, &EvalOptions::default())).unwrap();
        let b = rt.block_on(run_eval(&strategy, &shuffled, &EvalOptions::default())).unwrap();
        prop_assert_eq!(a, b);
    }
}
