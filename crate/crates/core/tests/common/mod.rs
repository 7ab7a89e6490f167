#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use async_trait::async_trait;
use ofa_core::arbiter::{Candidate, ResponseScorer, ScoreError};
use ofa_core::fleet::{build_fleet, LatencySpec};
use ofa_core::gateway::Registry;
use ofa_core::model::{read_dataset, AgentProfile, Dataset, FallbackPhrases};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub const WORDS: &[&str] = &[
    "weather", "rain", "sun", "music", "play", "song", "stock", "price", "news", "today", "tomorrow",
    "city", "gas", "miles", "car", "pizza", "order", "flight", "hotel", "score", "game", "team",
];

pub fn random_text(rng: &mut ChaCha8Rng, vocab: &[&str], max_len: usize) -> String {
    let n = rng.gen_range(1..=max_len);
    (0..n).map(|_| *vocab.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

/// Line-delimited dataset with random utterances, responses and votes.
pub fn synthetic_jsonl(seed: u64, agents: &[&str], n_queries: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domains = ["weather", "music", "finance"];
    let mut out = String::new();
    for i in 0..n_queries {
        let responses: Vec<_> = agents
            .iter()
            .map(|a| {
                let text = if rng.gen_bool(0.2) {
                    "Didn't get that!".to_string()
                } else {
                    random_text(&mut rng, WORDS, 8)
                };
                json!({"agent": a, "text": text, "votes": rng.gen_range(0..=5)})
            })
            .collect();
        let rec = json!({
            "id": format!("q{i}"),
            "text": format!("{} {i}", random_text(&mut rng, WORDS, 6)),
            "domain": domains[i % domains.len()],
            "split": if i % 3 == 0 { "train" } else { "test" },
            "responses": responses,
        });
        out.push_str(&rec.to_string());
        out.push('\n');
    }
    out
}

pub fn synthetic_dataset(seed: u64, agents: &[&str], n_queries: usize) -> Dataset {
    read_dataset(synthetic_jsonl(seed, agents, n_queries).as_bytes(), 3, None).unwrap()
}

/// Scores candidates 1 when their agent is gold for the query, else 0.
pub struct OracleScorer {
    pub gold: HashMap<String, BTreeSet<String>>,
}

impl OracleScorer {
    pub fn for_dataset(ds: &Dataset) -> Self {
        Self {
            gold: ds
                .examples
                .iter()
                .map(|e| (e.query.text.clone(), e.gold_agents.clone()))
                .collect(),
        }
    }
}

#[async_trait]
impl ResponseScorer for OracleScorer {
    async fn score(&self, query: &str, candidates: &[Candidate]) -> Result<Vec<f64>, ScoreError> {
        let gold = self.gold.get(query);
        Ok(candidates
            .iter()
            .map(|c| f64::from(u8::from(gold.is_some_and(|g| g.contains(&c.id)))))
            .collect())
    }

    fn label(&self) -> String {
        "oracle".into()
    }
}

/// Three agents with disjoint vocabularies.
pub const SEPARABLE: &[(&str, &[&str])] = &[
    ("forecaster", &["rain", "sunny", "humidity", "forecast", "cloudy", "drizzle", "thunder", "snowfall"]),
    ("jukebox", &["song", "album", "playlist", "guitar", "melody", "concert", "lyrics", "chorus"]),
    ("ticker", &["stock", "dividend", "shares", "nasdaq", "earnings", "portfolio", "bond", "futures"]),
];

/// `(text, agent)` pairs drawn from each agent's vocabulary.
pub fn separable_queries(seed: u64, per_agent: usize) -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (agent, vocab) in SEPARABLE {
        for _ in 0..per_agent {
            out.push((random_text(&mut rng, vocab, 4), agent.to_string()));
        }
    }
    out
}

pub fn separable_profiles() -> Vec<AgentProfile> {
    SEPARABLE
        .iter()
        .map(|(agent, vocab)| {
            let description = format!(
                "Ask about {} or {}. Knows {}, {} and {}. Also {}, {} and {}.",
                vocab[0], vocab[1], vocab[2], vocab[3], vocab[4], vocab[5], vocab[6], vocab[7]
            );
            AgentProfile::new(agent, agent.to_string(), description, None).unwrap()
        })
        .collect()
}

/// Independent BM25: rescans the raw corpus for every quantity.
pub fn brute_force_bm25(docs: &[Vec<String>], query: &[String], doc: usize, k1: f64, b: f64) -> f64 {
    let n = docs.len() as f64;
    let avg = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let len = docs[doc].len() as f64;
    let mut total = 0.0;
    for term in query {
        let tf = docs[doc].iter().filter(|t| *t == term).count() as f64;
        if tf == 0.0 {
            continue;
        }
        let df = docs.iter().filter(|d| d.contains(term)).count() as f64;
        let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
        let norm = if avg > 0.0 { len / avg } else { 0.0 };
        total += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm));
    }
    total
}

/// One-utterance dataset answered by every agent, replayed with a fixed
/// latency per agent.
pub fn latency_registry(latencies: &[(&str, u64)], query: &str) -> Registry {
    let responses: Vec<_> = latencies
        .iter()
        .map(|(a, _)| json!({"agent": a, "text": format!("{a} answers {query}"), "votes": 3}))
        .collect();
    let rec = json!({"id": "q0", "text": query, "domain": "d", "split": "test", "responses": responses});
    let ds = read_dataset(format!("{rec}\n").as_bytes(), 3, None).unwrap();
    let fleet = build_fleet(&ds, LatencySpec::Fixed(0), "Didn't get that!", &FallbackPhrases::default());
    let mut registry = Registry::new();
    for agent in fleet {
        let ms = latencies.iter().find(|(a, _)| *a == agent.profile().id).unwrap().1;
        let agent = agent.with_latency(LatencySpec::Fixed(ms));
        registry.register(agent.profile().clone(), Arc::new(agent)).unwrap();
    }
    registry
}
