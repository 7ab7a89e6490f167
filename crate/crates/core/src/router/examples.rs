//! One-vs-rest logistic router trained on example queries.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{hashed_features, SparseFeatures, DEFAULT_FEATURE_DIM};
use super::RouterError;
use crate::model::{rank_candidates, RankedCandidate};

const FORMAT_HEADER: &str = "ofa-example-router 1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouterHyperparams {
    pub feature_dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for RouterHyperparams {
    fn default() -> Self {
        Self {
            feature_dim: DEFAULT_FEATURE_DIM,
            learning_rate: 0.5,
            epochs: 30,
            batch_size: 16,
            l2: 1e-6,
            seed: 0,
        }
    }
}

impl RouterHyperparams {
    fn validate(&self) -> Result<(), RouterError> {
        let bad = |m: &str| Err(RouterError::InvalidHyperparams(m.to_string()));
        if self.feature_dim == 0 || self.feature_dim > u32::MAX as usize {
            return bad("feature_dim must be in 1..=u32::MAX");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0 && self.learning_rate * self.l2 < 1.0) {
            return bad("l2 must be non-negative with learning_rate * l2 < 1");
        }
        Ok(())
    }
}

/// Per-agent linear weights over hashed n-gram features.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleRouterModel {
    hyperparams: RouterHyperparams,
    agents: Vec<String>,
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Weight vector stored as `scale * raw`, so L2 decay is O(1) per step.
struct ScaledWeights {
    raw: Vec<f64>,
    scale: f64,
}

impl ScaledWeights {
    fn dot(&self, x: &SparseFeatures) -> f64 {
        self.scale * x.iter().map(|&(i, v)| self.raw[i as usize] * v).sum::<f64>()
    }

    fn decay(&mut self, factor: f64) {
        self.scale *= factor;
        if self.scale < 1e-9 {
            self.materialize_scale();
        }
    }

    fn add(&mut self, i: u32, delta: f64) {
        self.raw[i as usize] += delta / self.scale;
    }

    fn materialize_scale(&mut self) {
        let s = self.scale;
        if s != 1.0 {
            self.raw.iter_mut().for_each(|w| *w *= s);
            self.scale = 1.0;
        }
    }

    fn into_weights(mut self) -> Vec<f64> {
        self.materialize_scale();
        self.raw
    }
}

/// Trains the router by mini-batch gradient descent on per-agent binary
/// cross-entropy. The agent list is sorted, so the result does not depend on
/// the order agents are supplied in.
pub fn train_example_router<S: AsRef<str>>(
    examples: &[(S, BTreeSet<String>)],
    agents: &[String],
    hyperparams: RouterHyperparams,
) -> Result<ExampleRouterModel, RouterError> {
    hyperparams.validate()?;
    if examples.is_empty() {
        return Err(RouterError::EmptyTrainingSet);
    }
    let mut agent_ids = agents.to_vec();
    agent_ids.sort();
    if agent_ids.is_empty() {
        return Err(RouterError::NoAgents);
    }
    if let Some(w) = agent_ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(RouterError::DuplicateAgent(w[0].clone()));
    }
    let position: HashMap<&str, usize> = agent_ids
        .iter()
        .enumerate()
        .map(|(i, a)| (a.as_str(), i))
        .collect();

    let dim = hyperparams.feature_dim;
    let mut data: Vec<(SparseFeatures, Vec<bool>)> = Vec::with_capacity(examples.len());
    for (text, gold) in examples {
        let mut labels = vec![false; agent_ids.len()];
        for g in gold {
            let &i = position
                .get(g.as_str())
                .ok_or_else(|| RouterError::UnknownGoldAgent(g.clone()))?;
            labels[i] = true;
        }
        data.push((hashed_features(text.as_ref(), dim), labels));
    }

    let mut weights: Vec<ScaledWeights> = agent_ids
        .iter()
        .map(|_| ScaledWeights {
            raw: vec![0.0; dim],
            scale: 1.0,
        })
        .collect();
    let mut biases = vec![0.0; agent_ids.len()];
    let lr = hyperparams.learning_rate;
    let decay = 1.0 - lr * hyperparams.l2;
    let mut rng = ChaCha8Rng::seed_from_u64(hyperparams.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();

    if lr > 0.0 {
        for _ in 0..hyperparams.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(hyperparams.batch_size) {
                let step = lr / batch.len() as f64;
                for (a, w) in weights.iter_mut().enumerate() {
                    // Gradients are computed against the pre-step weights.
                    let residuals: Vec<f64> = batch
                        .iter()
                        .map(|&k| {
                            let (x, y) = &data[k];
                            let p = sigmoid(w.dot(x) + biases[a]);
                            p - if y[a] { 1.0 } else { 0.0 }
                        })
                        .collect();
                    w.decay(decay);
                    for (&k, r) in batch.iter().zip(&residuals) {
                        for &(i, v) in &data[k].0 {
                            w.add(i, -step * r * v);
                        }
                        biases[a] -= step * r;
                    }
                }
            }
        }
    }

    Ok(ExampleRouterModel {
        hyperparams,
        agents: agent_ids,
        weights: weights.into_iter().map(ScaledWeights::into_weights).collect(),
        biases,
    })
}

/// Ranks every agent by its logistic probability for `query_text`.
pub fn route_by_examples(model: &ExampleRouterModel, query_text: &str) -> Vec<RankedCandidate> {
    model.rank(query_text)
}

impl ExampleRouterModel {
    /// A model whose weights and biases are all zero.
    pub fn zeroed(agents: &[String], hyperparams: RouterHyperparams) -> Self {
        let mut agents = agents.to_vec();
        agents.sort();
        agents.dedup();
        Self {
            weights: vec![vec![0.0; hyperparams.feature_dim]; agents.len()],
            biases: vec![0.0; agents.len()],
            agents,
            hyperparams,
        }
    }

    pub fn agents(&self) -> &[String] {
        &self.agents
    }

    pub fn hyperparams(&self) -> RouterHyperparams {
        self.hyperparams
    }

    pub fn feature_dim(&self) -> usize {
        self.hyperparams.feature_dim
    }

    pub fn weights(&self, agent: &str) -> Option<(&[f64], f64)> {
        let i = self.agents.iter().position(|a| a == agent)?;
        Some((&self.weights[i], self.biases[i]))
    }

    pub fn probabilities(&self, query_text: &str) -> Vec<(String, f64)> {
        let x = hashed_features(query_text, self.hyperparams.feature_dim);
        self.agents
            .iter()
            .zip(self.weights.iter().zip(&self.biases))
            .map(|(agent, (w, b))| {
                let z: f64 = x.iter().map(|&(i, v)| w[i as usize] * v).sum::<f64>() + b;
                (agent.clone(), sigmoid(z))
            })
            .collect()
    }

    pub fn rank(&self, query_text: &str) -> Vec<RankedCandidate> {
        rank_candidates(self.probabilities(query_text))
    }

    /// Writes the text model format: a header, a hyperparameter line, then
    /// one line per agent holding its bias and nonzero weights. Reals use
    /// shortest round-trip formatting, so [`ExampleRouterModel::read_from`]
    /// restores the model bit-exactly.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), RouterError> {
        let h = &self.hyperparams;
        writeln!(out, "{FORMAT_HEADER}")?;
        writeln!(
            out,
            "hyperparams feature_dim={} learning_rate={:e} epochs={} batch_size={} l2={:e} seed={}",
            h.feature_dim, h.learning_rate, h.epochs, h.batch_size, h.l2, h.seed
        )?;
        writeln!(out, "agents {}", self.agents.len())?;
        for ((agent, w), b) in self.agents.iter().zip(&self.weights).zip(&self.biases) {
            let nonzero: Vec<(usize, f64)> = w
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i, *v))
                .collect();
            let mut line = format!("agent {agent} bias={b:e} nnz={}", nonzero.len());
            for (i, v) in nonzero {
                let _ = write!(line, " {i}:{v:e}");
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self, RouterError> {
        let mut lines = input.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String), RouterError> {
            match lines.next() {
                Some((i, Ok(l))) => Ok((i + 1, l)),
                Some((_, Err(e))) => Err(RouterError::Io(e)),
                None => Err(RouterError::Format {
                    line: 0,
                    message: format!("unexpected end of file, expected {what}"),
                }),
            }
        };
        let fail = |line: usize, message: String| RouterError::Format { line, message };

        let (n, header) = next("header")?;
        if header.trim() != FORMAT_HEADER {
            return Err(fail(n, format!("unsupported header {header:?}")));
        }

        let (n, hp) = next("hyperparams")?;
        let fields = keyed_fields(&hp, "hyperparams").ok_or_else(|| fail(n, "bad hyperparams line".into()))?;
        let get = |k: &str| -> Result<&str, RouterError> {
            fields
                .iter()
                .find(|(key, _)| *key == k)
                .map(|(_, v)| *v)
                .ok_or_else(|| fail(n, format!("missing {k}")))
        };
        let parse_err = |k: &str| fail(n, format!("invalid {k}"));
        let hyperparams = RouterHyperparams {
            feature_dim: get("feature_dim")?.parse().map_err(|_| parse_err("feature_dim"))?,
            learning_rate: get("learning_rate")?.parse().map_err(|_| parse_err("learning_rate"))?,
            epochs: get("epochs")?.parse().map_err(|_| parse_err("epochs"))?,
            batch_size: get("batch_size")?.parse().map_err(|_| parse_err("batch_size"))?,
            l2: get("l2")?.parse().map_err(|_| parse_err("l2"))?,
            seed: get("seed")?.parse().map_err(|_| parse_err("seed"))?,
        };
        hyperparams.validate().map_err(|e| fail(n, e.to_string()))?;

        let (n, count_line) = next("agent count")?;
        let count: usize = count_line
            .strip_prefix("agents ")
            .and_then(|c| c.trim().parse().ok())
            .ok_or_else(|| fail(n, "expected `agents <count>`".into()))?;

        let mut agents = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        let mut biases = Vec::with_capacity(count);
        for _ in 0..count {
            let (n, line) = next("agent line")?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some("agent") {
                return Err(fail(n, "expected `agent` record".into()));
            }
            let id = parts.next().ok_or_else(|| fail(n, "missing agent id".into()))?;
            let bias: f64 = parts
                .next()
                .and_then(|p| p.strip_prefix("bias="))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| fail(n, "missing bias".into()))?;
            let nnz: usize = parts
                .next()
                .and_then(|p| p.strip_prefix("nnz="))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| fail(n, "missing nnz".into()))?;
            let mut w = vec![0.0; hyperparams.feature_dim];
            let mut seen = 0;
            for entry in parts {
                let (i, v) = entry
                    .split_once(':')
                    .ok_or_else(|| fail(n, format!("bad weight entry {entry:?}")))?;
                let i: usize = i.parse().map_err(|_| fail(n, format!("bad index {i:?}")))?;
                let v: f64 = v.parse().map_err(|_| fail(n, format!("bad weight {v:?}")))?;
                *w.get_mut(i).ok_or_else(|| fail(n, format!("index {i} out of range")))? = v;
                seen += 1;
            }
            if seen != nnz {
                return Err(fail(n, format!("expected {nnz} weights, found {seen}")));
            }
            agents.push(id.to_string());
            weights.push(w);
            biases.push(bias);
        }
        Ok(Self {
            hyperparams,
            agents,
            weights,
            biases,
        })
    }
}

fn keyed_fields<'a>(line: &'a str, tag: &str) -> Option<Vec<(&'a str, &'a str)>> {
    let mut parts = line.split_whitespace();
    if parts.next()? != tag {
        return None;
    }
    parts.map(|p| p.split_once('=')).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn gold(v: &[&str]) -> BTreeSet<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn zero_model_ties_break_by_id() {
        let model = ExampleRouterModel::zeroed(&ids(&["b", "a", "c"]), RouterHyperparams::default());
        let ranked = route_by_examples(&model, "anything at all");
        assert!(ranked.iter().all(|r| r.score == 0.5));
        assert_eq!(ranked[0].agent_id, "a");
    }

    #[test]
    fn training_errors() {
        let empty: Vec<(String, BTreeSet<String>)> = vec![];
        assert!(matches!(
            train_example_router(&empty, &ids(&["a"]), RouterHyperparams::default()),
            Err(RouterError::EmptyTrainingSet)
        ));
        let ex = vec![("hello", gold(&["z"]))];
        assert!(matches!(
            train_example_router(&ex, &ids(&["a"]), RouterHyperparams::default()),
            Err(RouterError::UnknownGoldAgent(_))
        ));
    }

    #[test]
    fn single_agent_always_selected() {
        let ex = vec![("play a song", gold(&["solo"])), ("hello there", gold(&[]))];
        let model = train_example_router(&ex, &ids(&["solo"]), RouterHyperparams::default()).unwrap();
        for q in ["what time is it", "", "play a song"] {
            assert_eq!(route_by_examples(&model, q)[0].agent_id, "solo");
        }
    }

    #[test]
    fn empty_query_scores_are_bias_only() {
        let ex = vec![("weather rain", gold(&["w"])), ("bank balance", gold(&["b"]))];
        let model = train_example_router(&ex, &ids(&["w", "b"]), RouterHyperparams::default()).unwrap();
        let probs = model.probabilities("");
        for (agent, p) in probs {
            let (_, bias) = model.weights(&agent).unwrap();
            assert_eq!(p, sigmoid(bias));
        }
    }

    #[test]
    fn zero_learning_rate_leaves_weights_at_zero() {
        let ex = vec![("weather rain", gold(&["w"]))];
        let hp = RouterHyperparams {
            learning_rate: 0.0,
            ..Default::default()
        };
        let model = train_example_router(&ex, &ids(&["w", "b"]), hp).unwrap();
        assert_eq!(model, ExampleRouterModel::zeroed(&ids(&["w", "b"]), hp));
    }

    #[test]
    fn persisted_model_round_trips_exactly() {
        let ex = vec![
            ("weather rain forecast", gold(&["w"])),
            ("bank balance transfer", gold(&["b"])),
            ("rain on my bank", gold(&["w", "b"])),
        ];
        let hp = RouterHyperparams {
            feature_dim: 1 << 10,
            ..Default::default()
        };
        let model = train_example_router(&ex, &ids(&["w", "b"]), hp).unwrap();
        let mut buf = Vec::new();
        model.write_to(&mut buf).unwrap();
        let back = ExampleRouterModel::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn malformed_model_reports_line() {
        let text = "ofa-example-router 1\nhyperparams feature_dim=8 learning_rate=1e0 epochs=1 batch_size=1 l2=0e0 seed=0\nagents 1\nagent a bias=0e0 nnz=1 99:1e0\n";
        let err = ExampleRouterModel::read_from(text.as_bytes()).unwrap_err();
        assert!(matches!(err, RouterError::Format { line: 4, .. }), "{err}");
    }
}
