use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{FanoutConfig, GatewayError, DEFAULT_AGENT_TIMEOUT_MS};
use crate::arbiter::{ScorerHandle, DEFAULT_SCORER_TIMEOUT_MS};
use crate::fleet::{LatencySpec, DEFAULT_FALLBACK_TEXT};
use crate::model::{FallbackPhrases, DEFAULT_VOTE_THRESHOLD};
use crate::router::DescriptionMode;

/// Gateway configuration, read from TOML.
///
/// ```toml
/// bind = "127.0.0.1:8080"
/// agents_path = "agents.jsonl"
/// dataset_path = "dataset.jsonl"
/// default_scorer = "bm25"
/// per_agent_timeout_ms = 2000
/// fallback_phrases = ["Didn't get that!", "Out of scope!"]
///
/// [scorer_endpoints]
/// mars = "http://127.0.0.1:9000/score"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub bind: String,
    /// Agent profiles. Profiles without an endpoint are served by replaying
    /// `dataset_path`.
    pub agents_path: Option<PathBuf>,
    pub dataset_path: Option<PathBuf>,
    pub router_model_path: Option<PathBuf>,
    pub vote_threshold: u8,
    /// `bm25`, `tfidf`, `remote:<url>` or a key of `scorer_endpoints`.
    pub default_scorer: String,
    /// Named remote scorers, selectable per request by name.
    pub scorer_endpoints: BTreeMap<String, String>,
    pub scorer_timeout_ms: u64,
    pub per_agent_timeout_ms: u64,
    pub max_parallelism: Option<usize>,
    pub fallback_phrases: Vec<String>,
    pub fallback_text: String,
    pub filter_fallbacks: bool,
    pub description_mode: DescriptionMode,
    pub replay_latency: LatencySpec,
    pub seed: u64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".to_string(),
            agents_path: None,
            dataset_path: None,
            router_model_path: None,
            vote_threshold: DEFAULT_VOTE_THRESHOLD,
            default_scorer: "bm25".to_string(),
            scorer_endpoints: BTreeMap::new(),
            scorer_timeout_ms: DEFAULT_SCORER_TIMEOUT_MS,
            per_agent_timeout_ms: DEFAULT_AGENT_TIMEOUT_MS,
            max_parallelism: None,
            fallback_phrases: FallbackPhrases::default().0,
            fallback_text: DEFAULT_FALLBACK_TEXT.to_string(),
            filter_fallbacks: false,
            description_mode: DescriptionMode::Sentences,
            replay_latency: LatencySpec::Fixed(0),
            seed: 0,
        }
    }
}

impl GatewayConfig {
    pub fn from_toml(raw: &str) -> Result<Self, GatewayError> {
        let config: Self = toml::from_str(raw).map_err(|e| GatewayError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&raw)?;
        if let Some(dir) = path.parent() {
            for p in [
                &mut config.agents_path,
                &mut config.dataset_path,
                &mut config.router_model_path,
            ]
            .into_iter()
            .flatten()
            {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.per_agent_timeout_ms == 0 {
            return Err(GatewayError::Config("per_agent_timeout_ms must be positive".into()));
        }
        if self.max_parallelism == Some(0) {
            return Err(GatewayError::Config("max_parallelism must be positive".into()));
        }
        self.resolve_scorer(&self.default_scorer)?;
        Ok(())
    }

    pub fn fanout(&self) -> FanoutConfig {
        FanoutConfig {
            per_agent_timeout_ms: self.per_agent_timeout_ms,
            max_parallelism: self.max_parallelism,
        }
    }

    pub fn phrases(&self) -> FallbackPhrases {
        FallbackPhrases(self.fallback_phrases.clone())
    }

    /// Resolves a scorer name: a configured alias first, then the generic
    /// `bm25` / `tfidf` / `remote:<url>` forms.
    pub fn resolve_scorer(&self, name: &str) -> Result<ScorerHandle, GatewayError> {
        let mut handle = match self.scorer_endpoints.get(name) {
            Some(url) => ScorerHandle::remote(url.clone(), self.scorer_timeout_ms),
            None => name.parse::<ScorerHandle>().map_err(GatewayError::UnknownScorer)?,
        };
        handle.timeout_ms = self.scorer_timeout_ms;
        Ok(handle)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_and_full_configs() {
        let c = GatewayConfig::from_toml("").unwrap();
        assert_eq!(c, GatewayConfig::default());

        let c = GatewayConfig::from_toml(
            r#"
            bind = "0.0.0.0:9999"
            per_agent_timeout_ms = 500
            default_scorer = "mars"
            replay_latency = { uniform = { min_ms = 5, max_ms = 10, seed = 1 } }
            [scorer_endpoints]
            mars = "http://127.0.0.1:7000/score"
            "#,
        )
        .unwrap();
        assert_eq!(c.fanout().per_agent_timeout_ms, 500);
        let h = c.resolve_scorer("mars").unwrap();
        assert_eq!(h.remote_endpoint.as_deref(), Some("http://127.0.0.1:7000/score"));
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(GatewayConfig::from_toml("per_agent_timeout_ms = 0").is_err());
        assert!(GatewayConfig::from_toml("default_scorer = \"nope\"").is_err());
        assert!(GatewayConfig::from_toml("unknown_key = 1").is_err());
    }
}
