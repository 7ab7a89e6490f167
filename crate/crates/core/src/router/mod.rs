//! Question-agent pairing: choose one agent before dispatching a query.
//!
//! Two skill representations are supported. A router trained on example
//! queries ([`ExampleRouterModel`]) treats the choice as multi-label
//! classification over agents; description routing scores the query against
//! each sentence of an agent's public description and keeps the best match.

mod description;
mod examples;
mod features;
mod sentences;

pub use description::{
    rank_by_sentence_scores, route_by_description, Bm25Similarity, DescriptionMode,
    SimilarityScorer, SkillSentences, TfidfSimilarity,
};
pub use examples::{route_by_examples, train_example_router, ExampleRouterModel, RouterHyperparams};
pub use features::{hashed_features, SparseFeatures, DEFAULT_FEATURE_DIM};
pub(crate) use features::fnv1a;
pub use sentences::split_description;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RouterError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("no agents to route between")]
    NoAgents,
    #[error("gold agent {0:?} is not in the agent list")]
    UnknownGoldAgent(String),
    #[error("duplicate agent {0:?} in agent list")]
    DuplicateAgent(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("model file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
