use serde::{Deserialize, Serialize};

use super::split_description;
use crate::lexical::{Bm25Index, Bm25Params, IndexError};
use crate::model::{rank_candidates, AgentProfile, RankedCandidate};

/// How a description is turned into comparable units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DescriptionMode {
    /// Score each sentence and keep the maximum.
    #[default]
    Sentences,
    /// Score the description as a single unit.
    Whole,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillSentences {
    pub agent_id: String,
    pub sentences: Vec<String>,
}

impl SkillSentences {
    pub fn from_profile(profile: &AgentProfile, mode: DescriptionMode) -> Self {
        let sentences = match mode {
            DescriptionMode::Sentences => profile.skill_sentences.clone(),
            DescriptionMode::Whole => {
                let d = profile.description.trim();
                if d.is_empty() {
                    Vec::new()
                } else {
                    vec![d.to_string()]
                }
            }
        };
        Self {
            agent_id: profile.id.clone(),
            sentences,
        }
    }

    pub fn from_description(agent_id: impl Into<String>, description: &str) -> Self {
        Self {
            agent_id: agent_id.into(),
            sentences: split_description(description),
        }
    }
}

/// Similarity between a query and one unit of description text.
pub trait SimilarityScorer {
    fn similarity(&self, query: &str, text: &str) -> f64;
}

impl<F> SimilarityScorer for F
where
    F: Fn(&str, &str) -> f64,
{
    fn similarity(&self, query: &str, text: &str) -> f64 {
        self(query, text)
    }
}

fn sentence_corpus(skills: &[SkillSentences]) -> Vec<(String, &str)> {
    skills
        .iter()
        .flat_map(|s| {
            s.sentences
                .iter()
                .enumerate()
                .map(move |(i, text)| (format!("{}#{i}", s.agent_id), text.as_str()))
        })
        .collect()
}

/// BM25 with corpus statistics taken from every agent's sentences.
#[derive(Debug, Clone)]
pub struct Bm25Similarity {
    index: Bm25Index,
}

impl Bm25Similarity {
    pub fn over_sentences(skills: &[SkillSentences], params: Bm25Params) -> Result<Self, IndexError> {
        Ok(Self {
            index: Bm25Index::build(sentence_corpus(skills), params)?,
        })
    }

    pub fn index(&self) -> &Bm25Index {
        &self.index
    }
}

impl SimilarityScorer for Bm25Similarity {
    fn similarity(&self, query: &str, text: &str) -> f64 {
        self.index.score_text(query, text)
    }
}

/// tf-idf cosine with idf taken from every agent's sentences.
#[derive(Debug, Clone)]
pub struct TfidfSimilarity {
    index: Bm25Index,
}

impl TfidfSimilarity {
    pub fn over_sentences(skills: &[SkillSentences]) -> Result<Self, IndexError> {
        Ok(Self {
            index: Bm25Index::build(sentence_corpus(skills), Bm25Params::default())?,
        })
    }
}

impl SimilarityScorer for TfidfSimilarity {
    fn similarity(&self, query: &str, text: &str) -> f64 {
        self.index.tfidf_cosine(query, text)
    }
}

/// Scores each agent by its best-matching sentence. Agents without
/// sentences score 0.
pub fn route_by_description(
    query_text: &str,
    skills: &[SkillSentences],
    scorer: &dyn SimilarityScorer,
) -> Vec<RankedCandidate> {
    let scores: Vec<Vec<f64>> = skills
        .iter()
        .map(|s| s.sentences.iter().map(|t| scorer.similarity(query_text, t)).collect())
        .collect();
    rank_by_sentence_scores(skills, &scores)
}

/// Max-combines precomputed per-sentence scores; `scores[i][j]` belongs to
/// sentence `j` of `skills[i]`.
pub fn rank_by_sentence_scores(skills: &[SkillSentences], scores: &[Vec<f64>]) -> Vec<RankedCandidate> {
    rank_candidates(skills.iter().zip(scores).map(|(s, per_sentence)| {
        let best = per_sentence.iter().copied().reduce(f64::max).unwrap_or(0.0);
        (s.agent_id.clone(), best)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn agent_score_is_max_of_sentence_scores() {
        let skills = vec![
            SkillSentences::from_description("weather", "Get weather forecasts. Set alarms."),
            SkillSentences::from_description("music", "Play songs. Will it rain music?"),
        ];
        let bm25 = Bm25Similarity::over_sentences(&skills, Bm25Params::default()).unwrap();
        let q = "will it rain tomorrow";
        let ranked = route_by_description(q, &skills, &bm25);
        for s in &skills {
            let expected = s
                .sentences
                .iter()
                .map(|t| bm25.index().score_text(q, t))
                .fold(f64::NEG_INFINITY, f64::max);
            let got = ranked.iter().find(|r| r.agent_id == s.agent_id).unwrap().score;
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn disjoint_vocabulary_ties_to_smallest_id() {
        let skills = vec![
            SkillSentences::from_description("zeta", "Book hotels."),
            SkillSentences::from_description("alpha", "Tell jokes."),
        ];
        let bm25 = Bm25Similarity::over_sentences(&skills, Bm25Params::default()).unwrap();
        let ranked = route_by_description("quantum chromodynamics", &skills, &bm25);
        assert!(ranked.iter().all(|r| r.score == 0.0));
        assert_eq!(ranked[0].agent_id, "alpha");
    }

    #[test]
    fn singleton_equals_raw_scorer() {
        let skills = vec![SkillSentences::from_description("a", "Track flights today.")];
        let scorer = |q: &str, t: &str| (q.len() * 10 + t.len()) as f64;
        let ranked = route_by_description("flight", &skills, &scorer);
        assert_eq!(ranked[0].score, scorer("flight", "Track flights today."));
    }

    #[test]
    fn empty_description_scores_zero() {
        let skills = vec![
            SkillSentences::from_description("empty", ""),
            SkillSentences::from_description("neg", "Anything."),
        ];
        let ranked = route_by_description("x", &skills, &|_: &str, _: &str| -1.0);
        assert_eq!(ranked[0].agent_id, "empty");
        assert_eq!(ranked[0].score, 0.0);
    }

    #[test]
    fn whole_mode_uses_one_unit() {
        let p = AgentProfile::new("a", "A", "One. Two.", None).unwrap();
        assert_eq!(SkillSentences::from_profile(&p, DescriptionMode::Whole).sentences, vec!["One. Two."]);
        assert_eq!(SkillSentences::from_profile(&p, DescriptionMode::Sentences).sentences.len(), 2);
    }
}
