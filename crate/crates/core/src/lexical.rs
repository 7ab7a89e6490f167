//! Tokenization, Okapi BM25 and tf-idf cosine similarity.
//!
//! BM25 uses the smoothed idf `ln(1 + (N - df + 0.5) / (df + 0.5))`, which is
//! strictly positive for every `df <= N`, so a document scores zero exactly
//! when it shares no token with the query.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IndexError {
    #[error("duplicate document id {0:?}")]
    DuplicateDoc(String),
    #[error("unknown document id {0:?}")]
    UnknownDoc(String),
    #[error("invalid BM25 parameters k1={k1} b={b}")]
    InvalidParams { k1: f64, b: f64 },
}

/// Lowercases and splits on every maximal run of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(self) -> Result<Self, IndexError> {
        if self.k1 >= 0.0 && (0.0..=1.0).contains(&self.b) {
            Ok(self)
        } else {
            Err(IndexError::InvalidParams { k1: self.k1, b: self.b })
        }
    }
}

#[derive(Debug, Clone)]
struct Document {
    id: String,
    tokens: Vec<String>,
    term_counts: HashMap<String, u32>,
}

fn term_counts(tokens: &[String]) -> HashMap<String, u32> {
    let mut counts = HashMap::new();
    for t in tokens {
        *counts.entry(t.clone()).or_insert(0) += 1;
    }
    counts
}

/// Immutable BM25 index over a small document collection.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    documents: Vec<Document>,
    positions: HashMap<String, usize>,
    doc_frequencies: BTreeMap<String, usize>,
    avg_doc_len: f64,
    params: Bm25Params,
}

/// Per-term corpus statistics, as printed by the `score-debug` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermStat {
    pub term: String,
    pub df: usize,
    pub idf: f64,
}

/// One query term's contribution to one document's score.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermContribution {
    pub doc_id: String,
    pub term: String,
    pub tf: u32,
    pub idf: f64,
    pub contribution: f64,
}

impl Bm25Index {
    pub fn build<I, S, T>(docs: I, params: Bm25Params) -> Result<Self, IndexError>
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: AsRef<str>,
    {
        let params = params.validate()?;
        let mut documents = Vec::new();
        let mut positions = HashMap::new();
        let mut doc_frequencies = BTreeMap::new();
        let mut total_len = 0usize;
        for (id, text) in docs {
            let id = id.into();
            if positions.contains_key(&id) {
                return Err(IndexError::DuplicateDoc(id));
            }
            let tokens = tokenize(text.as_ref());
            let counts = term_counts(&tokens);
            for term in counts.keys() {
                *doc_frequencies.entry(term.clone()).or_insert(0) += 1;
            }
            total_len += tokens.len();
            positions.insert(id.clone(), documents.len());
            documents.push(Document {
                id,
                tokens,
                term_counts: counts,
            });
        }
        let avg_doc_len = if documents.is_empty() {
            0.0
        } else {
            total_len as f64 / documents.len() as f64
        };
        Ok(Self {
            documents,
            positions,
            doc_frequencies,
            avg_doc_len,
            params,
        })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_frequency(&self, term: &str) -> usize {
        self.doc_frequencies.get(term).copied().unwrap_or(0)
    }

    pub fn doc_frequencies(&self) -> &BTreeMap<String, usize> {
        &self.doc_frequencies
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.documents.iter().map(|d| d.id.as_str())
    }

    pub fn doc_tokens(&self, doc_id: &str) -> Option<&[String]> {
        self.positions
            .get(doc_id)
            .map(|&i| self.documents[i].tokens.as_slice())
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.documents.len() as f64;
        let df = self.doc_frequency(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// BM25 score of an indexed document. Query tokens are summed with
    /// multiplicity, so a repeated query term counts once per occurrence.
    pub fn score(&self, query: &str, doc_id: &str) -> Result<f64, IndexError> {
        let &pos = self
            .positions
            .get(doc_id)
            .ok_or_else(|| IndexError::UnknownDoc(doc_id.to_string()))?;
        let doc = &self.documents[pos];
        Ok(self.score_counts(&tokenize(query), &doc.term_counts, doc.tokens.len()))
    }

    /// Scores an arbitrary text as if it were a document of this corpus,
    /// using the corpus statistics. Equal to [`Bm25Index::score`] for texts
    /// that are in the index.
    pub fn score_text(&self, query: &str, text: &str) -> f64 {
        let tokens = tokenize(text);
        self.score_counts(&tokenize(query), &term_counts(&tokens), tokens.len())
    }

    /// Scores every document in index order.
    pub fn score_all(&self, query: &str) -> Vec<(String, f64)> {
        let q = tokenize(query);
        self.documents
            .iter()
            .map(|d| (d.id.clone(), self.score_counts(&q, &d.term_counts, d.tokens.len())))
            .collect()
    }

    fn term_weight(&self, tf: u32, doc_len: usize) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = f64::from(tf);
        let norm = if self.avg_doc_len > 0.0 {
            1.0 - b + b * doc_len as f64 / self.avg_doc_len
        } else {
            1.0 - b
        };
        tf * (k1 + 1.0) / (tf + k1 * norm)
    }

    fn score_counts(&self, query: &[String], counts: &HashMap<String, u32>, doc_len: usize) -> f64 {
        query
            .iter()
            .filter_map(|t| counts.get(t).map(|&tf| (t, tf)))
            .map(|(t, tf)| self.idf(t) * self.term_weight(tf, doc_len))
            .fold(0.0, |acc, x| acc + x)
    }

    /// Per-document, per-term breakdown of a query's scores. Documents with
    /// no overlap are omitted.
    pub fn explain(&self, query: &str) -> Vec<TermContribution> {
        let q = tokenize(query);
        let mut out = Vec::new();
        for doc in &self.documents {
            for term in &q {
                if let Some(&tf) = doc.term_counts.get(term) {
                    let idf = self.idf(term);
                    out.push(TermContribution {
                        doc_id: doc.id.clone(),
                        term: term.clone(),
                        tf,
                        idf,
                        contribution: idf * self.term_weight(tf, doc.tokens.len()),
                    });
                }
            }
        }
        out
    }

    pub fn term_stats(&self) -> Vec<TermStat> {
        self.doc_frequencies
            .iter()
            .map(|(term, &df)| TermStat {
                term: term.clone(),
                df,
                idf: self.idf(term),
            })
            .collect()
    }

    fn tfidf_vector(&self, text: &str) -> BTreeMap<String, f64> {
        term_counts(&tokenize(text))
            .into_iter()
            .map(|(t, c)| {
                let w = f64::from(c) * self.idf(&t);
                (t, w)
            })
            .collect()
    }

    /// Cosine between raw-count tf·idf vectors of two texts, with idf taken
    /// from this index. Zero when either vector is zero.
    pub fn tfidf_cosine(&self, a: &str, b: &str) -> f64 {
        let va = self.tfidf_vector(a);
        let vb = self.tfidf_vector(b);
        let norm = |v: &BTreeMap<String, f64>| v.values().map(|x| x * x).sum::<f64>().sqrt();
        let (na, nb) = (norm(&va), norm(&vb));
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        // Summing in term order keeps the result bit-identical when a and b swap.
        let dot: f64 = va
            .iter()
            .filter_map(|(t, x)| vb.get(t).map(|y| x * y))
            .fold(0.0, |acc, p| acc + p);
        (dot / (na * nb)).clamp(0.0, 1.0)
    }
}
