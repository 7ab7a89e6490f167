mod common;

use std::collections::HashMap;

use ofa_core::lexical::{tokenize, Bm25Index, Bm25Params};
use proptest::prelude::*;

use common::brute_force_bm25;

fn corpus() -> impl Strategy<Value = (Vec<Vec<String>>, Vec<String>)> {
    let token = prop::sample::select(vec!["a", "b", "c", "d", "e", "f"]).prop_map(str::to_string);
    (
        prop::collection::vec(prop::collection::vec(token.clone(), 0..=8), 1..=10),
        prop::collection::vec(token, 1..=5),
    )
}

fn build(docs: &[Vec<String>], params: Bm25Params) -> Bm25Index {
    Bm25Index::build(
        docs.iter().enumerate().map(|(i, d)| (format!("d{i}"), d.join(" "))),
        params,
    )
    .unwrap()
}

fn brute_tfidf_cosine(docs: &[Vec<String>], a: &[String], b: &[String]) -> f64 {
    let n = docs.len() as f64;
    let idf = |t: &String| {
        let df = docs.iter().filter(|d| d.contains(t)).count() as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    };
    let vector = |toks: &[String]| {
        let mut v: HashMap<String, f64> = HashMap::new();
        for t in toks {
            *v.entry(t.clone()).or_default() += idf(t);
        }
        v
    };
    let (va, vb) = (vector(a), vector(b));
    let dot: f64 = va.iter().map(|(t, x)| x * vb.get(t).copied().unwrap_or(0.0)).sum();
    let na = va.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb = vb.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(0.0, 1.0)
    }
}

proptest! {
    #[test]
    fn matches_closed_formula((docs, query) in corpus(), k1 in 0.0f64..3.0, b in 0.0f64..=1.0) {
        let index = build(&docs, Bm25Params { k1, b });
        for i in 0..docs.len() {
            let got = index.score(&query.join(" "), &format!("d{i}")).unwrap();
            let want = brute_force_bm25(&docs, &query, i, k1, b);
            prop_assert!((got - want).abs() <= 1e-9, "doc {i}: {got} vs {want}");
        }
    }

    #[test]
    fn zero_exactly_when_no_overlap((docs, query) in corpus()) {
        let index = build(&docs, Bm25Params::default());
        for (i, d) in docs.iter().enumerate() {
            let s = index.score(&query.join(" "), &format!("d{i}")).unwrap();
            let overlap = query.iter().any(|t| d.contains(t));
            prop_assert!(s >= 0.0);
            prop_assert_eq!(s > 0.0, overlap);
        }
    }

    #[test]
    fn invariant_under_document_order((docs, query) in corpus(), seed in any::<u64>()) {
        let index = build(&docs, Bm25Params::default());
        let mut order: Vec<usize> = (0..docs.len()).collect();
        let len = order.len();
        order.rotate_left((seed as usize) % len);
        let shuffled = Bm25Index::build(
            order.iter().map(|&i| (format!("d{i}"), docs[i].join(" "))),
            Bm25Params::default(),
        ).unwrap();
        for i in 0..docs.len() {
            let id = format!("d{i}");
            let q = query.join(" ");
            prop_assert_eq!(index.score(&q, &id).unwrap(), shuffled.score(&q, &id).unwrap());
        }
    }

    #[test]
    fn score_text_agrees_with_indexed_score((docs, query) in corpus()) {
        let index = build(&docs, Bm25Params::default());
        for (i, d) in docs.iter().enumerate() {
            let q = query.join(" ");
            prop_assert_eq!(index.score(&q, &format!("d{i}")).unwrap(), index.score_text(&q, &d.join(" ")));
        }
    }

    #[test]
    fn tfidf_cosine_matches_brute_force((docs, query) in corpus()) {
        let index = build(&docs, Bm25Params::default());
        for d in &docs {
            let got = index.tfidf_cosine(&query.join(" "), &d.join(" "));
            let back = index.tfidf_cosine(&d.join(" "), &query.join(" "));
            let want = brute_tfidf_cosine(&docs, &query, d);
            prop_assert!((got - want).abs() <= 1e-12);
            prop_assert_eq!(got, back);
            prop_assert!((0.0..=1.0).contains(&got));
        }
    }

    #[test]
    fn tokens_are_lowercase_alphanumeric(text in ".{0,40}") {
        for t in tokenize(&text) {
            prop_assert!(!t.is_empty());
            prop_assert!(t.chars().all(char::is_alphanumeric));
            prop_assert_eq!(t.to_lowercase(), t.clone());
        }
    }
}

#[test]
fn rarer_terms_weigh_more() {
    let index = Bm25Index::build(
        [("d1", "weather today"), ("d2", "weather tomorrow"), ("d3", "stock news")],
        Bm25Params::default(),
    )
    .unwrap();
    assert!(index.idf("today") > index.idf("weather"));
    assert!(index.score("today", "d1").unwrap() > index.score("weather", "d1").unwrap());
}

#[test]
fn explain_sums_to_score() {
    let index = Bm25Index::build(
        [("d1", "weather today in boston"), ("d2", "weather weather tomorrow")],
        Bm25Params::default(),
    )
    .unwrap();
    let q = "weather in boston weather";
    for doc in ["d1", "d2"] {
        let sum: f64 = index
            .explain(q)
            .iter()
            .filter(|c| c.doc_id == doc)
            .map(|c| c.contribution)
            .sum();
        assert!((sum - index.score(q, doc).unwrap()).abs() < 1e-12);
    }
}
