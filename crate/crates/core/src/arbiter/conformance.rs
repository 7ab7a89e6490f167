//! Wire-level conformance checks any scorer service must pass: reply
//! length, candidate order, finiteness and the empty-candidate case.

use serde::Serialize;

use super::{remote_score, Candidate};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConformanceCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: impl Into<String>) -> ConformanceCheck {
    ConformanceCheck {
        name,
        passed,
        detail: detail.into(),
    }
}

fn fixture() -> (String, Vec<Candidate>) {
    (
        "what time is it in tokyo".to_string(),
        vec![
            Candidate::new("alpha", "It is 3 pm in Tokyo right now."),
            Candidate::new("bravo", "Didn't get that!"),
            Candidate::new("charlie", "Here is something I found on the web about time zones."),
        ],
    )
}

/// Runs every check against `endpoint`. A scorer is conformant when all
/// returned checks pass.
pub async fn run_conformance(endpoint: &str, timeout_ms: u64) -> Vec<ConformanceCheck> {
    let mut out = Vec::new();

    match remote_score(endpoint, "anything", &[], timeout_ms).await {
        Ok(s) => out.push(check("empty-candidates", s.is_empty(), format!("{} scores", s.len()))),
        Err(e) => out.push(check("empty-candidates", false, e.to_string())),
    }

    let (query, candidates) = fixture();
    let forward = match remote_score(endpoint, &query, &candidates, timeout_ms).await {
        Ok(s) => {
            out.push(check(
                "length",
                s.len() == candidates.len(),
                format!("{} scores for {} candidates", s.len(), candidates.len()),
            ));
            out.push(check("finite", s.iter().all(|x| x.is_finite()), format!("{s:?}")));
            Some(s)
        }
        Err(e) => {
            out.push(check("length", false, e.to_string()));
            out.push(check("finite", false, "no reply"));
            None
        }
    };

    // Scores must follow their candidates when the order is reversed.
    let reversed: Vec<Candidate> = candidates.iter().rev().cloned().collect();
    match (forward, remote_score(endpoint, &query, &reversed, timeout_ms).await) {
        (Some(f), Ok(mut r)) => {
            r.reverse();
            let same = f.iter().zip(&r).all(|(a, b)| (a - b).abs() <= 1e-9 * a.abs().max(1.0));
            out.push(check("order", same, format!("forward {f:?} reversed-back {r:?}")));
        }
        (_, Err(e)) => out.push(check("order", false, e.to_string())),
        (None, Ok(_)) => out.push(check("order", false, "forward request failed")),
    }
    out
}
