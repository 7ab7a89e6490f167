//! A single gateway in front of many black-box conversational agents.
//!
//! A query is either routed to one agent before dispatch (question-agent
//! pairing, [`router`]) or sent to every agent, with the best response picked
//! afterwards (question-response pairing, [`arbiter`]). The [`gateway`] runs
//! both over a live registry, [`fleet`] replays recorded agent answers, and
//! [`eval`] measures precision@1 against crowd-voted gold agents.

pub mod arbiter;
pub mod cli;
pub mod eval;
pub mod fleet;
pub mod gateway;
pub mod lexical;
pub mod model;
pub mod router;
