//! Fixtures shared by the acceptance suite and the CLI tests.
//!
//! The evaluation fixture is built to match the published counts of the
//! original study: 8 tasks, 3 annotators each, 12 workers with 2 tasks
//! apiece.

pub mod corpus;
pub mod evaluation;

pub use corpus::{mini_apple_pies, mini_apple_pies_revision, synthetic_corpus};
pub use evaluation::{evaluation_fixture, EvaluationFixture};
