//! Recipe revision with grounded prompts, A/B annotation tasks, and the
//! statistics used to evaluate the revisions.
//!
//! Modules follow the pipeline order: [`corpus`] loads and samples recipes,
//! [`prompt`] builds prompts, [`gateway`] runs completions and parses them,
//! [`tasks`] turns (original, revision) pairs into annotation tasks, and
//! [`analytics`] summarizes the collected responses.

pub mod analytics;
pub mod corpus;
mod digest;
pub mod gateway;
pub mod jsonl;
pub mod par;
pub mod prompt;
pub mod tasks;

pub use digest::sha256_hex;
