//! Evaluation statistics over collected annotations.

mod report;
pub mod special;
pub mod stats;

use thiserror::Error;

use crate::tasks::Violation;

pub use report::{
    build_report, familiarity_stats, inclusion_validity_stats, normalize, pct1, preference_stats,
    AnalysisReport, AuditMatrices, CanonicalJudgment, CanonicalStep, Condition, ConditionStats,
    CorrelationEntry, Distribution, FamiliarityStats, InclusionStats, KappaEntry, PreferenceStats,
    StepOwner, TimingStats,
};
pub use stats::{
    fleiss_kappa, fleiss_kappa_with, majority_vote, mean, median, pearson, sample_stddev,
    AgreementResult, CorrelationResult,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("majority vote needs an odd number of votes, got {0}")]
    EvenVotes(usize),
    #[error("agreement needs at least 2 items, got {0}")]
    TooFewItems(usize),
    #[error("agreement needs at least 2 raters, got {0}")]
    TooFewRaters(usize),
    #[error("rating row {row} has a different number of categories")]
    RaggedMatrix { row: usize },
    #[error("rating row {row} sums to {got}, expected {expected}")]
    RowSum { row: usize, expected: usize, got: usize },
    #[error("expected agreement is 1; kappa is undefined")]
    DegenerateAgreement,
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("correlation needs n >= 3, got {0}")]
    SampleSize(usize),
    #[error("correlation is undefined for a constant series")]
    ConstantSeries,
    #[error("no {0} to analyze")]
    Empty(&'static str),
    #[error("response references unknown task {0:?}")]
    OrphanResponse(String),
    #[error("response from {worker_id:?} for task {task_id:?} is invalid: {}", join(.violations))]
    InvalidResponse {
        task_id: String,
        worker_id: String,
        violations: Vec<Violation>,
    },
    #[error("task {task_id:?}: {source}")]
    Task {
        task_id: String,
        #[source]
        source: Box<AnalyticsError>,
    },
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
