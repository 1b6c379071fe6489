//! Majority vote, Fleiss' kappa, Pearson correlation and descriptive stats.

use serde::{Deserialize, Serialize};

use super::special::student_t_two_sided;
use super::AnalyticsError;
use crate::par::Exec;

/// Value held by more than half of the votes. Tie-prone (even) vote counts
/// are refused.
pub fn majority_vote(votes: &[bool]) -> Result<bool, AnalyticsError> {
    if votes.len() % 2 == 0 {
        return Err(AnalyticsError::EvenVotes(votes.len()));
    }
    let yes = votes.iter().filter(|&&v| v).count();
    Ok(yes * 2 > votes.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementResult {
    pub kappa: f64,
    pub n_items: usize,
    pub n_raters: usize,
    pub n_categories: usize,
    pub observed_agreement: f64,
    pub expected_agreement: f64,
}

pub fn fleiss_kappa(ratings: &[Vec<usize>], n_raters: usize) -> Result<AgreementResult, AnalyticsError> {
    fleiss_kappa_with(ratings, n_raters, Exec::default())
}

/// Fleiss' kappa over an item x category count matrix in which every row
/// sums to `n_raters`.
pub fn fleiss_kappa_with(
    ratings: &[Vec<usize>],
    n_raters: usize,
    exec: Exec,
) -> Result<AgreementResult, AnalyticsError> {
    if ratings.len() < 2 {
        return Err(AnalyticsError::TooFewItems(ratings.len()));
    }
    if n_raters < 2 {
        return Err(AnalyticsError::TooFewRaters(n_raters));
    }
    let n_categories = ratings[0].len();
    for (row, counts) in ratings.iter().enumerate() {
        if counts.len() != n_categories {
            return Err(AnalyticsError::RaggedMatrix { row });
        }
        let sum: usize = counts.iter().sum();
        if sum != n_raters {
            return Err(AnalyticsError::RowSum {
                row,
                expected: n_raters,
                got: sum,
            });
        }
    }

    let items = ratings.len();
    let total = (items * n_raters) as f64;
    let mut column_totals = vec![0usize; n_categories];
    for counts in ratings {
        for (j, &c) in counts.iter().enumerate() {
            column_totals[j] += c;
        }
    }
    // Expected agreement is 1 exactly when one category holds every rating.
    if column_totals.iter().any(|&c| c == items * n_raters) {
        return Err(AnalyticsError::DegenerateAgreement);
    }

    let n = n_raters as f64;
    let per_item = exec.sum(ratings, |counts| {
        let squares: f64 = counts.iter().map(|&c| (c * c) as f64).sum();
        (squares - n) / (n * (n - 1.0))
    });
    let observed = per_item / items as f64;
    let expected: f64 = column_totals
        .iter()
        .map(|&c| {
            let p = c as f64 / total;
            p * p
        })
        .sum();
    Ok(AgreementResult {
        kappa: (observed - expected) / (1.0 - expected),
        n_items: items,
        n_raters,
        n_categories,
        observed_agreement: observed,
        expected_agreement: expected,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Pearson's r with a two-sided p-value from the t distribution on n-2
/// degrees of freedom.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult, AnalyticsError> {
    if x.len() != y.len() {
        return Err(AnalyticsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(AnalyticsError::SampleSize(n));
    }
    let mean_x = x.iter().sum::<f64>() / n as f64;
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(AnalyticsError::ConstantSeries);
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p_value = if r.abs() == 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        student_t_two_sided(t, df)
    };
    Ok(CorrelationResult { r, p_value, n })
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Median; even counts average the middle pair.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 0 {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    })
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_stddev(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values)?;
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Some((ss / (values.len() - 1) as f64).sqrt())
}
