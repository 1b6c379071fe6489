use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use super::stats::{fleiss_kappa, majority_vote, mean, median, pearson, sample_stddev};
use super::{AgreementResult, AnalyticsError, CorrelationResult};
use crate::tasks::{validate_response, AnnotationTask, InvalidReason, Preference, TaskResponse};

/// Which underlying recipe sits in the static Recipe A slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Condition {
    #[serde(rename = "A_is_original")]
    AIsOriginal,
    #[serde(rename = "A_is_generation")]
    AIsGeneration,
}

impl Condition {
    pub fn from_flip(a_is_generation: bool) -> Self {
        if a_is_generation {
            Condition::AIsGeneration
        } else {
            Condition::AIsOriginal
        }
    }

    /// Owner of the step-at-a-time (Recipe B) side.
    pub fn step_owner(self) -> StepOwner {
        match self {
            Condition::AIsOriginal => StepOwner::Generation,
            Condition::AIsGeneration => StepOwner::Original,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::AIsOriginal => "A_is_original",
            Condition::AIsGeneration => "A_is_generation",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepOwner {
    Original,
    Generation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalStep {
    pub owner: StepOwner,
    pub included: bool,
    pub valid: Option<bool>,
    pub reasons: Option<Vec<InvalidReason>>,
}

/// One response with the A/B labels resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalJudgment {
    pub recipe_id: String,
    pub task_id: String,
    pub worker_id: String,
    pub condition: Condition,
    pub steps: Vec<CanonicalStep>,
    /// Static-side step indices reported missing from the other side.
    pub missing_steps: Vec<usize>,
    pub static_step_count: usize,
    /// original = -1, neither = 0, generation = +1.
    pub preference_code: i8,
    pub familiarity: u8,
    pub recipe_a_len: usize,
    pub recipe_b_len: usize,
    pub duration_minutes: f64,
}

impl CanonicalJudgment {
    pub fn missing_count(&self) -> usize {
        self.missing_steps.len()
    }
}

fn preference_code(preference: Preference, a_is_generation: bool) -> i8 {
    match (preference, a_is_generation) {
        (Preference::Neither, _) => 0,
        (Preference::A, true) | (Preference::B, false) => 1,
        (Preference::A, false) | (Preference::B, true) => -1,
    }
}

pub fn normalize(
    tasks: &[AnnotationTask],
    responses: &[TaskResponse],
) -> Result<Vec<CanonicalJudgment>, AnalyticsError> {
    let by_id: HashMap<&str, &AnnotationTask> = tasks.iter().map(|t| (t.task_id.as_str(), t)).collect();
    responses
        .iter()
        .map(|response| {
            let task = by_id
                .get(response.task_id.as_str())
                .ok_or_else(|| AnalyticsError::OrphanResponse(response.task_id.clone()))?;
            validate_response(task, response).map_err(|violations| AnalyticsError::InvalidResponse {
                task_id: response.task_id.clone(),
                worker_id: response.worker_id.clone(),
                violations,
            })?;
            let condition = Condition::from_flip(task.a_is_generation);
            let owner = condition.step_owner();
            Ok(CanonicalJudgment {
                recipe_id: task.recipe_id.clone(),
                task_id: task.task_id.clone(),
                worker_id: response.worker_id.clone(),
                condition,
                steps: response
                    .step_judgments
                    .iter()
                    .map(|j| CanonicalStep {
                        owner,
                        included: j.included,
                        valid: j.valid,
                        reasons: j.invalid_reasons.clone(),
                    })
                    .collect(),
                missing_steps: response.final_answers.missing_steps.clone(),
                static_step_count: task.recipe_a_steps.len(),
                preference_code: preference_code(response.final_answers.preference, task.a_is_generation),
                familiarity: response.final_answers.familiarity,
                recipe_a_len: task.recipe_a_steps.len(),
                recipe_b_len: task.recipe_b_steps.len(),
                duration_minutes: response.duration_minutes(),
            })
        })
        .collect()
}

/// Counts of preference codes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Distribution {
    pub n: usize,
    pub generation: usize,
    pub original: usize,
    pub neither: usize,
}

impl Distribution {
    fn add(&mut self, code: i8) {
        self.n += 1;
        match code {
            1 => self.generation += 1,
            -1 => self.original += 1,
            _ => self.neither += 1,
        }
    }

    pub fn share(&self, code: i8) -> f64 {
        let count = match code {
            1 => self.generation,
            -1 => self.original,
            _ => self.neither,
        };
        if self.n == 0 {
            0.0
        } else {
            count as f64 / self.n as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceStats {
    pub overall: Distribution,
    pub by_condition: BTreeMap<Condition, Distribution>,
}

pub fn preference_stats(judgments: &[CanonicalJudgment]) -> Result<PreferenceStats, AnalyticsError> {
    if judgments.is_empty() {
        return Err(AnalyticsError::Empty("judgments"));
    }
    let mut overall = Distribution::default();
    let mut by_condition: BTreeMap<Condition, Distribution> = BTreeMap::new();
    for j in judgments {
        overall.add(j.preference_code);
        by_condition.entry(j.condition).or_default().add(j.preference_code);
    }
    Ok(PreferenceStats { overall, by_condition })
}

/// Majority-voted step counts for one condition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionStats {
    pub tasks: usize,
    pub responses: usize,
    pub steps_total: usize,
    pub steps_included: usize,
    pub steps_added: usize,
    pub added_valid: usize,
    pub static_steps_total: usize,
    pub static_missing: usize,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ConditionStats {
    pub fn inclusion_rate(&self) -> Option<f64> {
        ratio(self.steps_included, self.steps_total)
    }

    /// Share of not-included steps judged valid; `None` when nothing was added.
    pub fn validity_rate(&self) -> Option<f64> {
        ratio(self.added_valid, self.steps_added)
    }

    pub fn missing_rate(&self) -> Option<f64> {
        ratio(self.static_missing, self.static_steps_total)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InclusionStats {
    pub by_condition: BTreeMap<Condition, ConditionStats>,
    pub notices: Vec<String>,
}

/// Per-item vote counts used for agreement, one row per Recipe B step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditMatrices {
    /// Rows of `[included, not included]`.
    pub included: Vec<Vec<usize>>,
    /// Rows of `[valid, not valid]`; an included vote counts as valid.
    pub valid: Vec<Vec<usize>>,
    /// Task and step index for each row.
    pub items: Vec<(String, usize)>,
    pub raters_per_task: BTreeMap<String, usize>,
    pub preference_codes: Vec<i8>,
    pub familiarity: Vec<u8>,
    pub recipe_a_lengths: Vec<usize>,
    pub recipe_b_lengths: Vec<usize>,
}

fn group_by_task(judgments: &[CanonicalJudgment]) -> BTreeMap<&str, Vec<&CanonicalJudgment>> {
    let mut groups: BTreeMap<&str, Vec<&CanonicalJudgment>> = BTreeMap::new();
    for j in judgments {
        groups.entry(j.task_id.as_str()).or_default().push(j);
    }
    groups
}

/// A rater's validity vote; a step judged included counts as valid.
fn validity_vote(step: &CanonicalStep) -> bool {
    step.included || step.valid.unwrap_or(false)
}

fn task_err(task_id: &str, source: AnalyticsError) -> AnalyticsError {
    AnalyticsError::Task {
        task_id: task_id.to_string(),
        source: Box::new(source),
    }
}

fn vote_matrices(judgments: &[CanonicalJudgment]) -> AuditMatrices {
    let mut audit = AuditMatrices::default();
    for (task_id, group) in group_by_task(judgments) {
        audit.raters_per_task.insert(task_id.to_string(), group.len());
        let steps = group[0].steps.len();
        for idx in 0..steps {
            let included = group.iter().filter(|j| j.steps[idx].included).count();
            let valid = group.iter().filter(|j| validity_vote(&j.steps[idx])).count();
            audit.included.push(vec![included, group.len() - included]);
            audit.valid.push(vec![valid, group.len() - valid]);
            audit.items.push((task_id.to_string(), idx));
        }
    }
    for j in judgments {
        audit.preference_codes.push(j.preference_code);
        audit.familiarity.push(j.familiarity);
        audit.recipe_a_lengths.push(j.recipe_a_len);
        audit.recipe_b_lengths.push(j.recipe_b_len);
    }
    audit
}

/// Aggregate-level step statistics: every step is majority-voted across the
/// task's annotators before counting.
pub fn inclusion_validity_stats(judgments: &[CanonicalJudgment]) -> Result<InclusionStats, AnalyticsError> {
    let mut by_condition: BTreeMap<Condition, ConditionStats> = BTreeMap::new();
    for (task_id, group) in group_by_task(judgments) {
        let condition = group[0].condition;
        let stats = by_condition.entry(condition).or_default();
        stats.tasks += 1;
        stats.responses += group.len();

        let b_steps = group[0].steps.len();
        for idx in 0..b_steps {
            let votes: Vec<bool> = group.iter().map(|j| j.steps[idx].included).collect();
            let included = majority_vote(&votes).map_err(|e| task_err(task_id, e))?;
            stats.steps_total += 1;
            if included {
                stats.steps_included += 1;
                continue;
            }
            stats.steps_added += 1;
            let votes: Vec<bool> = group.iter().map(|j| validity_vote(&j.steps[idx])).collect();
            if majority_vote(&votes).map_err(|e| task_err(task_id, e))? {
                stats.added_valid += 1;
            }
        }

        let a_steps = group[0].static_step_count;
        for idx in 0..a_steps {
            let votes: Vec<bool> = group.iter().map(|j| j.missing_steps.contains(&idx)).collect();
            stats.static_steps_total += 1;
            if majority_vote(&votes).map_err(|e| task_err(task_id, e))? {
                stats.static_missing += 1;
            }
        }
    }

    let mut notices = Vec::new();
    for condition in [Condition::AIsOriginal, Condition::AIsGeneration] {
        if !by_condition.contains_key(&condition) {
            notices.push(format!("condition {condition} has no responses; omitted"));
        }
    }
    Ok(InclusionStats { by_condition, notices })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamiliarityStats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
}

pub fn familiarity_stats(judgments: &[CanonicalJudgment]) -> Result<FamiliarityStats, AnalyticsError> {
    let scores: Vec<f64> = judgments.iter().map(|j| j.familiarity as f64).collect();
    match (mean(&scores), median(&scores)) {
        (Some(mean), Some(median)) => Ok(FamiliarityStats {
            n: scores.len(),
            mean,
            median,
        }),
        _ => Err(AnalyticsError::Empty("familiarity scores")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub n: usize,
    pub median_minutes: f64,
    pub mean_minutes: f64,
    pub stddev_minutes: Option<f64>,
}

impl TimingStats {
    pub fn from_minutes(durations: &[f64]) -> Option<Self> {
        Some(Self {
            n: durations.len(),
            median_minutes: median(durations)?,
            mean_minutes: mean(durations)?,
            stddev_minutes: sample_stddev(durations),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaEntry {
    pub label: String,
    pub result: Option<AgreementResult>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub label: String,
    pub result: Option<CorrelationResult>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub n_tasks: usize,
    pub n_responses: usize,
    pub n_workers: usize,
    pub preferences: PreferenceStats,
    pub inclusion: InclusionStats,
    pub kappa: Vec<KappaEntry>,
    pub correlations: Vec<CorrelationEntry>,
    pub familiarity: FamiliarityStats,
    pub timing: Option<TimingStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditMatrices>,
}

fn kappa_entry(label: &str, matrix: &[Vec<usize>], raters: &BTreeMap<String, usize>) -> KappaEntry {
    let counts: BTreeSet<usize> = raters.values().copied().collect();
    let outcome = match counts.iter().next() {
        Some(&n) if counts.len() == 1 => fleiss_kappa(matrix, n).map_err(|e| e.to_string()),
        Some(_) => Err(format!("tasks have differing annotator counts {counts:?}")),
        None => Err("no tasks".to_string()),
    };
    match outcome {
        Ok(result) => KappaEntry {
            label: label.into(),
            result: Some(result),
            note: None,
        },
        Err(note) => KappaEntry {
            label: label.into(),
            result: None,
            note: Some(note),
        },
    }
}

fn correlation_entry(label: &str, x: Vec<f64>, y: Vec<f64>) -> CorrelationEntry {
    match pearson(&x, &y) {
        Ok(result) => CorrelationEntry {
            label: label.into(),
            result: Some(result),
            note: None,
        },
        Err(err) => CorrelationEntry {
            label: label.into(),
            result: None,
            note: Some(err.to_string()),
        },
    }
}

/// Assembles every statistic. Agreement and correlations that are undefined
/// for the data are reported with a note instead of failing the report.
pub fn build_report(
    tasks: &[AnnotationTask],
    responses: &[TaskResponse],
    include_audit: bool,
) -> Result<AnalysisReport, AnalyticsError> {
    if responses.is_empty() {
        return Err(AnalyticsError::Empty("responses"));
    }
    let judgments = normalize(tasks, responses)?;
    let preferences = preference_stats(&judgments)?;
    let inclusion = inclusion_validity_stats(&judgments)?;
    let familiarity = familiarity_stats(&judgments)?;
    let audit = vote_matrices(&judgments);

    let kappa = vec![
        kappa_entry("included", &audit.included, &audit.raters_per_task),
        kappa_entry("valid", &audit.valid, &audit.raters_per_task),
    ];

    let prefs: Vec<f64> = judgments.iter().map(|j| j.preference_code as f64).collect();
    let correlations = vec![
        correlation_entry(
            "familiarity~preference",
            judgments.iter().map(|j| j.familiarity as f64).collect(),
            prefs.clone(),
        ),
        correlation_entry(
            "length_a~preference",
            judgments.iter().map(|j| j.recipe_a_len as f64).collect(),
            prefs.clone(),
        ),
        correlation_entry(
            "length_b~preference",
            judgments.iter().map(|j| j.recipe_b_len as f64).collect(),
            prefs,
        ),
    ];

    let durations: Vec<f64> = judgments.iter().map(|j| j.duration_minutes).collect();
    let workers: BTreeSet<&str> = judgments.iter().map(|j| j.worker_id.as_str()).collect();
    let task_ids: BTreeSet<&str> = judgments.iter().map(|j| j.task_id.as_str()).collect();

    Ok(AnalysisReport {
        n_tasks: task_ids.len(),
        n_responses: judgments.len(),
        n_workers: workers.len(),
        preferences,
        inclusion,
        kappa,
        correlations,
        familiarity,
        timing: TimingStats::from_minutes(&durations),
        audit: include_audit.then_some(audit),
    })
}

/// Percentage with one decimal, e.g. `62.5%`.
pub fn pct1(share: f64) -> String {
    format!("{:.1}%", share * 100.0)
}

fn fmt_rate(rate: Option<f64>, num: usize, den: usize) -> String {
    match rate {
        Some(r) => format!("{} ({num}/{den})", pct1(r)),
        None => "n/a (0/0)".to_string(),
    }
}

fn fmt_distribution(d: &Distribution) -> String {
    format!(
        "generation {} | original {} | neither {}",
        pct1(d.share(1)),
        pct1(d.share(-1)),
        pct1(d.share(0))
    )
}

impl AnalysisReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Annotations: {} responses over {} tasks from {} workers",
            self.n_responses, self.n_tasks, self.n_workers
        );
        if let Some(t) = &self.timing {
            let sd = t
                .stddev_minutes
                .map(|s| format!("{s:.1}"))
                .unwrap_or_else(|| "n/a".into());
            let _ = writeln!(
                out,
                "Time per annotation: median {:.1} min, sd {sd} min",
                t.median_minutes
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "Preferences (n={}): {}", self.preferences.overall.n, fmt_distribution(&self.preferences.overall));
        for (condition, d) in &self.preferences.by_condition {
            let _ = writeln!(out, "  {condition} (n={}): {}", d.n, fmt_distribution(d));
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "Steps (majority vote per step):");
        for (condition, s) in &self.inclusion.by_condition {
            let _ = writeln!(
                out,
                "  {condition}: included {} | added valid {} | missing {}",
                fmt_rate(s.inclusion_rate(), s.steps_included, s.steps_total),
                fmt_rate(s.validity_rate(), s.added_valid, s.steps_added),
                fmt_rate(s.missing_rate(), s.static_missing, s.static_steps_total),
            );
        }
        for notice in &self.inclusion.notices {
            let _ = writeln!(out, "  note: {notice}");
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "Agreement (Fleiss kappa):");
        for k in &self.kappa {
            match (&k.result, &k.note) {
                (Some(r), _) => {
                    let _ = writeln!(
                        out,
                        "  {}: kappa = {:.2} ({} items, {} raters)",
                        k.label, r.kappa, r.n_items, r.n_raters
                    );
                }
                (None, note) => {
                    let _ = writeln!(out, "  {}: undefined ({})", k.label, note.as_deref().unwrap_or(""));
                }
            }
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "Familiarity (1-5): mean {:.2}, median {}",
            self.familiarity.mean, self.familiarity.median
        );
        let _ = writeln!(out, "Pearson correlations (preference coded original -1, neither 0, generation +1):");
        for c in &self.correlations {
            match (&c.result, &c.note) {
                (Some(r), _) => {
                    let _ = writeln!(out, "  {}: r = {:.4} (p = {:.4}, n = {})", c.label, r.r, r.p_value, r.n);
                }
                (None, note) => {
                    let _ = writeln!(out, "  {}: undefined ({})", c.label, note.as_deref().unwrap_or(""));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preference_mapping() {
        assert_eq!(preference_code(Preference::B, false), 1);
        assert_eq!(preference_code(Preference::A, true), 1);
        assert_eq!(preference_code(Preference::A, false), -1);
        assert_eq!(preference_code(Preference::B, true), -1);
        assert_eq!(preference_code(Preference::Neither, true), 0);
        assert_eq!(preference_code(Preference::Neither, false), 0);
    }

    #[test]
    fn pct_rounding() {
        assert_eq!(pct1(15.0 / 24.0), "62.5%");
        assert_eq!(pct1(8.0 / 24.0), "33.3%");
        assert_eq!(pct1(1.0 / 24.0), "4.2%");
        assert_eq!(pct1(37.0 / 43.0), "86.0%");
        assert_eq!(pct1(43.0 / 49.0), "87.8%");
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(preference_stats(&[]), Err(AnalyticsError::Empty(_))));
        assert!(matches!(build_report(&[], &[], false), Err(AnalyticsError::Empty(_))));
    }
}
