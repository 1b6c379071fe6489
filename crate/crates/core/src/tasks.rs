//! A/B annotation tasks, the response schema, and its validation rules.
//!
//! Field names here are the wire contract shared with the annotation
//! service and the browser client.

use std::collections::HashSet;
use std::fmt;
use std::io;
use std::path::Path;

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Recipe;
use crate::digest::derive_seed;
use crate::gateway::RevisionResult;
use crate::jsonl::{self, LineError};

pub const DEFAULT_TARGET_ANNOTATIONS: u32 = 3;
pub const FAMILIARITY_RANGE: std::ops::RangeInclusive<u8> = 1..=5;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("revision for {revision_id:?} does not belong to recipe {recipe_id:?}")]
    Mismatch { recipe_id: String, revision_id: String },
    #[error("recipe {0:?} has an empty side")]
    EmptySide(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub task_id: String,
    pub recipe_id: String,
    pub dish_title: String,
    pub ingredients: Vec<String>,
    pub recipe_a_steps: Vec<String>,
    pub recipe_b_steps: Vec<String>,
    pub a_is_generation: bool,
    pub flip_seed: u64,
    pub target_annotations: u32,
}

impl AnnotationTask {
    /// (original steps, generated steps), undoing the flip.
    pub fn unflip(&self) -> (&[String], &[String]) {
        if self.a_is_generation {
            (&self.recipe_b_steps, &self.recipe_a_steps)
        } else {
            (&self.recipe_a_steps, &self.recipe_b_steps)
        }
    }
}

pub fn task_id_for(recipe_id: &str, seed: u64) -> String {
    format!("{recipe_id}-s{seed}")
}

/// Seeded fair coin for the A/B flip of one recipe.
pub fn flip_coin(recipe_id: &str, seed: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(recipe_id, seed));
    rng.random_bool(0.5)
}

pub fn make_task(original: &Recipe, revision: &RevisionResult, seed: u64) -> Result<AnnotationTask, TaskError> {
    make_task_with_target(original, revision, seed, DEFAULT_TARGET_ANNOTATIONS)
}

pub fn make_task_with_target(
    original: &Recipe,
    revision: &RevisionResult,
    seed: u64,
    target_annotations: u32,
) -> Result<AnnotationTask, TaskError> {
    if original.id != revision.recipe_id {
        return Err(TaskError::Mismatch {
            recipe_id: original.id.clone(),
            revision_id: revision.recipe_id.clone(),
        });
    }
    if original.steps.is_empty() || revision.revised_steps.is_empty() {
        return Err(TaskError::EmptySide(original.id.clone()));
    }
    let a_is_generation = flip_coin(&original.id, seed);
    let (a, b) = if a_is_generation {
        (revision.revised_steps.clone(), original.steps.clone())
    } else {
        (original.steps.clone(), revision.revised_steps.clone())
    };
    Ok(AnnotationTask {
        task_id: task_id_for(&original.id, seed),
        recipe_id: original.id.clone(),
        dish_title: original.title.clone(),
        ingredients: original.ingredients.clone(),
        recipe_a_steps: a,
        recipe_b_steps: b,
        a_is_generation,
        flip_seed: seed,
        target_annotations: target_annotations.max(1),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidReason {
    InvalidIngredient,
    InvalidAction,
    Other(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepJudgment {
    pub step_index: usize,
    pub included: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invalid_reasons: Option<Vec<InvalidReason>>,
}

impl StepJudgment {
    pub fn included(step_index: usize) -> Self {
        Self {
            step_index,
            included: true,
            valid: None,
            invalid_reasons: None,
        }
    }

    pub fn elaboration(step_index: usize) -> Self {
        Self {
            step_index,
            included: false,
            valid: Some(true),
            invalid_reasons: None,
        }
    }

    pub fn invalid(step_index: usize, reasons: Vec<InvalidReason>) -> Self {
        Self {
            step_index,
            included: false,
            valid: Some(false),
            invalid_reasons: Some(reasons),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preference {
    A,
    B,
    #[serde(rename = "neither")]
    Neither,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalAnswers {
    pub familiarity: u8,
    #[serde(default)]
    pub missing_steps: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub missing_notes: Option<String>,
    pub preference: Preference,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskResponse {
    pub task_id: String,
    pub worker_id: String,
    pub step_judgments: Vec<StepJudgment>,
    #[serde(rename = "final")]
    pub final_answers: FinalAnswers,
    pub started_at: DateTime<Utc>,
    pub submitted_at: DateTime<Utc>,
}

impl TaskResponse {
    pub fn duration_minutes(&self) -> f64 {
        (self.submitted_at - self.started_at).num_milliseconds() as f64 / 60_000.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Follow-up rules for one judgment against the task's Recipe B.
pub fn judgment_violations(task: &AnnotationTask, judgment: &StepJudgment) -> Vec<Violation> {
    let mut out = Vec::new();
    let field = |name: &str| format!("step_judgments[{}].{name}", judgment.step_index);
    if judgment.step_index >= task.recipe_b_steps.len() {
        out.push(Violation::new(field("step_index"), "step index out of bounds"));
    }
    if judgment.included {
        if judgment.valid.is_some() {
            out.push(Violation::new(field("valid"), "valid answered without trigger"));
        }
        if judgment.invalid_reasons.is_some() {
            out.push(Violation::new(field("invalid_reasons"), "reasons answered without trigger"));
        }
        return out;
    }
    match judgment.valid {
        None => out.push(Violation::new(field("valid"), "missing validity answer")),
        Some(true) => {
            if judgment.invalid_reasons.is_some() {
                out.push(Violation::new(field("invalid_reasons"), "reasons answered without trigger"));
            }
        }
        Some(false) => match &judgment.invalid_reasons {
            None => out.push(Violation::new(field("invalid_reasons"), "missing invalid reason")),
            Some(reasons) if reasons.is_empty() => {
                out.push(Violation::new(field("invalid_reasons"), "missing invalid reason"))
            }
            Some(reasons) => {
                let mut seen = HashSet::new();
                for reason in reasons {
                    if let InvalidReason::Other(text) = reason {
                        if text.trim().is_empty() {
                            out.push(Violation::new(field("invalid_reasons"), "other reason text empty"));
                        }
                    }
                    let key = std::mem::discriminant(reason);
                    if !seen.insert(key) {
                        out.push(Violation::new(field("invalid_reasons"), "duplicate invalid reason"));
                    }
                }
            }
        },
    }
    out
}

pub fn final_violations(task: &AnnotationTask, answers: &FinalAnswers) -> Vec<Violation> {
    let mut out = Vec::new();
    if !FAMILIARITY_RANGE.contains(&answers.familiarity) {
        out.push(Violation::new("final.familiarity", "familiarity out of range"));
    }
    let mut seen = HashSet::new();
    for &idx in &answers.missing_steps {
        if idx >= task.recipe_a_steps.len() {
            out.push(Violation::new("final.missing_steps", "missing step index out of bounds"));
        }
        if !seen.insert(idx) {
            out.push(Violation::new("final.missing_steps", "duplicate missing step index"));
        }
    }
    out
}

/// Checks a complete response; returns every violation found.
pub fn validate_response(task: &AnnotationTask, response: &TaskResponse) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    if response.task_id != task.task_id {
        out.push(Violation::new("task_id", "response belongs to a different task"));
    }
    if response.worker_id.trim().is_empty() {
        out.push(Violation::new("worker_id", "worker id blank"));
    }
    if response.step_judgments.len() != task.recipe_b_steps.len() {
        out.push(Violation::new(
            "step_judgments",
            format!(
                "expected {} judgments, got {}",
                task.recipe_b_steps.len(),
                response.step_judgments.len()
            ),
        ));
    }
    for (position, judgment) in response.step_judgments.iter().enumerate() {
        if judgment.step_index != position {
            out.push(Violation::new(
                format!("step_judgments[{position}].step_index"),
                "judgments out of step order",
            ));
        }
        out.extend(judgment_violations(task, judgment));
    }
    out.extend(final_violations(task, &response.final_answers));
    if response.submitted_at < response.started_at {
        out.push(Violation::new("submitted_at", "submitted before started"));
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

pub fn export_tasks(tasks: &[AnnotationTask], path: &Path) -> io::Result<()> {
    jsonl::write_records(path, tasks)
}

#[derive(Debug, Clone, Default)]
pub struct Imported<T> {
    pub records: Vec<T>,
    pub errors: Vec<LineError>,
}

pub fn import_tasks(path: &Path) -> io::Result<Imported<AnnotationTask>> {
    let lines = jsonl::read_lines(path)?;
    let (ok, errors) = jsonl::parse_lines::<AnnotationTask>(&lines);
    Ok(Imported {
        records: ok.into_iter().map(|(_, t)| t).collect(),
        errors,
    })
}

pub fn export_responses(responses: &[TaskResponse], path: &Path) -> io::Result<()> {
    jsonl::write_records(path, responses)
}

/// Reads responses, rejecting lines that fail to parse, reference an
/// unknown task, or fail [`validate_response`].
pub fn import_responses(path: &Path, tasks: &[AnnotationTask]) -> io::Result<Imported<TaskResponse>> {
    let lines = jsonl::read_lines(path)?;
    let (parsed, mut errors) = jsonl::parse_lines::<TaskResponse>(&lines);
    let mut records = Vec::new();
    for (line, response) in parsed {
        let Some(task) = tasks.iter().find(|t| t.task_id == response.task_id) else {
            errors.push(LineError {
                line,
                message: format!("unknown task {:?}", response.task_id),
            });
            continue;
        };
        match validate_response(task, &response) {
            Ok(()) => records.push(response),
            Err(violations) => errors.push(LineError {
                line,
                message: violations
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join("; "),
            }),
        }
    }
    errors.sort_by_key(|e| e.line);
    Ok(Imported { records, errors })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task() -> AnnotationTask {
        AnnotationTask {
            task_id: "r1-s0".into(),
            recipe_id: "r1".into(),
            dish_title: "Paella".into(),
            ingredients: vec!["rice".into()],
            recipe_a_steps: vec!["a1".into(), "a2".into()],
            recipe_b_steps: vec!["b1".into(), "b2".into(), "b3".into()],
            a_is_generation: false,
            flip_seed: 0,
            target_annotations: 3,
        }
    }

    fn response() -> TaskResponse {
        let t = Utc::now();
        TaskResponse {
            task_id: "r1-s0".into(),
            worker_id: "w1".into(),
            step_judgments: vec![
                StepJudgment::included(0),
                StepJudgment::elaboration(1),
                StepJudgment::invalid(2, vec![InvalidReason::InvalidAction]),
            ],
            final_answers: FinalAnswers {
                familiarity: 3,
                missing_steps: vec![1],
                missing_notes: None,
                preference: Preference::Neither,
            },
            started_at: t,
            submitted_at: t,
        }
    }

    fn messages(r: Result<(), Vec<Violation>>) -> Vec<String> {
        r.err().unwrap_or_default().into_iter().map(|v| v.message).collect()
    }

    #[test]
    fn well_formed_is_accepted() {
        assert_eq!(validate_response(&task(), &response()), Ok(()));
    }

    #[test]
    fn valid_without_trigger() {
        let mut r = response();
        r.step_judgments[0].valid = Some(true);
        assert_eq!(messages(validate_response(&task(), &r)), vec!["valid answered without trigger"]);
    }

    #[test]
    fn invalid_without_reason() {
        let mut r = response();
        r.step_judgments[2].invalid_reasons = Some(vec![]);
        assert_eq!(messages(validate_response(&task(), &r)), vec!["missing invalid reason"]);
        r.step_judgments[2].invalid_reasons = None;
        assert_eq!(messages(validate_response(&task(), &r)), vec!["missing invalid reason"]);
    }

    #[test]
    fn other_reason_needs_text() {
        let mut r = response();
        r.step_judgments[2].invalid_reasons = Some(vec![InvalidReason::Other(" ".into())]);
        assert_eq!(messages(validate_response(&task(), &r)), vec!["other reason text empty"]);
    }

    #[test]
    fn counts_ranges_and_bounds() {
        let mut r = response();
        r.step_judgments.pop();
        r.final_answers.familiarity = 6;
        r.final_answers.missing_steps = vec![2];
        let msgs = messages(validate_response(&task(), &r));
        assert_eq!(
            msgs,
            vec![
                "expected 3 judgments, got 2",
                "familiarity out of range",
                "missing step index out of bounds"
            ]
        );
    }

    #[test]
    fn wire_names_are_stable() {
        let json = serde_json::to_value(response()).unwrap();
        assert!(json.get("final").is_some());
        assert_eq!(json["final"]["preference"], "neither");
        assert_eq!(json["step_judgments"][2]["invalid_reasons"][0], "invalid_action");
        let other = serde_json::to_value(InvalidReason::Other("burnt".into())).unwrap();
        assert_eq!(other, serde_json::json!({"other": "burnt"}));
        assert!(json["step_judgments"][0].get("valid").is_none());
    }

    #[test]
    fn unflip_recovers_pair() {
        let mut t = task();
        assert_eq!(t.unflip().0, &t.recipe_a_steps[..]);
        t.a_is_generation = true;
        assert_eq!(t.unflip().1, &t.recipe_a_steps[..]);
    }
}
