use chrono::{DateTime, Duration, TimeZone, Utc};
use souschef_core::tasks::{
    AnnotationTask, FinalAnswers, InvalidReason, Preference, StepJudgment, TaskResponse,
};

/// How the majority should come out on one Recipe B step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StepFate {
    Included,
    AddedValid,
    AddedInvalid,
}

struct TaskPlan {
    id: &'static str,
    a_is_generation: bool,
    a_len: usize,
    b_len: usize,
    added_valid: &'static [usize],
    added_invalid: &'static [usize],
    /// (static step, raters reporting it missing)
    missing: &'static [(usize, &'static [usize])],
}

// Four tasks per condition. Recipe B totals are 43 and 49 steps with six
// majority-added steps each: 5 valid when A is the original, 2 valid when A
// is the generation.
const PLANS: [TaskPlan; 8] = [
    TaskPlan { id: "po-1", a_is_generation: false, a_len: 10, b_len: 12, added_valid: &[3, 7], added_invalid: &[], missing: &[(2, &[0])] },
    TaskPlan { id: "po-2", a_is_generation: false, a_len: 9, b_len: 11, added_valid: &[2], added_invalid: &[9], missing: &[] },
    TaskPlan { id: "po-3", a_is_generation: false, a_len: 8, b_len: 10, added_valid: &[5], added_invalid: &[], missing: &[] },
    TaskPlan { id: "po-4", a_is_generation: false, a_len: 9, b_len: 10, added_valid: &[8], added_invalid: &[], missing: &[] },
    TaskPlan { id: "pg-1", a_is_generation: true, a_len: 14, b_len: 13, added_valid: &[4], added_invalid: &[10], missing: &[(0, &[0, 2])] },
    TaskPlan { id: "pg-2", a_is_generation: true, a_len: 11, b_len: 12, added_valid: &[], added_invalid: &[1, 6], missing: &[] },
    TaskPlan { id: "pg-3", a_is_generation: true, a_len: 13, b_len: 12, added_valid: &[2], added_invalid: &[], missing: &[] },
    TaskPlan { id: "pg-4", a_is_generation: true, a_len: 12, b_len: 12, added_valid: &[], added_invalid: &[11], missing: &[] },
];

// Per response slot (task-major, 3 raters per task). With A = original,
// Preference::A is the original; with A = generation, it is the generation.
// A-is-original: 7 original, 5 generation. A-is-generation: 10 generation,
// 1 original, 1 neither.
const PREFERENCES: [Preference; 24] = {
    use Preference::{Neither as N, A, B};
    [
        A, A, B, A, B, A, // po-1, po-2
        A, B, A, B, A, B, // po-3, po-4
        A, A, A, A, B, A, // pg-1, pg-2
        A, A, N, A, A, A, // pg-3, pg-4
    ]
};

// Two 1s, ten 2s, eight 3s, four 4s: sum 62, middle pair (2, 3).
const FAMILIARITY: [u8; 24] = [
    2, 3, 1, 2, 4, 3, 2, 2, 3, 4, 2, 3, 1, 2, 3, 2, 4, 3, 2, 2, 3, 4, 3, 2,
];

// Median 22.8 minutes, sample standard deviation 33.7 minutes.
const DURATIONS_MINUTES: [f64; 24] = [
    22.0, 9.2, 61.0, 14.8, 25.1, 6.5, 33.4, 17.1, 96.2, 11.0, 20.2, 44.1, 154.7, 12.4, 27.9, 19.0, 52.3,
    15.5, 23.6, 38.7, 18.3, 78.5, 21.4, 30.2,
];

#[derive(Debug, Clone)]
pub struct EvaluationFixture {
    pub tasks: Vec<AnnotationTask>,
    pub responses: Vec<TaskResponse>,
}

fn steps(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix} step {i}.")).collect()
}

fn fate(plan: &TaskPlan, idx: usize) -> StepFate {
    if plan.added_valid.contains(&idx) {
        StepFate::AddedValid
    } else if plan.added_invalid.contains(&idx) {
        StepFate::AddedInvalid
    } else {
        StepFate::Included
    }
}

/// One rater's answer for a step. Votes are split where possible so the
/// majority, not unanimity, decides.
fn judgment(fate: StepFate, task_no: usize, idx: usize, rater: usize) -> StepJudgment {
    let odd_one = (task_no + idx) % 3;
    match fate {
        StepFate::Included => {
            if (task_no + idx) % 5 == rater {
                StepJudgment::elaboration(idx)
            } else {
                StepJudgment::included(idx)
            }
        }
        StepFate::AddedValid => {
            if rater == odd_one {
                StepJudgment::included(idx)
            } else {
                StepJudgment::elaboration(idx)
            }
        }
        StepFate::AddedInvalid => {
            if rater == odd_one {
                StepJudgment::elaboration(idx)
            } else if rater % 2 == 0 {
                StepJudgment::invalid(idx, vec![InvalidReason::InvalidAction])
            } else {
                StepJudgment::invalid(
                    idx,
                    vec![InvalidReason::InvalidIngredient, InvalidReason::Other("not in the dish".into())],
                )
            }
        }
    }
}

fn base_time() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2023, 3, 1, 9, 0, 0).single().expect("valid date")
}

/// Eight tasks and 24 responses reproducing the published aggregate counts.
pub fn evaluation_fixture() -> EvaluationFixture {
    let mut tasks = Vec::new();
    let mut responses = Vec::new();
    for (task_no, plan) in PLANS.iter().enumerate() {
        let (a, b) = if plan.a_is_generation {
            (steps("Generated", plan.a_len), steps("Original", plan.b_len))
        } else {
            (steps("Original", plan.a_len), steps("Generated", plan.b_len))
        };
        let task = AnnotationTask {
            task_id: plan.id.to_string(),
            recipe_id: format!("recipe-{}", plan.id),
            dish_title: format!("Dish {}", task_no + 1),
            ingredients: vec!["1 cup rice".into(), "2 cups water".into()],
            recipe_a_steps: a,
            recipe_b_steps: b,
            a_is_generation: plan.a_is_generation,
            flip_seed: 0,
            target_annotations: 3,
        };
        for rater in 0..3 {
            let slot = task_no * 3 + rater;
            let started_at = base_time() + Duration::hours(slot as i64);
            let seconds = (DURATIONS_MINUTES[slot] * 60.0).round() as i64;
            let missing_steps = plan
                .missing
                .iter()
                .filter(|(_, raters)| raters.contains(&rater))
                .map(|(idx, _)| *idx)
                .collect();
            responses.push(TaskResponse {
                task_id: task.task_id.clone(),
                worker_id: format!("w{:02}", slot % 12 + 1),
                step_judgments: (0..plan.b_len)
                    .map(|idx| judgment(fate(plan, idx), task_no, idx, rater))
                    .collect(),
                final_answers: FinalAnswers {
                    familiarity: FAMILIARITY[slot],
                    missing_steps,
                    missing_notes: None,
                    preference: PREFERENCES[slot],
                },
                started_at,
                submitted_at: started_at + Duration::seconds(seconds),
            });
        }
        tasks.push(task);
    }
    EvaluationFixture { tasks, responses }
}

#[cfg(test)]
mod tests {
    use super::*;
    use souschef_core::tasks::validate_response;

    #[test]
    fn shape_matches_published_totals() {
        let f = evaluation_fixture();
        assert_eq!(f.tasks.len(), 8);
        assert_eq!(f.responses.len(), 24);
        let workers: std::collections::BTreeSet<_> = f.responses.iter().map(|r| &r.worker_id).collect();
        assert_eq!(workers.len(), 12);
        assert_eq!(FAMILIARITY.iter().map(|&s| s as u32).sum::<u32>(), 62);
        for (score, count) in [(1, 2), (2, 10), (3, 8), (4, 4)] {
            assert_eq!(FAMILIARITY.iter().filter(|&&s| s == score).count(), count);
        }
    }

    #[test]
    fn every_response_is_valid() {
        let f = evaluation_fixture();
        for r in &f.responses {
            let task = f.tasks.iter().find(|t| t.task_id == r.task_id).unwrap();
            validate_response(task, r).unwrap();
        }
    }
}
