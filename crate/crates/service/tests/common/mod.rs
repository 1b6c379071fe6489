#![allow(dead_code)]

use chrono::{DateTime, TimeZone, Utc};
use souschef_core::tasks::{AnnotationTask, FinalAnswers, Preference, StepJudgment};
use souschef_service::{IssuedTask, Service, ServiceConfig};

pub fn task(id: &str, a_len: usize, b_len: usize) -> AnnotationTask {
    AnnotationTask {
        task_id: id.into(),
        recipe_id: id.into(),
        dish_title: format!("dish {id}"),
        ingredients: vec!["flour".into(), "water".into()],
        recipe_a_steps: (0..a_len).map(|i| format!("a step {i}")).collect(),
        recipe_b_steps: (0..b_len).map(|i| format!("b step {i}")).collect(),
        a_is_generation: false,
        flip_seed: 0,
        target_annotations: 3,
    }
}

pub fn tasks(n: usize) -> Vec<AnnotationTask> {
    (0..n).map(|i| task(&format!("t{i}"), 2, 3)).collect()
}

pub fn answers() -> FinalAnswers {
    FinalAnswers {
        familiarity: 4,
        missing_steps: vec![],
        missing_notes: None,
        preference: Preference::B,
    }
}

pub fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 3, 1, 9, 0, 0).unwrap()
}

pub fn open(tasks: Vec<AnnotationTask>, dir: &tempfile::TempDir) -> Service {
    Service::open(tasks, &dir.path().join("events.jsonl"), ServiceConfig::default()).unwrap()
}

/// Answers every remaining step as included and submits the final page.
pub fn complete(service: &Service, job: &IssuedTask) {
    let id = &job.assignment.assignment_id;
    for idx in job.next_step..job.task.recipe_b_steps.len() {
        service.submit_step(id, StepJudgment::included(idx)).unwrap();
    }
    service.submit_final(id, answers()).unwrap();
}
