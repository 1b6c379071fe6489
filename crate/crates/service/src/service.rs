use std::path::Path;
use std::sync::Mutex;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use souschef_core::tasks::{
    final_violations, judgment_violations, AnnotationTask, FinalAnswers, StepJudgment, TaskResponse, Violation,
};
use thiserror::Error;

use crate::state::{ApplyError, Assignment, AssignmentState, Event, ServiceState, StoreRecord};
use crate::store::EventLog;

pub const DEFAULT_DEADLINE_MINUTES: i64 = 60;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("unknown assignment {0:?}")]
    UnknownAssignment(String),
    #[error("assignment {0:?} has expired")]
    Expired(String),
    #[error("assignment {0:?} is already submitted")]
    AlreadySubmitted(String),
    #[error("expected step {expected}, got step {got}")]
    Ordering { expected: usize, got: usize },
    #[error("validation failed: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Validation(Vec<Violation>),
    #[error("{answered} of {required} steps answered")]
    Incomplete { answered: usize, required: usize },
    #[error("event log: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Replay(#[from] ApplyError),
    #[error("duplicate task id {0:?}")]
    DuplicateTask(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServiceConfig {
    pub deadline_minutes: i64,
    /// Overrides each task's own target when set.
    pub target_annotations: Option<u32>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            deadline_minutes: DEFAULT_DEADLINE_MINUTES,
            target_annotations: None,
        }
    }
}

/// What an annotator sees; the flip and provenance stay server-side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: String,
    pub dish_title: String,
    pub ingredients: Vec<String>,
    pub recipe_a_steps: Vec<String>,
    pub recipe_b_steps: Vec<String>,
}

impl From<&AnnotationTask> for TaskView {
    fn from(t: &AnnotationTask) -> Self {
        Self {
            task_id: t.task_id.clone(),
            dish_title: t.dish_title.clone(),
            ingredients: t.ingredients.clone(),
            recipe_a_steps: t.recipe_a_steps.clone(),
            recipe_b_steps: t.recipe_b_steps.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuedTask {
    pub assignment: Assignment,
    pub task: TaskView,
    pub next_step: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepAck {
    pub assignment_id: String,
    pub step_index: usize,
    pub next_step: usize,
    pub duplicate: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalAck {
    pub assignment_id: String,
    pub state: AssignmentState,
    pub duration_seconds: i64,
    pub duplicate: bool,
}

struct Inner {
    state: ServiceState,
    log: EventLog,
}

impl Inner {
    fn commit(&mut self, event: Event, now: DateTime<Utc>) -> Result<(), ServiceError> {
        let record = StoreRecord {
            seq: self.state.next_seq,
            timestamp: now,
            event,
        };
        // Apply to a scratch copy first so a bad event never reaches the log.
        let mut next = self.state.clone();
        next.apply(&record)?;
        self.log.append(&record)?;
        self.state = next;
        Ok(())
    }

    fn expire_overdue(&mut self, now: DateTime<Utc>) -> Result<(), ServiceError> {
        for assignment_id in self.state.overdue(now) {
            self.commit(Event::AssignmentExpired { assignment_id }, now)?;
        }
        Ok(())
    }

    fn target(&self, task: &AnnotationTask, config: &ServiceConfig) -> usize {
        config.target_annotations.unwrap_or(task.target_annotations).max(1) as usize
    }
}

/// Annotation service. Every mutation runs under one lock, so assignment
/// and submission invariants hold under concurrent callers, and every
/// mutation is logged before it becomes visible.
pub struct Service {
    inner: Mutex<Inner>,
    config: ServiceConfig,
}

impl Service {
    /// Loads tasks and replays the log at `log_path` (created if absent).
    pub fn open(tasks: Vec<AnnotationTask>, log_path: &Path, config: ServiceConfig) -> Result<Self, ServiceError> {
        let mut seen = std::collections::HashSet::new();
        for t in &tasks {
            if !seen.insert(t.task_id.clone()) {
                return Err(ServiceError::DuplicateTask(t.task_id.clone()));
            }
        }
        let (log, records) = EventLog::open(log_path)?;
        let mut state = ServiceState::new(tasks);
        for record in &records {
            state.apply(record)?;
        }
        log::info!(
            "replayed {} events from {}; {} submitted responses",
            records.len(),
            log_path.display(),
            state.submission_order.len()
        );
        Ok(Self {
            inner: Mutex::new(Inner { state, log }),
            config,
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn config(&self) -> ServiceConfig {
        self.config
    }

    pub fn next_task(&self, worker_id: &str) -> Result<Option<IssuedTask>, ServiceError> {
        self.next_task_at(worker_id, Utc::now())
    }

    /// Issues the eligible task with the fewest submissions (ties by id).
    /// A worker holding an open assignment gets that assignment back.
    pub fn next_task_at(&self, worker_id: &str, now: DateTime<Utc>) -> Result<Option<IssuedTask>, ServiceError> {
        if worker_id.trim().is_empty() {
            return Err(ServiceError::BadRequest("worker id is required".into()));
        }
        let mut inner = self.lock();
        inner.expire_overdue(now)?;

        if let Some(rec) = inner.state.open_for_worker(worker_id) {
            let task = &inner.state.tasks[&rec.assignment.task_id];
            return Ok(Some(IssuedTask {
                assignment: rec.assignment.clone(),
                task: TaskView::from(task),
                next_step: rec.judgments.len(),
            }));
        }

        let mut candidates: Vec<(usize, &str)> = inner
            .state
            .tasks
            .values()
            .filter(|t| !inner.state.worker_has_seen(worker_id, &t.task_id))
            .filter_map(|t| {
                let submitted = inner.state.count(&t.task_id, AssignmentState::Submitted);
                let open = inner.state.count(&t.task_id, AssignmentState::Open);
                (submitted + open < inner.target(t, &self.config)).then_some((submitted, t.task_id.as_str()))
            })
            .collect();
        candidates.sort();
        let Some(&(_, task_id)) = candidates.first() else {
            return Ok(None);
        };
        let task_id = task_id.to_string();

        let assignment_id = format!("asg-{:06}", inner.state.next_seq);
        let deadline = now + Duration::minutes(self.config.deadline_minutes);
        inner.commit(
            Event::AssignmentIssued {
                assignment_id: assignment_id.clone(),
                task_id: task_id.clone(),
                worker_id: worker_id.to_string(),
                issued_at: now,
                deadline,
            },
            now,
        )?;
        let rec = &inner.state.assignments[&assignment_id];
        Ok(Some(IssuedTask {
            assignment: rec.assignment.clone(),
            task: TaskView::from(&inner.state.tasks[&task_id]),
            next_step: 0,
        }))
    }

    pub fn submit_step(&self, assignment_id: &str, judgment: StepJudgment) -> Result<StepAck, ServiceError> {
        self.submit_step_at(assignment_id, judgment, Utc::now())
    }

    /// Accepts the next judgment in step order. Resending an already
    /// accepted judgment unchanged is acknowledged without a new event.
    pub fn submit_step_at(
        &self,
        assignment_id: &str,
        judgment: StepJudgment,
        now: DateTime<Utc>,
    ) -> Result<StepAck, ServiceError> {
        let mut inner = self.lock();
        inner.expire_overdue(now)?;
        let rec = inner
            .state
            .assignments
            .get(assignment_id)
            .ok_or_else(|| ServiceError::UnknownAssignment(assignment_id.to_string()))?;
        let expected = rec.judgments.len();
        if rec.judgments.get(judgment.step_index) == Some(&judgment) {
            return Ok(StepAck {
                assignment_id: assignment_id.to_string(),
                step_index: judgment.step_index,
                next_step: expected,
                duplicate: true,
            });
        }
        match rec.assignment.state {
            AssignmentState::Open => {}
            AssignmentState::Expired => return Err(ServiceError::Expired(assignment_id.to_string())),
            AssignmentState::Submitted => {
                return Err(ServiceError::AlreadySubmitted(assignment_id.to_string()))
            }
        }
        if judgment.step_index != expected {
            return Err(ServiceError::Ordering {
                expected,
                got: judgment.step_index,
            });
        }
        let task = &inner.state.tasks[&rec.assignment.task_id];
        let violations = judgment_violations(task, &judgment);
        if !violations.is_empty() {
            return Err(ServiceError::Validation(violations));
        }
        let step_index = judgment.step_index;
        inner.commit(
            Event::StepSubmitted {
                assignment_id: assignment_id.to_string(),
                judgment,
            },
            now,
        )?;
        Ok(StepAck {
            assignment_id: assignment_id.to_string(),
            step_index,
            next_step: step_index + 1,
            duplicate: false,
        })
    }

    pub fn submit_final(&self, assignment_id: &str, answers: FinalAnswers) -> Result<FinalAck, ServiceError> {
        self.submit_final_at(assignment_id, answers, Utc::now())
    }

    pub fn submit_final_at(
        &self,
        assignment_id: &str,
        answers: FinalAnswers,
        now: DateTime<Utc>,
    ) -> Result<FinalAck, ServiceError> {
        let mut inner = self.lock();
        inner.expire_overdue(now)?;
        let rec = inner
            .state
            .assignments
            .get(assignment_id)
            .ok_or_else(|| ServiceError::UnknownAssignment(assignment_id.to_string()))?;
        match rec.assignment.state {
            AssignmentState::Open => {}
            AssignmentState::Expired => return Err(ServiceError::Expired(assignment_id.to_string())),
            AssignmentState::Submitted => {
                if rec.final_answers.as_ref() == Some(&answers) {
                    let submitted = rec.submitted_at.unwrap_or(rec.assignment.issued_at);
                    return Ok(FinalAck {
                        assignment_id: assignment_id.to_string(),
                        state: AssignmentState::Submitted,
                        duration_seconds: (submitted - rec.assignment.issued_at).num_seconds(),
                        duplicate: true,
                    });
                }
                return Err(ServiceError::AlreadySubmitted(assignment_id.to_string()));
            }
        }
        let task = &inner.state.tasks[&rec.assignment.task_id];
        if rec.judgments.len() < task.recipe_b_steps.len() {
            return Err(ServiceError::Incomplete {
                answered: rec.judgments.len(),
                required: task.recipe_b_steps.len(),
            });
        }
        let violations = final_violations(task, &answers);
        if !violations.is_empty() {
            return Err(ServiceError::Validation(violations));
        }
        let issued_at = rec.assignment.issued_at;
        inner.commit(
            Event::FinalSubmitted {
                assignment_id: assignment_id.to_string(),
                answers,
            },
            now,
        )?;
        Ok(FinalAck {
            assignment_id: assignment_id.to_string(),
            state: AssignmentState::Submitted,
            duration_seconds: (now - issued_at).num_seconds(),
            duplicate: false,
        })
    }

    pub fn export_responses(&self) -> Vec<TaskResponse> {
        self.lock().state.responses()
    }

    pub fn snapshot(&self) -> ServiceState {
        self.lock().state.clone()
    }

    pub fn task_count(&self) -> usize {
        self.lock().state.tasks.len()
    }
}
