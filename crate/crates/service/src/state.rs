//! Deterministic service state, rebuilt by applying logged events in order.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use souschef_core::tasks::{AnnotationTask, FinalAnswers, StepJudgment, TaskResponse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentState {
    Open,
    Submitted,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub assignment_id: String,
    pub task_id: String,
    pub worker_id: String,
    pub state: AssignmentState,
    pub issued_at: DateTime<Utc>,
    pub deadline: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    AssignmentIssued {
        assignment_id: String,
        task_id: String,
        worker_id: String,
        issued_at: DateTime<Utc>,
        deadline: DateTime<Utc>,
    },
    StepSubmitted {
        assignment_id: String,
        judgment: StepJudgment,
    },
    FinalSubmitted {
        assignment_id: String,
        answers: FinalAnswers,
    },
    AssignmentExpired {
        assignment_id: String,
    },
}

/// One line of the append-only log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreRecord {
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub assignment: Assignment,
    pub judgments: Vec<StepJudgment>,
    pub final_answers: Option<FinalAnswers>,
    pub submitted_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot apply log record {seq}: {reason}")]
pub struct ApplyError {
    pub seq: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceState {
    pub tasks: BTreeMap<String, AnnotationTask>,
    pub assignments: BTreeMap<String, AssignmentRecord>,
    /// Assignment ids in the order their final answers arrived.
    pub submission_order: Vec<String>,
    pub next_seq: u64,
}

impl ServiceState {
    pub fn new(tasks: Vec<AnnotationTask>) -> Self {
        Self {
            tasks: tasks.into_iter().map(|t| (t.task_id.clone(), t)).collect(),
            assignments: BTreeMap::new(),
            submission_order: Vec::new(),
            next_seq: 0,
        }
    }

    pub fn apply(&mut self, record: &StoreRecord) -> Result<(), ApplyError> {
        let fail = |reason: String| ApplyError {
            seq: record.seq,
            reason,
        };
        if record.seq != self.next_seq {
            return Err(fail(format!("expected sequence {}", self.next_seq)));
        }
        match &record.event {
            Event::AssignmentIssued {
                assignment_id,
                task_id,
                worker_id,
                issued_at,
                deadline,
            } => {
                if !self.tasks.contains_key(task_id) {
                    return Err(fail(format!("unknown task {task_id}")));
                }
                if self.assignments.contains_key(assignment_id) {
                    return Err(fail(format!("duplicate assignment {assignment_id}")));
                }
                self.assignments.insert(
                    assignment_id.clone(),
                    AssignmentRecord {
                        assignment: Assignment {
                            assignment_id: assignment_id.clone(),
                            task_id: task_id.clone(),
                            worker_id: worker_id.clone(),
                            state: AssignmentState::Open,
                            issued_at: *issued_at,
                            deadline: *deadline,
                        },
                        judgments: Vec::new(),
                        final_answers: None,
                        submitted_at: None,
                    },
                );
            }
            Event::StepSubmitted {
                assignment_id,
                judgment,
            } => {
                let rec = self.open_record(assignment_id).map_err(fail)?;
                if judgment.step_index != rec.judgments.len() {
                    return Err(fail(format!("step {} out of order", judgment.step_index)));
                }
                rec.judgments.push(judgment.clone());
            }
            Event::FinalSubmitted {
                assignment_id,
                answers,
            } => {
                let rec = self.open_record(assignment_id).map_err(fail)?;
                rec.final_answers = Some(answers.clone());
                rec.submitted_at = Some(record.timestamp);
                rec.assignment.state = AssignmentState::Submitted;
                self.submission_order.push(assignment_id.clone());
            }
            Event::AssignmentExpired { assignment_id } => {
                let rec = self.open_record(assignment_id).map_err(fail)?;
                rec.assignment.state = AssignmentState::Expired;
            }
        }
        self.next_seq += 1;
        Ok(())
    }

    fn open_record(&mut self, assignment_id: &str) -> Result<&mut AssignmentRecord, String> {
        let rec = self
            .assignments
            .get_mut(assignment_id)
            .ok_or_else(|| format!("unknown assignment {assignment_id}"))?;
        if rec.assignment.state != AssignmentState::Open {
            return Err(format!("assignment {assignment_id} is not open"));
        }
        Ok(rec)
    }

    pub fn count(&self, task_id: &str, state: AssignmentState) -> usize {
        self.assignments
            .values()
            .filter(|r| r.assignment.task_id == task_id && r.assignment.state == state)
            .count()
    }

    pub fn open_for_worker(&self, worker_id: &str) -> Option<&AssignmentRecord> {
        self.assignments
            .values()
            .find(|r| r.assignment.worker_id == worker_id && r.assignment.state == AssignmentState::Open)
    }

    pub fn worker_has_seen(&self, worker_id: &str, task_id: &str) -> bool {
        self.assignments
            .values()
            .any(|r| r.assignment.worker_id == worker_id && r.assignment.task_id == task_id)
    }

    pub fn overdue(&self, now: DateTime<Utc>) -> Vec<String> {
        self.assignments
            .values()
            .filter(|r| r.assignment.state == AssignmentState::Open && r.assignment.deadline <= now)
            .map(|r| r.assignment.assignment_id.clone())
            .collect()
    }

    /// Submitted responses in submission order.
    pub fn responses(&self) -> Vec<TaskResponse> {
        self.submission_order
            .iter()
            .filter_map(|id| self.assignments.get(id))
            .filter_map(|rec| {
                Some(TaskResponse {
                    task_id: rec.assignment.task_id.clone(),
                    worker_id: rec.assignment.worker_id.clone(),
                    step_judgments: rec.judgments.clone(),
                    final_answers: rec.final_answers.clone()?,
                    started_at: rec.assignment.issued_at,
                    submitted_at: rec.submitted_at?,
                })
            })
            .collect()
    }
}
