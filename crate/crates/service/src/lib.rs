//! Annotation service: hands out A/B tasks, checks each submitted answer,
//! and records everything in an append-only log that can be replayed.

pub mod http;
mod service;
pub mod state;
mod store;

pub use service::{
    FinalAck, IssuedTask, Service, ServiceConfig, ServiceError, StepAck, TaskView, DEFAULT_DEADLINE_MINUTES,
};
pub use state::{Assignment, AssignmentState, Event, ServiceState, StoreRecord};
pub use store::EventLog;
