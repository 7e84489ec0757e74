//! Session loop, subtask servers, sensing and the shipped scenario.

pub mod estimate;
pub mod fixture;
pub mod scenario;
pub mod sensing;
pub mod server;
pub mod session;

pub use estimate::{DumpEstimate, Estimates};
pub use sensing::SensingDriver;
pub use server::{Execution, Progress, ServerCtx, ServerError, ServerRegistry, SubtaskServer};
pub use session::{
    BlackboardView, CycleReport, CyclePolicy, EStopReport, Event, FlagChange, FlagSource, Session, SessionError,
    SessionState, TaskState, TaskSummary,
};
