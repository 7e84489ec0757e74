//! Subtask servers: the executable side of leaf nodes.
//!
//! A server turns a goal into an [`Execution`] that is stepped once per
//! simulation step until it finishes. Synchronization servers finish in the
//! step they start.

use std::collections::BTreeMap;

use serde_json::Value as Json;
use thiserror::Error;

use super::estimate::Estimates;
use crate::blackboard::{sync, Blackboard};
use crate::comms::GoalPayload;
use crate::manip::IkError;
use crate::nav::{NoAdmissibleCommand, PlanError};
use crate::sim::Site;
use crate::store::{ParamStore, ParameterRecord};

/// Everything a server may touch while it runs.
pub struct ServerCtx<'a> {
    pub now: f64,
    pub dt: f64,
    pub site: &'a mut Site,
    pub store: &'a ParamStore,
    pub estimates: &'a Estimates,
    pub global: &'a Blackboard,
    /// Local blackboard of the task that sent the goal.
    pub local: Option<&'a Blackboard>,
}

impl ServerCtx<'_> {
    pub fn record(&self, payload: &GoalPayload) -> Result<&ParameterRecord, ServerError> {
        self.store.query_parameter(&payload.model_name, &payload.record_name).ok_or_else(|| {
            ServerError::ParameterAbsent { model_name: payload.model_name.clone(), record_name: payload.record_name.clone() }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ServerError {
    #[error("no parameter record {model_name}/{record_name}")]
    ParameterAbsent { model_name: String, record_name: String },
    #[error("record {record_name}: {reason}")]
    BadParameter { record_name: String, reason: String },
    #[error("server {server} does not drive {machine}")]
    WrongMachine { server: String, machine: String },
    #[error("no local blackboard for the requesting task")]
    NoLocalBlackboard,
    #[error(transparent)]
    Ik(#[from] IkError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    NoAdmissibleCommand(#[from] NoAdmissibleCommand),
    #[error(transparent)]
    Sync(#[from] sync::SyncError),
}

impl ServerError {
    pub fn bad(record_name: &str, reason: impl Into<String>) -> Self {
        ServerError::BadParameter { record_name: record_name.to_string(), reason: reason.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Progress {
    /// Still working; the value is the remaining amount of work.
    Running(f64),
    Succeeded(String),
    Aborted(String),
}

pub trait Execution: Send {
    fn step(&mut self, ctx: &mut ServerCtx<'_>) -> Progress;

    /// Bring the machine to a safe stop. Called at most once, instead of
    /// any further `step`.
    fn cancel(&mut self, ctx: &mut ServerCtx<'_>);
}

pub trait SubtaskServer: Send + Sync {
    fn name(&self) -> &'static str;

    fn start(&self, payload: &GoalPayload, ctx: &mut ServerCtx<'_>) -> Result<Box<dyn Execution>, ServerError>;
}

/// An execution whose outcome is already known.
pub struct Finished(pub Progress);

impl Execution for Finished {
    fn step(&mut self, _: &mut ServerCtx<'_>) -> Progress {
        self.0.clone()
    }

    fn cancel(&mut self, _: &mut ServerCtx<'_>) {}
}

/// Reader, writer or checker between the global and local blackboards.
pub struct SyncServer(pub &'static str);

impl SubtaskServer for SyncServer {
    fn name(&self) -> &'static str {
        self.0
    }

    fn start(&self, payload: &GoalPayload, ctx: &mut ServerCtx<'_>) -> Result<Box<dyn Execution>, ServerError> {
        let local = ctx.local.ok_or(ServerError::NoLocalBlackboard)?;
        sync::run(self.0, &payload.record_name, ctx.global, local, ctx.now)?;
        Ok(Box::new(Finished(Progress::Succeeded(payload.record_name.clone()))))
    }
}

pub fn check_machine(server: &str, expected: &str, payload: &GoalPayload) -> Result<(), ServerError> {
    if payload.model_name == expected {
        Ok(())
    } else {
        Err(ServerError::WrongMachine { server: server.to_string(), machine: payload.model_name.clone() })
    }
}

/// Required numeric field of a record.
pub fn num(rec: &ParameterRecord, key: &str) -> Result<f64, ServerError> {
    rec.f64_field(key).ok_or_else(|| ServerError::bad(&rec.record_name, format!("missing number `{key}`")))
}

pub fn num_in(obj: &Json, key: &str, record_name: &str) -> Result<f64, ServerError> {
    obj.get(key)
        .and_then(Json::as_f64)
        .ok_or_else(|| ServerError::bad(record_name, format!("missing number `{key}`")))
}

/// Servers by name.
#[derive(Default)]
pub struct ServerRegistry {
    servers: BTreeMap<&'static str, Box<dyn SubtaskServer>>,
}

impl ServerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// The seven machine servers plus the three synchronization servers.
    pub fn standard() -> Self {
        let mut r = Self::new();
        for s in crate::nav::servers::all() {
            r.register(s);
        }
        for s in crate::manip::servers::all() {
            r.register(s);
        }
        for name in [sync::READER, sync::WRITER, sync::CHECKER] {
            r.register(Box::new(SyncServer(name)));
        }
        r
    }

    pub fn register(&mut self, server: Box<dyn SubtaskServer>) {
        self.servers.insert(server.name(), server);
    }

    pub fn get(&self, name: &str) -> Option<&dyn SubtaskServer> {
        self.servers.get(name).map(|s| s.as_ref())
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.servers.keys().copied()
    }
}
