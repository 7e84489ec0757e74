//! The stepping loop that ties trees, servers, sensing and the site together.
//!
//! Per step: drain telemetry, run sensing, tick every running tree in task
//! id order, run the open goals, advance the site and emit events.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use super::estimate::Estimates;
use super::sensing::{SensingDriver, SensingError};
use super::server::{Execution, Progress, ServerCtx, ServerRegistry};
use crate::blackboard::flags::{
    load_initial_flags, ARRIVAL_FLG, CONTINUE_FLG, MOVING_FLG, SENSING_ARRIVAL_FLG, SENSING_CHECK_MOUND_FLG,
    SENSING_LOADED_FLG,
};
use crate::blackboard::{Blackboard, BlackboardError, Blackboards, Entry, Value};
use crate::bt::parse::parse_task_sequence_value;
use crate::bt::{ActionClient, BtStatus, CancelReport, ExecutionContext, LeafParams, NodeKind, ParseError, TaskTree, TickError};
use crate::comms::{ActionEvent, ActionGoal, ActionState, GoalBroker, GoalId, GoalPayload, SendGoalError, TaskId};
use crate::sim::{decode_all, Delivered, DumpRecord, Site, SiteConfig, SiteSnapshot, IC120, ZX200};
use crate::store::{ParamStore, ParamType, ParameterRecord, StoreError, GLOBAL_BLACKBOARD_MODEL};

/// Flags an operator may write through the control API.
pub const OPERATOR_FLAGS: [&str; 5] =
    [CONTINUE_FLG, MOVING_FLG, SENSING_ARRIVAL_FLG, SENSING_CHECK_MOUND_FLG, SENSING_LOADED_FLG];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("emergency stop is latched")]
    EStopLatched,
    #[error("task {0} not found")]
    TaskNotFound(TaskId),
    #[error("machine {machine} is busy with task {task_id}")]
    MachineBusy { machine: String, task_id: TaskId },
    #[error("task {task_id}: {source}")]
    Parse { task_id: TaskId, source: ParseError },
    #[error("task {task_id} names unknown subtask server `{subtask}`")]
    UnknownSubtask { task_id: TaskId, subtask: String },
    #[error("flag `{0}` cannot be set by an operator")]
    FlagNotOverridable(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Blackboard(#[from] BlackboardError),
    #[error(transparent)]
    Tick(#[from] TickError),
}

impl From<SensingError> for SessionError {
    fn from(e: SensingError) -> Self {
        match e {
            SensingError::Store(e) => e.into(),
            SensingError::Blackboard(e) => e.into(),
        }
    }
}

/// When the session lowers CONTINUE_FLG on its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CyclePolicy {
    /// After this many departures from the loading point.
    Cycles(u32),
    /// Only when the mound is exhausted; otherwise the operator decides.
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "task_id")]
pub enum FlagSource {
    Sensing,
    Task(TaskId),
    Policy,
    Operator,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlagChange {
    pub step: u64,
    pub t: f64,
    pub key: String,
    pub from: Option<Value>,
    pub to: Value,
    pub source: FlagSource,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Step {
        snapshot: SiteSnapshot,
        estimate: [f64; 3],
        commands: Vec<Delivered>,
    },
    Flag(FlagChange),
    Goal {
        step: u64,
        t: f64,
        goal_id: GoalId,
        task_id: TaskId,
        server: String,
        record_name: String,
        from: ActionState,
        to: ActionState,
        #[serde(skip_serializing_if = "Option::is_none")]
        message: Option<String>,
    },
    Task {
        step: u64,
        t: f64,
        task_id: TaskId,
        model_name: String,
        status: BtStatus,
    },
    Param {
        step: u64,
        t: f64,
        model_name: String,
        record_name: String,
        revision: u64,
    },
    #[serde(rename = "estop")]
    EStop {
        step: u64,
        t: f64,
        reports: Vec<CancelReport>,
    },
}

impl Event {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("events serialize")
    }
}

/// Load carried away from the loading point on one departure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleReport {
    pub cycle: u32,
    pub departed_at: f64,
    pub vessel_load: f64,
    /// Soil excavated since the previous departure.
    pub excavated: f64,
    pub dumps: Vec<DumpRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EStopReport {
    pub step: u64,
    pub t: f64,
    pub reports: Vec<CancelReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskState {
    pub task_id: TaskId,
    pub model_name: String,
    pub status: BtStatus,
    pub active_leaf: Option<LeafParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionState {
    pub snapshot: SiteSnapshot,
    pub estimate: [f64; 3],
    pub gnss_accepted: u64,
    pub gnss_rejected: u64,
    pub tasks: Vec<TaskState>,
    pub goals: Vec<ActionGoal>,
    pub estopped: bool,
    pub departures: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskSummary {
    pub task_id: TaskId,
    pub model_name: String,
    pub description: Option<String>,
    pub status: Option<BtStatus>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlackboardView {
    pub global: BTreeMap<String, Entry>,
    pub local: BTreeMap<TaskId, BTreeMap<String, Entry>>,
}

type Executions = BTreeMap<GoalId, Box<dyn Execution>>;

/// The action client handed to trees while they tick.
struct Dispatch<'a> {
    broker: &'a mut GoalBroker,
    executions: &'a mut Executions,
    site: &'a mut Site,
    store: &'a ParamStore,
    estimates: &'a Estimates,
    boards: &'a Blackboards,
    now: f64,
}

impl ActionClient for Dispatch<'_> {
    fn send_goal(&mut self, task: TaskId, server: &str, payload: GoalPayload) -> Result<GoalId, SendGoalError> {
        self.broker.send_goal(task, server, payload)
    }

    fn goal_state(&self, goal: GoalId) -> Option<ActionState> {
        self.broker.state(goal)
    }

    fn cancel_goal(&mut self, goal: GoalId) -> ActionState {
        let Some(g) = self.broker.goal(goal) else {
            return ActionState::Canceled;
        };
        let task_id = g.task_id;
        if !matches!(g.state, ActionState::Accepted | ActionState::Executing) {
            return g.state;
        }
        self.broker.apply(goal, ActionEvent::CancelRequest).expect("open goal accepts a cancel");
        if let Some(mut exec) = self.executions.remove(&goal) {
            let dt = self.site.config.dt;
            let mut ctx = ServerCtx {
                now: self.now,
                dt,
                site: self.site,
                store: self.store,
                estimates: self.estimates,
                global: self.boards.global(),
                local: self.boards.local(task_id),
            };
            exec.cancel(&mut ctx);
        }
        self.broker.apply(goal, ActionEvent::CancelDone).expect("canceling goal completes")
    }
}

pub struct Session {
    site: Site,
    store: ParamStore,
    broker: GoalBroker,
    registry: ServerRegistry,
    executions: Executions,
    boards: Blackboards,
    trees: BTreeMap<TaskId, TaskTree>,
    estimates: Estimates,
    sensing: SensingDriver,
    policy: CyclePolicy,
    cycles: Vec<CycleReport>,
    excavated_mark: f64,
    last_flags: BTreeMap<String, Value>,
    events: Vec<Event>,
    seen_transitions: usize,
    estopped: bool,
}

impl Session {
    /// A session over a loaded store. Global flags start from the store's
    /// `global_blackboard` records, falling back to the flag table.
    pub fn new(config: SiteConfig, store: ParamStore, policy: CyclePolicy) -> Result<Self, SessionError> {
        Self::with_registry(config, store, policy, ServerRegistry::standard())
    }

    pub fn with_registry(
        config: SiteConfig,
        store: ParamStore,
        policy: CyclePolicy,
        registry: ServerRegistry,
    ) -> Result<Self, SessionError> {
        let boards = Blackboards::new();
        load_initial_flags(boards.global(), 0.0)?;
        for rec in store.parameters().filter(|r| r.model_name == GLOBAL_BLACKBOARD_MODEL) {
            if let Some(v) = rec.field("value").and_then(|v| serde_json::from_value::<Value>(v.clone()).ok()) {
                boards.global().set(&rec.record_name, v, 0.0)?;
            }
        }
        let last_flags = boards.global().snapshot().into_iter().map(|(k, e)| (k, e.value)).collect();
        let mut broker = GoalBroker::new();
        for name in registry.names() {
            broker.register(name);
        }
        let estimates = Estimates::new(&config);
        Ok(Self {
            site: Site::new(config),
            store,
            broker,
            registry,
            executions: BTreeMap::new(),
            boards,
            trees: BTreeMap::new(),
            estimates,
            sensing: SensingDriver::new(),
            policy,
            cycles: vec![],
            excavated_mark: 0.0,
            last_flags,
            events: vec![],
            seen_transitions: 0,
            estopped: false,
        })
    }

    pub fn site(&self) -> &Site {
        &self.site
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn global(&self) -> &Blackboard {
        self.boards.global()
    }

    pub fn tree(&self, task_id: TaskId) -> Option<&TaskTree> {
        self.trees.get(&task_id)
    }

    pub fn trees(&self) -> impl Iterator<Item = &TaskTree> {
        self.trees.values()
    }

    pub fn estimates(&self) -> &Estimates {
        &self.estimates
    }

    pub fn cycles(&self) -> &[CycleReport] {
        &self.cycles
    }

    pub fn goal_transitions(&self) -> &[crate::comms::action::GoalTransition] {
        self.broker.transitions()
    }

    pub fn is_estopped(&self) -> bool {
        self.estopped
    }

    pub fn time(&self) -> f64 {
        self.site.time()
    }

    pub fn step_index(&self) -> u64 {
        self.site.step_index()
    }

    /// True while at least one tree is running.
    pub fn busy(&self) -> bool {
        self.trees.values().any(|t| t.status() == BtStatus::Running)
    }

    /// Drain the events produced since the last call.
    pub fn take_events(&mut self) -> Vec<Event> {
        std::mem::take(&mut self.events)
    }

    fn dispatch(&mut self) -> (Dispatch<'_>, &mut BTreeMap<TaskId, TaskTree>) {
        let now = self.site.time();
        (
            Dispatch {
                broker: &mut self.broker,
                executions: &mut self.executions,
                site: &mut self.site,
                store: &self.store,
                estimates: &self.estimates,
                boards: &self.boards,
                now,
            },
            &mut self.trees,
        )
    }

    pub fn start_task(&mut self, task_id: TaskId) -> Result<(), SessionError> {
        if self.estopped {
            return Err(SessionError::EStopLatched);
        }
        let record = self.store.find_task(task_id).ok_or(SessionError::TaskNotFound(task_id))?;
        let tree = parse_task_sequence_value(&record.task_sequence, task_id)
            .map_err(|source| SessionError::Parse { task_id, source })?;
        for i in tree.leaf_indices() {
            if let NodeKind::Leaf(p) = tree.node_kind(i) {
                if self.registry.get(&p.subtask_name).is_none() {
                    return Err(SessionError::UnknownSubtask { task_id, subtask: p.subtask_name.clone() });
                }
            }
        }
        if let Some(busy) = self.trees.values().find(|t| t.status() == BtStatus::Running && t.model_name() == tree.model_name()) {
            return Err(SessionError::MachineBusy { machine: tree.model_name().to_string(), task_id: busy.task_id() });
        }
        self.boards.attach_local(task_id, tree.local_blackboard().clone());
        self.store.set_task_running(task_id, true);
        self.trees.insert(task_id, tree);
        self.tick_one(task_id)?;
        self.emit_goal_events();
        Ok(())
    }

    fn tick_one(&mut self, task_id: TaskId) -> Result<(), SessionError> {
        let (step, t) = (self.site.step_index(), self.site.time());
        let (mut dispatch, trees) = self.dispatch();
        let tree = trees.get_mut(&task_id).expect("tree exists");
        let before = tree.status();
        let now = dispatch.now;
        let status = tree.tick(&mut ExecutionContext { client: &mut dispatch, now })?;
        let model_name = tree.model_name().to_string();
        if status != before {
            self.events.push(Event::Task { step, t, task_id, model_name, status });
        }
        if status.is_terminal() {
            self.store.set_task_running(task_id, false);
        }
        Ok(())
    }

    /// Advance the whole session by one simulation step.
    pub fn step(&mut self) -> Result<(), SessionError> {
        let dt = self.site.config.dt;
        let now = self.site.time();
        let origin = self.site.config.geo_origin;
        let up = self.site.link(IC120).map(|l| decode_all(&l.drain_telemetry())).unwrap_or_default();
        self.estimates.dump.ingest(&up, dt, &origin);
        let up = self.site.link(ZX200).map(|l| decode_all(&l.drain_telemetry())).unwrap_or_default();
        self.estimates.ingest_excavator(&up);

        if !self.estopped {
            let writes = self.sensing.run(&self.site, &mut self.store, self.boards.global(), now)?;
            let step = self.site.step_index();
            for w in writes {
                self.events.push(Event::Param {
                    step,
                    t: now,
                    model_name: w.model_name,
                    record_name: w.record_name,
                    revision: w.revision,
                });
            }
            self.observe_flags(FlagSource::Sensing)?;
        }

        let running: Vec<TaskId> =
            self.trees.iter().filter(|(_, t)| t.status() == BtStatus::Running).map(|(&id, _)| id).collect();
        for task_id in running {
            self.tick_one(task_id)?;
        }
        self.emit_goal_events();
        self.broker.prune_terminal();

        self.run_goals(now)?;
        self.emit_goal_events();

        let commands = self.site.step();
        self.file_dumps();
        self.events.push(Event::Step {
            snapshot: self.site.snapshot(),
            estimate: self.estimates.dump.pose(),
            commands,
        });
        Ok(())
    }

    fn run_goals(&mut self, now: f64) -> Result<(), SessionError> {
        let dt = self.site.config.dt;
        for id in self.broker.open_goals() {
            let goal = self.broker.goal(id).expect("open goal exists").clone();
            let mut ctx = ServerCtx {
                now,
                dt,
                site: &mut self.site,
                store: &self.store,
                estimates: &self.estimates,
                global: self.boards.global(),
                local: self.boards.local(goal.task_id),
            };
            if goal.state == ActionState::Accepted {
                self.broker.apply(id, ActionEvent::Start).expect("accepted goal starts");
                let server = self.registry.get(&goal.server).expect("broker only knows registered servers");
                match server.start(&goal.payload, &mut ctx) {
                    Ok(exec) => {
                        self.executions.insert(id, exec);
                    }
                    Err(e) => {
                        self.broker.set_message(id, e.to_string());
                        self.broker.apply(id, ActionEvent::Abort).expect("executing goal aborts");
                    }
                }
            }
            if let Some(exec) = self.executions.get_mut(&id) {
                match exec.step(&mut ctx) {
                    Progress::Running(left) => self.broker.set_feedback(id, left),
                    Progress::Succeeded(msg) => {
                        self.executions.remove(&id);
                        self.broker.set_message(id, msg);
                        self.broker.apply(id, ActionEvent::Succeed).expect("executing goal succeeds");
                    }
                    Progress::Aborted(msg) => {
                        self.executions.remove(&id);
                        self.broker.set_message(id, msg);
                        self.broker.apply(id, ActionEvent::Abort).expect("executing goal aborts");
                    }
                }
            }
            self.observe_flags(FlagSource::Task(goal.task_id))?;
        }
        Ok(())
    }

    fn emit_goal_events(&mut self) {
        let (step, t) = (self.site.step_index(), self.site.time());
        for tr in &self.broker.transitions()[self.seen_transitions..] {
            let g = self.broker.goal(tr.goal_id);
            self.events.push(Event::Goal {
                step,
                t,
                goal_id: tr.goal_id,
                task_id: g.map(|g| g.task_id).unwrap_or_default(),
                server: g.map(|g| g.server.clone()).unwrap_or_default(),
                record_name: g.map(|g| g.payload.record_name.clone()).unwrap_or_default(),
                from: tr.from,
                to: tr.to,
                message: if tr.to.is_terminal() { g.and_then(|g| g.message.clone()) } else { None },
            });
        }
        self.seen_transitions = self.broker.transitions().len();
    }

    /// Record every global value that changed since the last look.
    fn observe_flags(&mut self, source: FlagSource) -> Result<(), SessionError> {
        let (step, t) = (self.site.step_index(), self.site.time());
        let mut departed = false;
        for (key, entry) in self.boards.global().snapshot() {
            let from = self.last_flags.get(&key).cloned();
            if from.as_ref() == Some(&entry.value) {
                continue;
            }
            self.last_flags.insert(key.clone(), entry.value.clone());
            let doc = json!({ "value": serde_json::to_value(&entry.value).expect("values serialize") });
            self.store.upsert_parameter(ParameterRecord::new(GLOBAL_BLACKBOARD_MODEL, ParamType::Dynamic, &key, doc))?;
            departed |= key == ARRIVAL_FLG && from == Some(Value::Bool(true)) && entry.value == Value::Bool(false);
            self.events.push(Event::Flag(FlagChange { step, t, key, from, to: entry.value, source }));
        }
        if departed {
            self.on_departure(t)?;
            self.observe_flags(FlagSource::Policy)?;
        }
        Ok(())
    }

    fn on_departure(&mut self, t: f64) -> Result<(), SessionError> {
        let excavated = self.site.ledger.excavated - self.excavated_mark;
        self.excavated_mark = self.site.ledger.excavated;
        let cycle = self.cycles.len() as u32 + 1;
        self.cycles.push(CycleReport { cycle, departed_at: t, vessel_load: self.site.dump.vessel_load, excavated, dumps: vec![] });
        let enough = matches!(self.policy, CyclePolicy::Cycles(n) if cycle >= n);
        let exhausted = self.boards.global().get_bool(SENSING_CHECK_MOUND_FLG) == Some(true);
        if enough || exhausted {
            self.boards.global().set(CONTINUE_FLG, false, t)?;
        }
        Ok(())
    }

    /// File new site dumps under the cycle whose load they came from.
    fn file_dumps(&mut self) {
        let filed: usize = self.cycles.iter().map(|c| c.dumps.len()).sum();
        for d in self.site.ledger.dumps.iter().skip(filed).cloned().collect::<Vec<_>>() {
            match self.cycles.last_mut() {
                Some(c) => c.dumps.push(d),
                None => break,
            }
        }
    }

    /// Operator override of an allow-listed global flag.
    pub fn set_flag(&mut self, key: &str, value: Value) -> Result<u64, SessionError> {
        if !OPERATOR_FLAGS.contains(&key) {
            return Err(SessionError::FlagNotOverridable(key.to_string()));
        }
        let revision = self.boards.global().set(key, value, self.site.time())?;
        self.observe_flags(FlagSource::Operator)?;
        Ok(revision)
    }

    /// Cancel every running tree, stop every machine and latch.
    pub fn emergency_stop(&mut self) -> EStopReport {
        let (step, t) = (self.site.step_index(), self.site.time());
        let mut reports = vec![];
        let mut canceled = vec![];
        {
            let (mut dispatch, trees) = self.dispatch();
            let now = dispatch.now;
            for tree in trees.values_mut() {
                let mut ctx = ExecutionContext { client: &mut dispatch, now };
                if let Ok(report) = tree.cancel(&mut ctx) {
                    reports.push(report);
                    canceled.push((tree.task_id(), tree.model_name().to_string()));
                }
            }
            for id in dispatch.broker.open_goals() {
                dispatch.cancel_goal(id);
            }
        }
        for (task_id, model_name) in canceled {
            self.store.set_task_running(task_id, false);
            self.events.push(Event::Task { step, t, task_id, model_name, status: BtStatus::Canceled });
        }
        self.emit_goal_events();
        self.broker.prune_terminal();
        self.site.estop_all();
        self.estopped = true;
        self.events.push(Event::EStop { step, t, reports: reports.clone() });
        EStopReport { step, t, reports }
    }

    pub fn state(&self) -> SessionState {
        SessionState {
            snapshot: self.site.snapshot(),
            estimate: self.estimates.dump.pose(),
            gnss_accepted: self.estimates.dump.gnss_accepted,
            gnss_rejected: self.estimates.dump.gnss_rejected,
            tasks: self
                .trees
                .values()
                .map(|t| TaskState {
                    task_id: t.task_id(),
                    model_name: t.model_name().to_string(),
                    status: t.status(),
                    active_leaf: t.active_leaf().cloned(),
                })
                .collect(),
            goals: self.broker.goals().filter(|g| !g.state.is_terminal()).cloned().collect(),
            estopped: self.estopped,
            departures: self.cycles.len() as u32,
        }
    }

    pub fn tasks(&self) -> Vec<TaskSummary> {
        self.store
            .tasks()
            .map(|r| TaskSummary {
                task_id: r.task_id,
                model_name: r.model_name.clone(),
                description: r.description.clone(),
                status: self.trees.get(&r.task_id).map(|t| t.status()),
            })
            .collect()
    }

    pub fn blackboard(&self) -> BlackboardView {
        BlackboardView {
            global: self.boards.global().snapshot(),
            local: self.trees.iter().map(|(&id, t)| (id, t.local_blackboard().snapshot())).collect(),
        }
    }

}
