//! Headless runs of the load-haul-dump scenario.

use serde::Serialize;
use thiserror::Error;

use super::fixture::{scenario_jsonl, IC120_TASK, ZX200_TASK};
use super::session::{CycleReport, CyclePolicy, Event, FlagChange, Session, SessionError, TaskState};
use crate::blackboard::FlagSet;
use crate::bt::BtStatus;
use crate::comms::{ActionState, TaskId};
use crate::sim::{SiteConfig, Volumes};
use crate::store::{ParamStore, StoreError};

/// Dumps closer than this to the dump spot behind Point 5 count as dumped there.
pub const DUMP_SITE_RADIUS: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub site: SiteConfig,
    pub policy: CyclePolicy,
    /// Fixture text; the generated scenario when absent.
    pub fixture: Option<String>,
    /// Simulation-time budget in seconds.
    pub max_sim_time: f64,
}

impl ScenarioConfig {
    pub fn new(cycles: u32, seed: u64) -> Self {
        let site = SiteConfig { seed, ..SiteConfig::default() };
        Self { site, policy: CyclePolicy::Cycles(cycles), fixture: None, max_sim_time: 900.0 * cycles.max(1) as f64 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("scenario did not finish within {budget} s of simulated time; aborted goals: {diagnostics:?}")]
    Timeout { budget: f64, state: Vec<TaskState>, diagnostics: Vec<String> },
    #[error("task {task_id} failed: {diagnostics:?}")]
    TaskFailed { task_id: TaskId, diagnostics: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub seed: u64,
    pub policy: CyclePolicy,
    pub sim_time: f64,
    pub steps: u64,
    pub initial_flags: FlagSet,
    pub final_flags: FlagSet,
    pub flag_trace: Vec<FlagChange>,
    pub cycles: Vec<CycleReport>,
    pub initial_soil: f64,
    pub excavated: f64,
    pub loaded: f64,
    pub spilled: f64,
    pub dumped: f64,
    /// Dumped volume that landed at the Point 5 dump spot.
    pub dumped_at_point5: f64,
    pub volumes: Volumes,
    pub residual: f64,
    pub tasks: Vec<TaskState>,
    pub gnss_accepted: u64,
    pub gnss_rejected: u64,
}

/// Load the fixture, start both tasks and step until both trees finish.
/// Every event is passed to `sink` in order.
pub fn run_scenario(cfg: &ScenarioConfig, sink: &mut dyn FnMut(&Event)) -> Result<ScenarioReport, ScenarioError> {
    let mut store = ParamStore::in_memory();
    let text = cfg.fixture.clone().unwrap_or_else(|| scenario_jsonl(&cfg.site));
    store.load_fixture_str(&text)?;
    let mut session = Session::new(cfg.site.clone(), store, cfg.policy)?;
    let initial_flags = FlagSet::from_blackboard(session.global());
    let initial_soil = session.site().ledger.initial_total;
    let mut flag_trace = vec![];
    let mut aborts: Vec<(TaskId, String)> = vec![];

    let mut drain = |session: &mut Session, flag_trace: &mut Vec<FlagChange>, aborts: &mut Vec<(TaskId, String)>| {
        for e in session.take_events() {
            match &e {
                Event::Flag(f) => flag_trace.push(f.clone()),
                Event::Goal { task_id, server, record_name, to: ActionState::Aborted, message, .. } => {
                    aborts.push((*task_id, format!("{server}({record_name}): {}", message.clone().unwrap_or_default())));
                }
                _ => {}
            }
            sink(&e);
        }
    };

    session.start_task(IC120_TASK)?;
    session.start_task(ZX200_TASK)?;
    drain(&mut session, &mut flag_trace, &mut aborts);
    while session.busy() {
        if session.time() > cfg.max_sim_time {
            let diagnostics = aborts.into_iter().map(|(_, m)| m).collect();
            return Err(ScenarioError::Timeout { budget: cfg.max_sim_time, state: session.state().tasks, diagnostics });
        }
        session.step()?;
        drain(&mut session, &mut flag_trace, &mut aborts);
        if let Some(t) = session.trees().find(|t| t.status() == BtStatus::Failure) {
            let task_id = t.task_id();
            let diagnostics = aborts.iter().filter(|(id, _)| *id == task_id).map(|(_, m)| m.clone()).collect();
            return Err(ScenarioError::TaskFailed { task_id, diagnostics });
        }
    }

    let site = session.site();
    let cfg5 = site.config.point(5);
    let spot = site.dump_spot(cfg5);
    let dumped_at_point5 = site
        .ledger
        .dumps
        .iter()
        .filter(|d| (d.at[0] - spot[0]).hypot(d.at[1] - spot[1]) <= DUMP_SITE_RADIUS)
        .map(|d| d.volume)
        .sum();
    let volumes = site.volumes();
    let state = session.state();
    Ok(ScenarioReport {
        seed: cfg.site.seed,
        policy: cfg.policy,
        sim_time: session.time(),
        steps: session.step_index(),
        initial_flags,
        final_flags: FlagSet::from_blackboard(session.global()),
        flag_trace,
        cycles: session.cycles().to_vec(),
        initial_soil,
        excavated: site.ledger.excavated,
        loaded: site.ledger.loaded,
        spilled: site.ledger.spilled,
        dumped: site.ledger.dumped(),
        dumped_at_point5,
        residual: volumes.residual,
        volumes,
        tasks: state.tasks,
        gnss_accepted: state.gnss_accepted,
        gnss_rejected: state.gnss_rejected,
    })
}
