//! Goal / cancel / feedback / result protocol between leaf nodes and
//! subtask servers.
//!
//! ```text
//! REQUESTED --accept--> ACCEPTED --start--> EXECUTING --succeed--> SUCCEEDED
//!                          |                   |  \----abort-----> ABORTED
//!                          |                   |
//!                          +--cancel_request---+--> CANCELING --cancel_done--> CANCELED
//!                                                       \--abort--> ABORTED
//! ```

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type GoalId = u64;
pub type TaskId = i64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActionState {
    Requested,
    Accepted,
    Executing,
    Canceling,
    Succeeded,
    Aborted,
    Canceled,
}

impl ActionState {
    pub fn is_terminal(self) -> bool {
        matches!(self, ActionState::Succeeded | ActionState::Aborted | ActionState::Canceled)
    }

    pub fn is_active(self) -> bool {
        !self.is_terminal() && self != ActionState::Requested
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionEvent {
    Accept,
    Start,
    Succeed,
    Abort,
    CancelRequest,
    CancelDone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("illegal transition: {event:?} in state {state:?}")]
pub struct IllegalTransition {
    pub state: ActionState,
    pub event: ActionEvent,
}

pub fn action_transition(state: ActionState, event: ActionEvent) -> Result<ActionState, IllegalTransition> {
    use ActionEvent as E;
    use ActionState as S;
    let next = match (state, event) {
        (S::Requested, E::Accept) => S::Accepted,
        (S::Accepted, E::Start) => S::Executing,
        (S::Executing, E::Succeed) => S::Succeeded,
        (S::Executing, E::Abort) => S::Aborted,
        (S::Accepted | S::Executing, E::CancelRequest) => S::Canceling,
        (S::Canceling, E::CancelDone) => S::Canceled,
        (S::Canceling, E::Abort) => S::Aborted,
        _ => return Err(IllegalTransition { state, event }),
    };
    Ok(next)
}

/// The two keys a leaf forwards to its subtask server.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalPayload {
    pub model_name: String,
    pub record_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionGoal {
    pub goal_id: GoalId,
    pub server: String,
    pub task_id: TaskId,
    pub payload: GoalPayload,
    pub state: ActionState,
    /// Latest progress value reported by the server (e.g. metres remaining).
    pub feedback: Option<f64>,
    /// Result or abort reason.
    pub message: Option<String>,
}

impl ActionGoal {
    pub fn machine(&self) -> &str {
        &self.payload.model_name
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SendGoalError {
    #[error("no subtask server named `{0}` is registered")]
    Unregistered(String),
    #[error("server `{server}` already has an active goal for `{machine}`")]
    Rejected { server: String, machine: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalTransition {
    pub goal_id: GoalId,
    pub from: ActionState,
    pub to: ActionState,
}

/// Goal table shared by all clients and servers of one session.
///
/// Enforces at most one non-terminal goal per (server, machine) pair and
/// records every transition in order.
#[derive(Debug, Default)]
pub struct GoalBroker {
    next_id: GoalId,
    servers: BTreeSet<String>,
    goals: BTreeMap<GoalId, ActionGoal>,
    transitions: Vec<GoalTransition>,
}

impl GoalBroker {
    pub fn new() -> Self {
        Self { next_id: 1, ..Default::default() }
    }

    pub fn register(&mut self, server: impl Into<String>) {
        self.servers.insert(server.into());
    }

    pub fn is_registered(&self, server: &str) -> bool {
        self.servers.contains(server)
    }

    pub fn servers(&self) -> impl Iterator<Item = &str> {
        self.servers.iter().map(String::as_str)
    }

    pub fn send_goal(&mut self, task_id: TaskId, server: &str, payload: GoalPayload) -> Result<GoalId, SendGoalError> {
        if !self.is_registered(server) {
            return Err(SendGoalError::Unregistered(server.to_string()));
        }
        let busy = self
            .goals
            .values()
            .any(|g| g.server == server && g.payload.model_name == payload.model_name && !g.state.is_terminal());
        if busy {
            return Err(SendGoalError::Rejected { server: server.to_string(), machine: payload.model_name });
        }
        let goal_id = self.next_id;
        self.next_id += 1;
        self.goals.insert(
            goal_id,
            ActionGoal {
                goal_id,
                server: server.to_string(),
                task_id,
                payload,
                state: ActionState::Requested,
                feedback: None,
                message: None,
            },
        );
        self.apply(goal_id, ActionEvent::Accept).expect("fresh goal accepts");
        Ok(goal_id)
    }

    pub fn goal(&self, id: GoalId) -> Option<&ActionGoal> {
        self.goals.get(&id)
    }

    pub fn state(&self, id: GoalId) -> Option<ActionState> {
        self.goals.get(&id).map(|g| g.state)
    }

    pub fn apply(&mut self, id: GoalId, event: ActionEvent) -> Result<ActionState, IllegalTransition> {
        let goal = self
            .goals
            .get_mut(&id)
            .ok_or(IllegalTransition { state: ActionState::Requested, event })?;
        let from = goal.state;
        let to = action_transition(from, event)?;
        goal.state = to;
        self.transitions.push(GoalTransition { goal_id: id, from, to });
        Ok(to)
    }

    pub fn set_feedback(&mut self, id: GoalId, feedback: f64) {
        if let Some(g) = self.goals.get_mut(&id) {
            g.feedback = Some(feedback);
        }
    }

    pub fn set_message(&mut self, id: GoalId, message: impl Into<String>) {
        if let Some(g) = self.goals.get_mut(&id) {
            g.message = Some(message.into());
        }
    }

    /// Goals that a server still has to work on, in id order.
    pub fn open_goals(&self) -> Vec<GoalId> {
        self.goals
            .values()
            .filter(|g| matches!(g.state, ActionState::Accepted | ActionState::Executing))
            .map(|g| g.goal_id)
            .collect()
    }

    pub fn goals(&self) -> impl Iterator<Item = &ActionGoal> {
        self.goals.values()
    }

    pub fn transitions(&self) -> &[GoalTransition] {
        &self.transitions
    }

    /// Drop terminal goals, keeping the transition log.
    pub fn prune_terminal(&mut self) {
        self.goals.retain(|_, g| !g.state.is_terminal());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn payload(machine: &str) -> GoalPayload {
        GoalPayload { model_name: machine.into(), record_name: "r".into() }
    }

    #[test]
    fn start_moves_accepted_to_executing() {
        assert_eq!(action_transition(ActionState::Accepted, ActionEvent::Start), Ok(ActionState::Executing));
    }

    #[test]
    fn cancel_passes_through_canceling() {
        let s = action_transition(ActionState::Executing, ActionEvent::CancelRequest).unwrap();
        assert_eq!(s, ActionState::Canceling);
        assert_eq!(action_transition(s, ActionEvent::CancelDone), Ok(ActionState::Canceled));
    }

    #[test]
    fn terminal_states_reject_everything() {
        let events = [
            ActionEvent::Accept,
            ActionEvent::Start,
            ActionEvent::Succeed,
            ActionEvent::Abort,
            ActionEvent::CancelRequest,
            ActionEvent::CancelDone,
        ];
        for s in [ActionState::Succeeded, ActionState::Aborted, ActionState::Canceled] {
            for e in events {
                assert_eq!(action_transition(s, e), Err(IllegalTransition { state: s, event: e }));
            }
        }
    }

    #[test]
    fn one_active_goal_per_server_and_machine() {
        let mut b = GoalBroker::new();
        b.register("nav");
        let g = b.send_goal(1, "nav", payload("ic120")).unwrap();
        assert!(matches!(b.send_goal(2, "nav", payload("ic120")), Err(SendGoalError::Rejected { .. })));
        // a different machine on the same server is fine
        b.send_goal(2, "nav", payload("zx200")).unwrap();
        b.apply(g, ActionEvent::Start).unwrap();
        b.apply(g, ActionEvent::Succeed).unwrap();
        b.send_goal(1, "nav", payload("ic120")).unwrap();
    }

    #[test]
    fn unregistered_server() {
        let mut b = GoalBroker::new();
        assert_eq!(
            b.send_goal(1, "nope", payload("ic120")),
            Err(SendGoalError::Unregistered("nope".into()))
        );
    }
}
