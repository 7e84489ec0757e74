//! Behavior-tree engine.
//!
//! Trees are parsed from task-sequence JSON, ticked with memory semantics
//! (composites resume at the child that was running), and canceled from the
//! root downwards. Leaf nodes drive subtask servers through an
//! [`ActionClient`]; blackboard gates read only the task's local blackboard.

mod engine;
pub(crate) mod parse;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blackboard::{Blackboard, Value};
use crate::comms::{ActionState, GoalId, GoalPayload, SendGoalError, TaskId};

pub use engine::{CancelEvent, CancelPhase, CancelReport, LeafCancel};
pub use parse::{node_to_json, parse_node, parse_task_sequence, task_sequence_to_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BtStatus {
    Success,
    Failure,
    Running,
    Canceled,
    Idle,
}

impl BtStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, BtStatus::Success | BtStatus::Failure | BtStatus::Canceled)
    }

    /// Status a leaf reports for the latest state of its goal.
    pub fn from_goal_state(state: ActionState) -> BtStatus {
        match state {
            ActionState::Requested | ActionState::Accepted | ActionState::Executing | ActionState::Canceling => {
                BtStatus::Running
            }
            ActionState::Succeeded => BtStatus::Success,
            ActionState::Aborted => BtStatus::Failure,
            ActionState::Canceled => BtStatus::Canceled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeafParams {
    pub model_name: String,
    pub record_name: String,
    pub subtask_name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Sequence,
    Fallback,
    Parallel { threshold: usize },
    Retry { max_attempts: u32 },
    Leaf(LeafParams),
    /// Condition on the local blackboard: SUCCESS when `key` holds `expected`.
    BlackboardGate { key: String, expected: Value },
}

impl NodeKind {
    pub fn name(&self) -> &'static str {
        match self {
            NodeKind::Sequence => "Sequence",
            NodeKind::Fallback => "Fallback",
            NodeKind::Parallel { .. } => "Parallel",
            NodeKind::Retry { .. } => "Retry",
            NodeKind::Leaf(_) => "Leaf",
            NodeKind::BlackboardGate { .. } => "BlackboardGate",
        }
    }

    pub fn is_composite(&self) -> bool {
        !matches!(self, NodeKind::Leaf(_) | NodeKind::BlackboardGate { .. })
    }
}

/// Declarative tree as written in a task sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct BtNode {
    pub kind: NodeKind,
    pub children: Vec<BtNode>,
}

impl BtNode {
    pub fn sequence(children: Vec<BtNode>) -> Self {
        Self { kind: NodeKind::Sequence, children }
    }

    pub fn fallback(children: Vec<BtNode>) -> Self {
        Self { kind: NodeKind::Fallback, children }
    }

    pub fn parallel(threshold: usize, children: Vec<BtNode>) -> Self {
        Self { kind: NodeKind::Parallel { threshold }, children }
    }

    pub fn retry(max_attempts: u32, child: BtNode) -> Self {
        Self { kind: NodeKind::Retry { max_attempts }, children: vec![child] }
    }

    pub fn leaf(model_name: &str, record_name: &str, subtask_name: &str) -> Self {
        Self {
            kind: NodeKind::Leaf(LeafParams {
                model_name: model_name.into(),
                record_name: record_name.into(),
                subtask_name: subtask_name.into(),
            }),
            children: vec![],
        }
    }

    pub fn gate(key: &str, expected: impl Into<Value>) -> Self {
        Self { kind: NodeKind::BlackboardGate { key: key.into(), expected: expected.into() }, children: vec![] }
    }

    pub fn count(&self) -> usize {
        1 + self.children.iter().map(BtNode::count).sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("malformed task sequence: {0}")]
    MalformedDocument(String),
    #[error("unknown node kind `{0}`")]
    UnknownNodeKind(String),
    #[error("one task may actuate only one machine, found `{0}` and `{1}`")]
    MixedMachines(String, String),
    #[error("task sequence contains no leaf nodes")]
    EmptyTree,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TickError {
    #[error("leaf names unregistered subtask server `{0}`")]
    UnregisteredSubtask(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CancelError {
    #[error("tree is not running (status {0:?})")]
    NotRunning(BtStatus),
}

/// Client side of the action protocol as seen by leaf nodes.
pub trait ActionClient {
    fn send_goal(&mut self, task: TaskId, server: &str, payload: GoalPayload) -> Result<GoalId, SendGoalError>;

    fn goal_state(&self, goal: GoalId) -> Option<ActionState>;

    /// Request cancellation and return once the server has reported its
    /// cancel result.
    fn cancel_goal(&mut self, goal: GoalId) -> ActionState;
}

pub struct ExecutionContext<'a> {
    pub client: &'a mut dyn ActionClient,
    pub now: f64,
}

#[derive(Debug, Clone)]
struct RuntimeNode {
    kind: NodeKind,
    children: Vec<usize>,
    parent: Option<usize>,
    status: BtStatus,
    goal: Option<GoalId>,
    attempts: u32,
}

/// A parsed task plus its runtime state.
#[derive(Debug, Clone)]
pub struct TaskTree {
    task_id: TaskId,
    model_name: String,
    spec: BtNode,
    nodes: Vec<RuntimeNode>,
    local: Blackboard,
}

impl TaskTree {
    /// Validate a declarative tree and instantiate its runtime state.
    pub fn new(task_id: TaskId, root: BtNode) -> Result<Self, ParseError> {
        let model_name = parse::validate(&root)?;
        let mut nodes = Vec::with_capacity(root.count());
        fn flatten(node: &BtNode, parent: Option<usize>, out: &mut Vec<RuntimeNode>) -> usize {
            let idx = out.len();
            out.push(RuntimeNode {
                kind: node.kind.clone(),
                children: vec![],
                parent,
                status: BtStatus::Idle,
                goal: None,
                attempts: 0,
            });
            let kids: Vec<usize> = node.children.iter().map(|c| flatten(c, Some(idx), out)).collect();
            out[idx].children = kids;
            idx
        }
        flatten(&root, None, &mut nodes);
        Ok(Self { task_id, model_name, spec: root, nodes, local: Blackboard::new() })
    }

    pub fn task_id(&self) -> TaskId {
        self.task_id
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    pub fn spec(&self) -> &BtNode {
        &self.spec
    }

    pub fn local_blackboard(&self) -> &Blackboard {
        &self.local
    }

    pub fn status(&self) -> BtStatus {
        self.nodes[0].status
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_status(&self, idx: usize) -> BtStatus {
        self.nodes[idx].status
    }

    pub fn node_kind(&self, idx: usize) -> &NodeKind {
        &self.nodes[idx].kind
    }

    pub fn parent(&self, idx: usize) -> Option<usize> {
        self.nodes[idx].parent
    }

    pub fn children(&self, idx: usize) -> &[usize] {
        &self.nodes[idx].children
    }

    /// Open goal of a leaf, if any.
    pub fn leaf_goal(&self, idx: usize) -> Option<GoalId> {
        self.nodes[idx].goal
    }

    pub fn leaf_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| matches!(self.nodes[i].kind, NodeKind::Leaf(_)))
    }

    /// Leaves currently in RUNNING state.
    pub fn running_leaves(&self) -> Vec<usize> {
        self.leaf_indices().filter(|&i| self.nodes[i].status == BtStatus::Running).collect()
    }

    /// Leaf parameters of the deepest running leaf, for status displays.
    pub fn active_leaf(&self) -> Option<&LeafParams> {
        self.running_leaves().last().and_then(|&i| match &self.nodes[i].kind {
            NodeKind::Leaf(p) => Some(p),
            _ => None,
        })
    }
}
