//! The machine boundary: frame codec, per-machine queues and the action
//! protocol used between leaf nodes and subtask servers.

pub mod action;
pub mod codec;
pub mod link;
pub mod vectors;

pub use action::{
    action_transition, ActionEvent, ActionGoal, ActionState, GoalBroker, GoalId, GoalPayload, IllegalTransition,
    SendGoalError, TaskId,
};
pub use codec::{decode, encode, CodecError, ControlFrame, Message};
pub use link::MachineLink;
pub use vectors::{conformance_vectors, conformance_vectors_jsonl, ConformanceVector};
