//! The three synchronization subtasks between global and local scope.
//!
//! The goal's `record_name` names the key. The writer also accepts
//! `KEY=literal`, which stores the literal locally before publishing it, and
//! the checker requires `KEY=expected`.

use thiserror::Error;

use super::{Blackboard, BlackboardError, Value};

pub const READER: &str = "subtask_blackboard_value_reader";
pub const WRITER: &str = "subtask_global_value_writer";
pub const CHECKER: &str = "subtask_blackboard_value_checker";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SyncError {
    #[error("key `{0}` is absent")]
    KeyAbsent(String),
    #[error("key `{key}` is {actual:?}, expected {expected:?}")]
    Mismatch { key: String, expected: Value, actual: Value },
    #[error("malformed goal `{0}`")]
    MalformedGoal(String),
    #[error(transparent)]
    Blackboard(#[from] BlackboardError),
}

/// Split `KEY=literal` into its parts; a bare `KEY` yields no literal.
pub fn parse_goal(record_name: &str) -> Result<(String, Option<Value>), SyncError> {
    let (key, literal) = match record_name.split_once('=') {
        Some((k, v)) => (k.trim(), Some(Value::parse_literal(v))),
        None => (record_name.trim(), None),
    };
    if key.is_empty() {
        return Err(SyncError::MalformedGoal(record_name.to_string()));
    }
    Ok((key.to_string(), literal))
}

/// global[key] -> local[key]
pub fn read_into_local(global: &Blackboard, local: &Blackboard, key: &str, now: f64) -> Result<u64, SyncError> {
    let entry = global.get(key).ok_or_else(|| SyncError::KeyAbsent(key.to_string()))?;
    Ok(local.set(key, entry.value, now)?)
}

/// local[key] -> global[key]
pub fn write_to_global(local: &Blackboard, global: &Blackboard, key: &str, now: f64) -> Result<u64, SyncError> {
    let entry = local.get(key).ok_or_else(|| SyncError::KeyAbsent(key.to_string()))?;
    Ok(global.set(key, entry.value, now)?)
}

/// Compare local[key] with `expected` and record the outcome under `KEY_check`.
pub fn check_local(local: &Blackboard, key: &str, expected: &Value, now: f64) -> Result<(), SyncError> {
    let actual = local.value(key);
    let matched = actual.as_ref() == Some(expected);
    local.set(&format!("{key}_check"), matched, now)?;
    match actual {
        None => Err(SyncError::KeyAbsent(key.to_string())),
        Some(_) if matched => Ok(()),
        Some(actual) => Err(SyncError::Mismatch { key: key.to_string(), expected: expected.clone(), actual }),
    }
}

/// Run one synchronization goal against the two scopes.
pub fn run(server: &str, record_name: &str, global: &Blackboard, local: &Blackboard, now: f64) -> Result<(), SyncError> {
    let (key, literal) = parse_goal(record_name)?;
    match server {
        READER => read_into_local(global, local, &key, now).map(|_| ()),
        WRITER => {
            if let Some(v) = literal {
                local.set(&key, v, now)?;
            }
            write_to_global(local, global, &key, now).map(|_| ())
        }
        CHECKER => {
            let expected = literal.ok_or_else(|| SyncError::MalformedGoal(record_name.to_string()))?;
            check_local(local, &key, &expected, now)
        }
        other => Err(SyncError::MalformedGoal(format!("unknown synchronization server {other}"))),
    }
}
