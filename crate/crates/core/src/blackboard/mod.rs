//! Typed key-value blackboards.
//!
//! One global instance is shared by every task; each task owns a local one.
//! Every write is atomic and bumps a per-key revision, so readers can tell
//! stale values from fresh ones.

pub mod flags;
pub mod sync;

use std::collections::BTreeMap;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comms::TaskId;

pub use flags::{FlagSet, FLAG_TABLE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseValue {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Pose(PoseValue),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Bool,
    Int,
    Float,
    Str,
    Pose,
}

impl Value {
    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Bool(_) => ValueKind::Bool,
            Value::Int(_) => ValueKind::Int,
            Value::Float(_) => ValueKind::Float,
            Value::Str(_) => ValueKind::Str,
            Value::Pose(_) => ValueKind::Pose,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    /// Parse a literal as written in a task sequence: `true`, `false`,
    /// integers, floats, otherwise a string (surrounding quotes stripped).
    pub fn parse_literal(text: &str) -> Value {
        let t = text.trim();
        match t {
            "true" => return Value::Bool(true),
            "false" => return Value::Bool(false),
            _ => {}
        }
        if let Ok(i) = t.parse::<i64>() {
            return Value::Int(i);
        }
        if let Ok(f) = t.parse::<f64>() {
            return Value::Float(f);
        }
        Value::Str(t.trim_matches('"').to_string())
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Float(x)
    }
}

impl From<i64> for Value {
    fn from(x: i64) -> Self {
        Value::Int(x)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub value: Value,
    pub revision: u64,
    pub updated_at: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BlackboardError {
    #[error("key `{key}` holds {existing:?}, cannot store {attempted:?}")]
    TypeMismatch { key: String, existing: ValueKind, attempted: ValueKind },
}

#[derive(Debug, Default)]
struct Slot {
    entry: Option<Entry>,
    last_revision: u64,
}

/// A cloneable handle to one blackboard instance.
#[derive(Debug, Clone, Default)]
pub struct Blackboard {
    inner: Arc<RwLock<BTreeMap<String, Slot>>>,
}

impl Blackboard {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &str) -> Option<Entry> {
        self.inner.read().get(key).and_then(|s| s.entry.clone())
    }

    pub fn value(&self, key: &str) -> Option<Value> {
        self.get(key).map(|e| e.value)
    }

    pub fn get_bool(&self, key: &str) -> Option<bool> {
        self.value(key).and_then(|v| v.as_bool())
    }

    pub fn set(&self, key: &str, value: impl Into<Value>, now: f64) -> Result<u64, BlackboardError> {
        let value = value.into();
        let mut map = self.inner.write();
        let slot = map.entry(key.to_string()).or_default();
        if let Some(existing) = &slot.entry {
            if existing.value.kind() != value.kind() {
                return Err(BlackboardError::TypeMismatch {
                    key: key.to_string(),
                    existing: existing.value.kind(),
                    attempted: value.kind(),
                });
            }
        }
        slot.last_revision += 1;
        let revision = slot.last_revision;
        slot.entry = Some(Entry { value, revision, updated_at: now });
        Ok(revision)
    }

    /// Remove a key so that it may be re-typed. Revisions keep counting.
    pub fn clear(&self, key: &str) {
        if let Some(slot) = self.inner.write().get_mut(key) {
            slot.entry = None;
        }
    }

    pub fn snapshot(&self) -> BTreeMap<String, Entry> {
        self.inner
            .read()
            .iter()
            .filter_map(|(k, s)| s.entry.clone().map(|e| (k.clone(), e)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.inner.read().values().filter(|s| s.entry.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_instance(&self, other: &Blackboard) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scope {
    Global,
    Local(TaskId),
}

/// The global blackboard plus handles to every task's local blackboard.
#[derive(Debug, Clone, Default)]
pub struct Blackboards {
    global: Blackboard,
    locals: BTreeMap<TaskId, Blackboard>,
}

impl Blackboards {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn global(&self) -> &Blackboard {
        &self.global
    }

    pub fn attach_local(&mut self, task: TaskId, local: Blackboard) {
        self.locals.insert(task, local);
    }

    pub fn detach_local(&mut self, task: TaskId) {
        self.locals.remove(&task);
    }

    pub fn local(&self, task: TaskId) -> Option<&Blackboard> {
        self.locals.get(&task)
    }

    pub fn scope(&self, scope: Scope) -> Option<&Blackboard> {
        match scope {
            Scope::Global => Some(&self.global),
            Scope::Local(t) => self.locals.get(&t),
        }
    }

    pub fn bb_get(&self, scope: Scope, key: &str) -> Option<Entry> {
        self.scope(scope).and_then(|b| b.get(key))
    }

    /// Write into a scope. Writing to a local scope that has not been
    /// attached yet creates it.
    pub fn bb_set(&mut self, scope: Scope, key: &str, value: impl Into<Value>, now: f64) -> Result<u64, BlackboardError> {
        match scope {
            Scope::Global => self.global.set(key, value, now),
            Scope::Local(t) => self.locals.entry(t).or_default().set(key, value, now),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unwritten_key_is_absent() {
        assert_eq!(Blackboard::new().get("nope"), None);
    }

    #[test]
    fn first_write_has_revision_one() {
        let bb = Blackboard::new();
        assert_eq!(bb.set("CONTINUE_FLG", true, 0.0), Ok(1));
        let e = bb.get("CONTINUE_FLG").unwrap();
        assert_eq!((e.value, e.revision), (Value::Bool(true), 1));
    }

    #[test]
    fn type_is_stable_until_cleared() {
        let bb = Blackboard::new();
        bb.set("x", 1.5, 0.0).unwrap();
        assert!(matches!(bb.set("x", "a", 0.0), Err(BlackboardError::TypeMismatch { .. })));
        bb.clear("x");
        assert_eq!(bb.get("x"), None);
        assert_eq!(bb.set("x", "a", 0.0), Ok(2));
    }

    #[test]
    fn thousand_sets_reach_revision_thousand() {
        let bb = Blackboard::new();
        let mut last = 0;
        for i in 0..1000 {
            last = bb.set("n", i as i64, i as f64).unwrap();
        }
        assert_eq!(last, 1000);
        assert_eq!(bb.get("n").unwrap().revision, 1000);
    }

    #[test]
    fn global_visible_across_tasks_locals_isolated() {
        let mut bbs = Blackboards::new();
        bbs.attach_local(1, Blackboard::new());
        bbs.attach_local(2, Blackboard::new());
        bbs.bb_set(Scope::Global, "ARRIVAL_FLG", true, 0.0).unwrap();
        assert_eq!(bbs.bb_get(Scope::Global, "ARRIVAL_FLG").unwrap().value, Value::Bool(true));
        bbs.bb_set(Scope::Local(1), "k", 3i64, 0.0).unwrap();
        assert!(bbs.bb_get(Scope::Local(2), "k").is_none());
        assert!(bbs.bb_get(Scope::Local(1), "k").is_some());
    }

    #[test]
    fn literal_parsing() {
        assert_eq!(Value::parse_literal("true"), Value::Bool(true));
        assert_eq!(Value::parse_literal(" 3 "), Value::Int(3));
        assert_eq!(Value::parse_literal("0.5"), Value::Float(0.5));
        assert_eq!(Value::parse_literal("\"abc\""), Value::Str("abc".into()));
    }

    #[test]
    fn snapshot_json_shape() {
        let bb = Blackboard::new();
        bb.set("ARRIVAL_FLG", false, 1.5).unwrap();
        let json = serde_json::to_string(&bb.snapshot()).unwrap();
        assert_eq!(json, r#"{"ARRIVAL_FLG":{"value":false,"revision":1,"updated_at":1.5}}"#);
    }
}
