//! Embedded document store for task and parameter records.
//!
//! Two collections, each persisted as one JSON-lines file (`tasks.jsonl`,
//! `parameters.jsonl`). Record identifiers come from a deterministic counter.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value as Json};
use thiserror::Error;

use crate::blackboard::flags::FLAG_TABLE;
use crate::bt::{self, ParseError};
use crate::comms::TaskId;

pub const TASKS_FILE: &str = "tasks.jsonl";
pub const PARAMETERS_FILE: &str = "parameters.jsonl";
/// Model name under which the global flags are stored.
pub const GLOBAL_BLACKBOARD_MODEL: &str = "global_blackboard";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    #[serde(rename = "_id", default)]
    pub id: u64,
    pub model_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub task_id: TaskId,
    pub task_sequence: Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamType {
    Dynamic,
    Static,
}

/// A parameter document. Everything besides the fixed keys lives in
/// `others` and is flattened into the stored document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterRecord {
    #[serde(rename = "_id", default)]
    pub id: u64,
    pub model_name: String,
    #[serde(rename = "type")]
    pub kind: ParamType,
    pub record_name: String,
    #[serde(flatten)]
    pub others: Map<String, Json>,
}

impl ParameterRecord {
    pub fn new(model_name: &str, kind: ParamType, record_name: &str, others: Json) -> Self {
        let others = match others {
            Json::Object(m) => m,
            Json::Null => Map::new(),
            other => {
                let mut m = Map::new();
                m.insert("value".into(), other);
                m
            }
        };
        Self { id: 0, model_name: model_name.into(), kind, record_name: record_name.into(), others }
    }

    pub fn key(&self) -> (String, String) {
        (self.model_name.clone(), self.record_name.clone())
    }

    pub fn field(&self, name: &str) -> Option<&Json> {
        self.others.get(name)
    }

    pub fn f64_field(&self, name: &str) -> Option<f64> {
        self.others.get(name).and_then(Json::as_f64)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StoreError {
    #[error("task_id {0} already exists")]
    DuplicateTaskId(TaskId),
    #[error("static record {model_name}/{record_name} cannot change while a task is running")]
    StaticWriteWhileRunning { model_name: String, record_name: String },
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("task {task_id}: {source}")]
    InvalidTaskSequence { task_id: TaskId, source: ParseError },
    #[error("fixture line {line}: {message}")]
    FixtureParse { line: usize, message: String },
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for StoreError {
    fn from(e: std::io::Error) -> Self {
        StoreError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FixtureCounts {
    pub tasks: usize,
    pub parameters: usize,
    pub flags: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct StoredParam {
    record: ParameterRecord,
    revision: u64,
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    dir: Option<PathBuf>,
    tasks: BTreeMap<TaskId, TaskRecord>,
    params: BTreeMap<(String, String), StoredParam>,
    next_id: u64,
    running: BTreeSet<TaskId>,
}

fn required(doc: &Map<String, Json>, key: &str) -> Result<(), StoreError> {
    match doc.get(key) {
        Some(Json::String(s)) if !s.is_empty() => Ok(()),
        Some(Json::Null) | None => Err(StoreError::SchemaViolation(format!("missing required field `{key}`"))),
        Some(Json::String(_)) => Err(StoreError::SchemaViolation(format!("`{key}` is empty"))),
        Some(_) => Err(StoreError::SchemaViolation(format!("`{key}` must be a string"))),
    }
}

impl ParamStore {
    pub fn in_memory() -> Self {
        Self { next_id: 1, ..Default::default() }
    }

    /// Open a store backed by `dir`, loading whatever is already there.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut store = Self { dir: Some(dir.clone()), next_id: 1, ..Default::default() };
        let read = |name: &str| -> Result<Vec<(usize, Json)>, StoreError> {
            let path = dir.join(name);
            if !path.exists() {
                return Ok(vec![]);
            }
            parse_lines(&fs::read_to_string(path)?)
        };
        for (line, doc) in read(TASKS_FILE)? {
            let rec: TaskRecord =
                serde_json::from_value(doc).map_err(|e| StoreError::FixtureParse { line, message: e.to_string() })?;
            store.next_id = store.next_id.max(rec.id + 1);
            store.tasks.insert(rec.task_id, rec);
        }
        for (line, doc) in read(PARAMETERS_FILE)? {
            let rec: ParameterRecord =
                serde_json::from_value(doc).map_err(|e| StoreError::FixtureParse { line, message: e.to_string() })?;
            store.next_id = store.next_id.max(rec.id + 1);
            store.params.insert(rec.key(), StoredParam { record: rec, revision: 1 });
        }
        Ok(store)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn take_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Keeps a caller-supplied `_id` when it is free, so dumps reload as they were.
    fn claim_id(&mut self, wanted: u64) -> u64 {
        let taken = self.tasks.values().any(|t| t.id == wanted) || self.params.values().any(|p| p.record.id == wanted);
        if wanted == 0 || taken {
            return self.take_id();
        }
        self.next_id = self.next_id.max(wanted + 1);
        wanted
    }

    pub fn find_task(&self, task_id: TaskId) -> Option<&TaskRecord> {
        self.tasks.get(&task_id)
    }

    pub fn tasks(&self) -> impl Iterator<Item = &TaskRecord> {
        self.tasks.values()
    }

    pub fn insert_task(&mut self, mut record: TaskRecord) -> Result<u64, StoreError> {
        if self.tasks.contains_key(&record.task_id) {
            return Err(StoreError::DuplicateTaskId(record.task_id));
        }
        if record.model_name.is_empty() {
            return Err(StoreError::SchemaViolation("missing required field `model_name`".into()));
        }
        let tree = bt::parse::parse_task_sequence_value(&record.task_sequence, record.task_id)
            .map_err(|source| StoreError::InvalidTaskSequence { task_id: record.task_id, source })?;
        if tree.model_name() != record.model_name {
            return Err(StoreError::SchemaViolation(format!(
                "task {} is for `{}` but its leaves actuate `{}`",
                record.task_id,
                record.model_name,
                tree.model_name()
            )));
        }
        record.id = self.claim_id(record.id);
        let id = record.id;
        self.tasks.insert(record.task_id, record);
        self.autoflush()?;
        Ok(id)
    }

    pub fn query_parameter(&self, model_name: &str, record_name: &str) -> Option<&ParameterRecord> {
        self.params.get(&(model_name.to_string(), record_name.to_string())).map(|s| &s.record)
    }

    pub fn revision(&self, model_name: &str, record_name: &str) -> Option<u64> {
        self.params.get(&(model_name.to_string(), record_name.to_string())).map(|s| s.revision)
    }

    pub fn parameters(&self) -> impl Iterator<Item = &ParameterRecord> {
        self.params.values().map(|s| &s.record)
    }

    /// Revisions of every static record, for immutability checks.
    pub fn static_revisions(&self) -> BTreeMap<(String, String), u64> {
        self.params
            .iter()
            .filter(|(_, s)| s.record.kind == ParamType::Static)
            .map(|(k, s)| (k.clone(), s.revision))
            .collect()
    }

    pub fn set_task_running(&mut self, task_id: TaskId, running: bool) {
        if running {
            self.running.insert(task_id);
        } else {
            self.running.remove(&task_id);
        }
    }

    pub fn any_task_running(&self) -> bool {
        !self.running.is_empty()
    }

    /// Insert or replace a parameter record and return its new revision.
    pub fn upsert_parameter(&mut self, mut record: ParameterRecord) -> Result<u64, StoreError> {
        if record.model_name.is_empty() {
            return Err(StoreError::SchemaViolation("missing required field `model_name`".into()));
        }
        if record.record_name.is_empty() {
            return Err(StoreError::SchemaViolation("missing required field `record_name`".into()));
        }
        let key = record.key();
        let existing = self.params.get(&key);
        let is_static = record.kind == ParamType::Static || existing.is_some_and(|s| s.record.kind == ParamType::Static);
        if is_static && self.any_task_running() {
            return Err(StoreError::StaticWriteWhileRunning { model_name: key.0, record_name: key.1 });
        }
        let revision = match existing {
            Some(s) => {
                record.id = s.record.id;
                s.revision + 1
            }
            None => {
                record.id = self.claim_id(record.id);
                1
            }
        };
        self.params.insert(key, StoredParam { record, revision });
        self.autoflush()?;
        Ok(revision)
    }

    /// Upsert from a raw document, checking the required fields first.
    pub fn upsert_parameter_json(&mut self, doc: Json) -> Result<u64, StoreError> {
        let obj = doc.as_object().ok_or_else(|| StoreError::SchemaViolation("record must be an object".into()))?;
        for key in ["model_name", "type", "record_name"] {
            required(obj, key)?;
        }
        let record: ParameterRecord =
            serde_json::from_value(doc).map_err(|e| StoreError::SchemaViolation(e.to_string()))?;
        self.upsert_parameter(record)
    }

    /// Replace the store contents with a fixture. Flags are initialized
    /// whenever the fixture defines at least one task.
    pub fn load_fixture(&mut self, path: impl AsRef<Path>) -> Result<FixtureCounts, StoreError> {
        let text = fs::read_to_string(path)?;
        self.load_fixture_str(&text)
    }

    pub fn load_fixture_str(&mut self, text: &str) -> Result<FixtureCounts, StoreError> {
        let mut tasks = vec![];
        let mut params = vec![];
        for (line, doc) in parse_lines(text)? {
            let bad = |message: String| StoreError::FixtureParse { line, message };
            if doc.get("task_sequence").is_some() {
                tasks.push(serde_json::from_value::<TaskRecord>(doc).map_err(|e| bad(e.to_string()))?);
            } else if doc.get("record_name").is_some() {
                let obj = doc.as_object().ok_or_else(|| bad("record must be an object".into()))?;
                for key in ["model_name", "type", "record_name"] {
                    required(obj, key).map_err(|e| bad(e.to_string()))?;
                }
                params.push(serde_json::from_value::<ParameterRecord>(doc).map_err(|e| bad(e.to_string()))?);
            } else {
                return Err(bad("neither a task nor a parameter record".into()));
            }
        }
        let dir = self.dir.take();
        *self = Self::in_memory();
        let mut counts = FixtureCounts::default();
        for t in tasks {
            self.insert_task(t)?;
            counts.tasks += 1;
        }
        for p in params {
            self.upsert_parameter(p)?;
            counts.parameters += 1;
        }
        if counts.tasks > 0 {
            for (key, _, initial) in FLAG_TABLE {
                let rec = ParameterRecord::new(
                    GLOBAL_BLACKBOARD_MODEL,
                    ParamType::Dynamic,
                    key,
                    serde_json::json!({ "value": initial }),
                );
                self.upsert_parameter(rec)?;
                counts.flags += 1;
            }
        }
        self.dir = dir;
        self.autoflush()?;
        Ok(counts)
    }

    pub fn tasks_jsonl(&self) -> String {
        to_lines(self.tasks.values())
    }

    pub fn parameters_jsonl(&self) -> String {
        to_lines(self.params.values().map(|s| &s.record))
    }

    /// Both collections as JSON lines, tasks first.
    pub fn dump(&self) -> String {
        let mut out = self.tasks_jsonl();
        out.push_str(&self.parameters_jsonl());
        out
    }

    fn autoflush(&self) -> Result<(), StoreError> {
        if self.dir.is_some() {
            self.flush()?;
        }
        Ok(())
    }

    /// Write both collections to disk. Each file is replaced atomically.
    pub fn flush(&self) -> Result<(), StoreError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        write_atomic(&dir.join(TASKS_FILE), &self.tasks_jsonl())?;
        write_atomic(&dir.join(PARAMETERS_FILE), &self.parameters_jsonl())?;
        Ok(())
    }
}

fn parse_lines(text: &str) -> Result<Vec<(usize, Json)>, StoreError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map(|v| (i + 1, v)).map_err(|e| StoreError::FixtureParse { line: i + 1, message: e.to_string() })
        })
        .collect()
}

fn to_lines<'a, T: Serialize + 'a>(items: impl Iterator<Item = &'a T>) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("record serializes"));
        out.push('\n');
    }
    out
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), StoreError> {
    let tmp = path.with_extension("jsonl.tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(contents.as_bytes())?;
    f.sync_all()?;
    fs::rename(tmp, path)?;
    Ok(())
}
