use serde_json::{json, Map, Value as Json};

use super::{BtNode, LeafParams, NodeKind, ParseError, TaskTree};
use crate::blackboard::Value;
use crate::comms::TaskId;

fn malformed(msg: impl Into<String>) -> ParseError {
    ParseError::MalformedDocument(msg.into())
}

fn required_str(obj: &Map<String, Json>, key: &str, ctx: &str) -> Result<String, ParseError> {
    match obj.get(key) {
        Some(Json::String(s)) if !s.is_empty() => Ok(s.clone()),
        Some(Json::String(_)) => Err(malformed(format!("{ctx}: `{key}` is empty"))),
        Some(_) => Err(malformed(format!("{ctx}: `{key}` must be a string"))),
        None => Err(malformed(format!("{ctx}: missing `{key}`"))),
    }
}

fn json_to_value(v: &Json) -> Result<Value, ParseError> {
    match v {
        Json::Bool(b) => Ok(Value::Bool(*b)),
        Json::Number(n) => Ok(n.as_i64().map(Value::Int).unwrap_or_else(|| Value::Float(n.as_f64().unwrap_or(0.0)))),
        Json::String(s) => Ok(Value::Str(s.clone())),
        other => Err(malformed(format!("gate value must be a scalar, got {other}"))),
    }
}

fn value_to_json(v: &Value) -> Json {
    match v {
        Value::Bool(b) => json!(b),
        Value::Int(i) => json!(i),
        Value::Float(f) => json!(f),
        Value::Str(s) => json!(s),
        Value::Pose(p) => json!(p),
    }
}

/// Parse one node object (recursively).
pub fn parse_node(v: &Json) -> Result<BtNode, ParseError> {
    let obj = v.as_object().ok_or_else(|| malformed("node must be an object"))?;
    let kind_name = match obj.get("kind") {
        Some(Json::String(s)) => s.as_str(),
        _ => return Err(malformed("node is missing string `kind`")),
    };
    let children = match obj.get("children") {
        None | Some(Json::Null) => vec![],
        Some(Json::Array(items)) => items.iter().map(parse_node).collect::<Result<Vec<_>, _>>()?,
        Some(_) => return Err(malformed("`children` must be an array")),
    };
    let count = |key: &str| -> Result<Option<u64>, ParseError> {
        match obj.get(key) {
            None | Some(Json::Null) => Ok(None),
            Some(n) => n.as_u64().map(Some).ok_or_else(|| malformed(format!("`{key}` must be a non-negative integer"))),
        }
    };
    let kind = match kind_name {
        "Sequence" => NodeKind::Sequence,
        "Fallback" => NodeKind::Fallback,
        "Parallel" => {
            let threshold = count("threshold")?.ok_or_else(|| malformed("Parallel needs `threshold`"))?;
            NodeKind::Parallel { threshold: threshold as usize }
        }
        "Retry" => {
            let max = count("max_attempts")?.ok_or_else(|| malformed("Retry needs `max_attempts`"))?;
            let max = u32::try_from(max).map_err(|_| malformed("`max_attempts` too large"))?;
            NodeKind::Retry { max_attempts: max }
        }
        "Leaf" => {
            let params = obj
                .get("params")
                .and_then(Json::as_object)
                .ok_or_else(|| malformed("Leaf needs a `params` object"))?;
            NodeKind::Leaf(LeafParams {
                model_name: required_str(params, "model_name", "Leaf")?,
                record_name: required_str(params, "record_name", "Leaf")?,
                subtask_name: required_str(params, "subtask_name", "Leaf")?,
            })
        }
        "BlackboardGate" => {
            let key = required_str(obj, "key", "BlackboardGate")?;
            let expected = json_to_value(obj.get("expected").ok_or_else(|| malformed("BlackboardGate needs `expected`"))?)?;
            NodeKind::BlackboardGate { key, expected }
        }
        other => return Err(ParseError::UnknownNodeKind(other.to_string())),
    };
    Ok(BtNode { kind, children })
}

/// Check structural invariants; returns the single machine the tree actuates.
pub(super) fn validate(root: &BtNode) -> Result<String, ParseError> {
    if root.kind.is_composite() && root.children.is_empty() {
        return Err(ParseError::EmptyTree);
    }
    let mut machine: Option<String> = None;
    fn walk(node: &BtNode, machine: &mut Option<String>) -> Result<(), ParseError> {
        match &node.kind {
            NodeKind::Leaf(_) | NodeKind::BlackboardGate { .. } if !node.children.is_empty() => {
                return Err(malformed(format!("{} may not have children", node.kind.name())));
            }
            NodeKind::Sequence | NodeKind::Fallback if node.children.is_empty() => {
                return Err(malformed(format!("{} has no children", node.kind.name())));
            }
            NodeKind::Parallel { threshold } if *threshold < 1 || *threshold > node.children.len() => {
                return Err(malformed(format!(
                    "Parallel threshold {threshold} outside [1, {}]",
                    node.children.len()
                )));
            }
            NodeKind::Retry { max_attempts } => {
                if node.children.len() != 1 {
                    return Err(malformed("Retry takes exactly one child"));
                }
                if *max_attempts < 1 {
                    return Err(malformed("Retry needs max_attempts >= 1"));
                }
            }
            NodeKind::Leaf(p) => match machine {
                None => *machine = Some(p.model_name.clone()),
                Some(m) if *m != p.model_name => {
                    return Err(ParseError::MixedMachines(m.clone(), p.model_name.clone()));
                }
                _ => {}
            },
            _ => {}
        }
        node.children.iter().try_for_each(|c| walk(c, machine))
    }
    walk(root, &mut machine)?;
    machine.ok_or(ParseError::EmptyTree)
}

/// Parse a task-sequence document `{"task_sequence": node}`.
pub fn parse_task_sequence(doc: &str, task_id: TaskId) -> Result<TaskTree, ParseError> {
    let v: Json = serde_json::from_str(doc).map_err(|e| malformed(e.to_string()))?;
    parse_task_sequence_value(&v, task_id)
}

pub(crate) fn parse_task_sequence_value(v: &Json, task_id: TaskId) -> Result<TaskTree, ParseError> {
    let root = match v.get("task_sequence") {
        Some(Json::Null) | None => return Err(ParseError::EmptyTree),
        Some(node) => parse_node(node)?,
    };
    TaskTree::new(task_id, root)
}

pub fn node_to_json(node: &BtNode) -> Json {
    let mut obj = Map::new();
    obj.insert("kind".into(), json!(node.kind.name()));
    match &node.kind {
        NodeKind::Parallel { threshold } => {
            obj.insert("threshold".into(), json!(threshold));
        }
        NodeKind::Retry { max_attempts } => {
            obj.insert("max_attempts".into(), json!(max_attempts));
        }
        NodeKind::Leaf(p) => {
            obj.insert("params".into(), serde_json::to_value(p).expect("leaf params serialize"));
        }
        NodeKind::BlackboardGate { key, expected } => {
            obj.insert("key".into(), json!(key));
            obj.insert("expected".into(), value_to_json(expected));
        }
        NodeKind::Sequence | NodeKind::Fallback => {}
    }
    if node.kind.is_composite() {
        obj.insert("children".into(), Json::Array(node.children.iter().map(node_to_json).collect()));
    }
    Json::Object(obj)
}

pub fn task_sequence_to_json(root: &BtNode) -> Json {
    json!({ "task_sequence": node_to_json(root) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(machine: &str, sub: &str) -> Json {
        json!({"kind": "Leaf", "params": {"model_name": machine, "record_name": "r", "subtask_name": sub}})
    }

    #[test]
    fn sequence_of_two_leaves() {
        let doc = json!({"task_sequence": {"kind": "Sequence", "children": [leaf("zx200", "a"), leaf("zx200", "b")]}});
        let tree = parse_task_sequence(&doc.to_string(), 7).unwrap();
        assert_eq!(tree.len(), 3);
        assert_eq!(tree.node_kind(0), &NodeKind::Sequence);
        assert_eq!(tree.children(0), &[1, 2]);
        assert_eq!(tree.model_name(), "zx200");
        assert_eq!(tree.task_id(), 7);
    }

    #[test]
    fn leaf_missing_subtask_name() {
        let doc = json!({"task_sequence": {"kind": "Leaf", "params": {"model_name": "zx200", "record_name": "r"}}});
        assert!(matches!(parse_task_sequence(&doc.to_string(), 1), Err(ParseError::MalformedDocument(_))));
    }

    #[test]
    fn mixed_machines_rejected() {
        let doc = json!({"task_sequence": {"kind": "Sequence", "children": [leaf("zx200", "a"), leaf("ic120", "b")]}});
        assert_eq!(
            parse_task_sequence(&doc.to_string(), 1).unwrap_err(),
            ParseError::MixedMachines("zx200".into(), "ic120".into())
        );
    }

    #[test]
    fn unknown_kind_and_syntax_errors() {
        let doc = json!({"task_sequence": {"kind": "Inverter", "children": [leaf("zx200", "a")]}});
        assert_eq!(parse_task_sequence(&doc.to_string(), 1).unwrap_err(), ParseError::UnknownNodeKind("Inverter".into()));
        assert!(matches!(parse_task_sequence("{not json", 1), Err(ParseError::MalformedDocument(_))));
    }

    #[test]
    fn empty_trees() {
        assert_eq!(parse_task_sequence(r#"{"task_sequence": null}"#, 1).unwrap_err(), ParseError::EmptyTree);
        assert_eq!(
            parse_task_sequence(r#"{"task_sequence": {"kind":"Sequence","children":[]}}"#, 1).unwrap_err(),
            ParseError::EmptyTree
        );
        let gates_only = json!({"task_sequence": {"kind": "BlackboardGate", "key": "k", "expected": true}});
        assert_eq!(parse_task_sequence(&gates_only.to_string(), 1).unwrap_err(), ParseError::EmptyTree);
    }

    #[test]
    fn parallel_threshold_bounds() {
        let doc = |t: u64| json!({"task_sequence": {"kind": "Parallel", "threshold": t, "children": [leaf("m", "a"), leaf("m", "b")]}});
        assert!(parse_task_sequence(&doc(0).to_string(), 1).is_err());
        assert!(parse_task_sequence(&doc(3).to_string(), 1).is_err());
        assert!(parse_task_sequence(&doc(2).to_string(), 1).is_ok());
    }

    #[test]
    fn leaf_with_children_rejected() {
        let mut l = leaf("m", "a");
        l["children"] = json!([leaf("m", "b")]);
        let doc = json!({"task_sequence": l});
        assert!(matches!(parse_task_sequence(&doc.to_string(), 1), Err(ParseError::MalformedDocument(_))));
    }

    #[test]
    fn json_roundtrip_of_all_kinds() {
        let tree = BtNode::retry(
            3,
            BtNode::sequence(vec![
                BtNode::gate("CONTINUE_FLG", true),
                BtNode::fallback(vec![BtNode::leaf("m", "r", "s"), BtNode::parallel(1, vec![BtNode::leaf("m", "a", "b")])]),
            ]),
        );
        let json = task_sequence_to_json(&tree);
        let back = parse_task_sequence(&json.to_string(), 1).unwrap();
        assert_eq!(back.spec(), &tree);
    }
}
