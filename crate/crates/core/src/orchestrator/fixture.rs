//! The load-haul-dump scenario as task records and parameter records.

use serde_json::{json, Value as Json};

use crate::blackboard::flags::{
    ARRIVAL_FLG, CONTINUE_FLG, INITIAL_POSE_FLG, MOVING_FLG, SENSING_ARRIVAL_FLG, SENSING_CHECK_MOUND_FLG,
    SENSING_LOADED_FLG,
};
use crate::blackboard::sync::{READER, WRITER};
use crate::bt::{task_sequence_to_json, BtNode};
use crate::comms::TaskId;
use crate::manip::kinematics::{quaternion_from_rpy, JOINT_NAMES};
use crate::manip::servers::{CHANGE_POSE, EXCAVATE_SIMPLE, RELEASE_SIMPLE};
use crate::nav::servers::{ANYWARE, FOLLOW_WAYPOINTS, NAVIGATE_THROUGH_POSES, RELEASE_SOIL};
use crate::sim::plant::DumpState;
use crate::sim::{Site, SiteConfig, IC120, ZX200};
use crate::store::{ParamType, ParameterRecord, TaskRecord};

use super::sensing::{EXCAVATION_RECORD, RELEASE_RECORD};

pub const IC120_TASK: TaskId = 1;
pub const ZX200_TASK: TaskId = 2;
/// Vessel opening angle used for dumping at Point 5.
pub const DUMP_ANGLE: f64 = 0.8;
/// Attempt budget of the polling and cycle loops.
const FOREVER: u32 = 1_000_000;

fn read(machine: &str, key: &str) -> BtNode {
    BtNode::leaf(machine, key, READER)
}

fn write(machine: &str, key: &str, value: bool) -> BtNode {
    BtNode::leaf(machine, &format!("{key}={value}"), WRITER)
}

/// Read a global flag and require a value.
fn check(machine: &str, key: &str, value: bool) -> Vec<BtNode> {
    vec![read(machine, key), BtNode::gate(key, value)]
}

fn all_of(machine: &str, conds: &[(&str, bool)]) -> BtNode {
    BtNode::sequence(conds.iter().flat_map(|&(k, v)| check(machine, k, v)).collect())
}

/// Haul loop of the crawler dump: wait at Point 1 until loaded, dump at
/// Point 5, come back and stop when CONTINUE_FLG is down.
pub fn ic120_tree() -> BtNode {
    let m = IC120;
    let wait_loaded = BtNode::retry(
        FOREVER,
        BtNode::sequence(vec![
            read(m, INITIAL_POSE_FLG),
            BtNode::gate(INITIAL_POSE_FLG, true),
            read(m, MOVING_FLG),
            BtNode::gate(MOVING_FLG, true),
            BtNode::fallback(vec![all_of(m, &[(SENSING_LOADED_FLG, true)]), all_of(m, &[(SENSING_CHECK_MOUND_FLG, true)])]),
        ]),
    );
    let cycle = BtNode::sequence(vec![
        wait_loaded,
        write(m, ARRIVAL_FLG, false),
        BtNode::leaf(m, "Target_unloading_path", FOLLOW_WAYPOINTS),
        BtNode::leaf(m, "Target_vessel_angle", RELEASE_SOIL),
        write(m, SENSING_LOADED_FLG, false),
        BtNode::leaf(m, "Target_loading_path", NAVIGATE_THROUGH_POSES),
        BtNode::leaf(m, "Target_loading_point", ANYWARE),
        write(m, ARRIVAL_FLG, true),
        read(m, CONTINUE_FLG),
        BtNode::gate(CONTINUE_FLG, false),
    ]);
    BtNode::sequence(vec![
        BtNode::leaf(m, "Target_loading_point", ANYWARE),
        write(m, ARRIVAL_FLG, true),
        BtNode::retry(FOREVER, cycle),
    ])
}

/// Loading loop of the backhoe: wait for the dump, fill it scoop by scoop,
/// return to the initial pose and stop when CONTINUE_FLG is down.
pub fn zx200_tree() -> BtNode {
    let m = ZX200;
    let wait_dump = BtNode::retry(
        FOREVER,
        BtNode::fallback(vec![
            all_of(m, &[(CONTINUE_FLG, false)]),
            all_of(
                m,
                &[
                    (ARRIVAL_FLG, true),
                    (SENSING_ARRIVAL_FLG, true),
                    (SENSING_LOADED_FLG, false),
                    (SENSING_CHECK_MOUND_FLG, false),
                ],
            ),
        ]),
    );
    let load = BtNode::retry(
        FOREVER,
        BtNode::fallback(vec![
            all_of(m, &[(SENSING_LOADED_FLG, true)]),
            all_of(m, &[(SENSING_CHECK_MOUND_FLG, true)]),
            BtNode::sequence(vec![
                BtNode::leaf(m, EXCAVATION_RECORD, EXCAVATE_SIMPLE),
                BtNode::leaf(m, RELEASE_RECORD, RELEASE_SIMPLE),
                read(m, SENSING_LOADED_FLG),
                BtNode::gate(SENSING_LOADED_FLG, true),
            ]),
        ]),
    );
    let cycle = BtNode::sequence(vec![
        wait_dump,
        BtNode::fallback(vec![
            BtNode::gate(CONTINUE_FLG, false),
            BtNode::sequence(vec![
                write(m, INITIAL_POSE_FLG, false),
                load,
                BtNode::leaf(m, "Target_initial_pose", CHANGE_POSE),
                write(m, INITIAL_POSE_FLG, true),
                read(m, CONTINUE_FLG),
                BtNode::gate(CONTINUE_FLG, false),
            ]),
        ]),
    ]);
    BtNode::sequence(vec![
        BtNode::leaf(m, "Target_initial_pose", CHANGE_POSE),
        write(m, INITIAL_POSE_FLG, true),
        BtNode::retry(FOREVER, cycle),
    ])
}

fn pose_doc(p: [f64; 3]) -> Json {
    let [qx, qy, qz, qw] = quaternion_from_rpy(0.0, 0.0, p[2]);
    json!({"x": p[0], "y": p[1], "z": 0.0, "qx": qx, "qy": qy, "qz": qz, "qw": qw})
}

pub fn task_records() -> Vec<TaskRecord> {
    vec![
        TaskRecord {
            id: 0,
            model_name: IC120.into(),
            description: Some("haul soil from Point 1 to Point 5".into()),
            task_id: IC120_TASK,
            task_sequence: task_sequence_to_json(&ic120_tree()),
        },
        TaskRecord {
            id: 0,
            model_name: ZX200.into(),
            description: Some("excavate the mound and load the dump".into()),
            task_id: ZX200_TASK,
            task_sequence: task_sequence_to_json(&zx200_tree()),
        },
    ]
}

/// Static poses and paths for the site, plus the dynamic targets as they
/// are sensed before the run starts.
pub fn parameter_records(cfg: &SiteConfig) -> Vec<ParameterRecord> {
    let p = |n: usize| cfg.point(n);
    let back = |n: usize| {
        let q = p(n);
        [q[0], q[1], q[2] + std::f64::consts::PI]
    };
    let joints: serde_json::Map<String, Json> =
        JOINT_NAMES.iter().zip(cfg.excavator.initial_joints).map(|(k, v)| (k.to_string(), json!(v))).collect();
    let mut recs = vec![
        ParameterRecord::new(ZX200, ParamType::Static, "Target_initial_pose", Json::Object(joints)),
        ParameterRecord::new(IC120, ParamType::Static, "Target_loading_point", pose_doc(p(1))),
        ParameterRecord::new(
            IC120,
            ParamType::Static,
            "Target_unloading_path",
            json!({"poses": [pose_doc(p(3)), pose_doc(p(4)), pose_doc(p(5))]}),
        ),
        ParameterRecord::new(
            IC120,
            ParamType::Static,
            "Target_loading_path",
            json!({"poses": [pose_doc(back(3)), pose_doc(p(2))]}),
        ),
        ParameterRecord::new(IC120, ParamType::Static, "Target_vessel_angle", json!({"target_angle": DUMP_ANGLE})),
    ];

    let mut site = Site::new(cfg.clone());
    site.dump = DumpState::at(p(1));
    let report = site.sense();
    if let Some(t) = report.excavation_target {
        let doc = json!({"x": t.x, "y": t.y, "z": t.z, "theta_w": t.theta_w, "scoop": t.scoop});
        recs.push(ParameterRecord::new(ZX200, ParamType::Dynamic, EXCAVATION_RECORD, doc));
    }
    if let Some(t) = report.release_target {
        let doc = json!({
            "x": t.x, "y": t.y, "z": t.z, "theta_w": t.theta_w,
            "target_angle": t.target_angle, "quadrant": t.quadrant,
        });
        recs.push(ParameterRecord::new(ZX200, ParamType::Dynamic, RELEASE_RECORD, doc));
    }
    recs
}

/// Tasks then parameters, one JSON document per line.
pub fn scenario_jsonl(cfg: &SiteConfig) -> String {
    let mut out = String::new();
    for t in task_records() {
        out.push_str(&serde_json::to_string(&t).expect("task serializes"));
        out.push('\n');
    }
    for p in parameter_records(cfg) {
        out.push_str(&serde_json::to_string(&p).expect("record serializes"));
        out.push('\n');
    }
    out
}
