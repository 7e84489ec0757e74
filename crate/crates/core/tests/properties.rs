use std::collections::BTreeMap;

use proptest::prelude::*;

use yardmaster_core::blackboard::{Blackboard, Value};
use yardmaster_core::bt::{ActionClient, BtNode, BtStatus, ExecutionContext, TaskTree};
use yardmaster_core::comms::{decode, encode, ActionState, GoalId, GoalPayload, Message, SendGoalError, TaskId};
use yardmaster_core::manip::kinematics::theta_w;
use yardmaster_core::manip::plan_trajectory;
use yardmaster_core::nav::ekf::{diag3, GATE_99_2DOF};
use yardmaster_core::nav::{ekf_predict, ekf_update_gnss, geo_to_plane, plane_to_geo, EkfState, GeoPoint};
use yardmaster_core::sim::Terrain;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// ------------------------------------------------------------------ codec

fn in_range_message() -> impl Strategy<Value = Message> {
    prop_oneof![
        (-32.7f64..32.7, -32.7f64..32.7).prop_map(|(v, w)| Message::VelocityCmd { v, w }),
        (-32.7f64..32.7, -32.7f64..32.7).prop_map(|(v, w)| Message::OdomTelemetry { v, w }),
        (-5.7f64..5.7).prop_map(|angle| Message::VesselCmd { angle }),
        (0u8..4, -32.7f64..32.7, -1000i16..=1000).prop_map(|(joint, vel, valve)| Message::JointVelCmd { joint, vel, valve }),
        (-90.0f64..90.0, -180.0f64..180.0).prop_map(|(lat, lon)| Message::GnssTelemetry { lat, lon }),
        (-2.0e6f64..2.0e6).prop_map(|alt| Message::GnssAltitude { alt }),
        (0u8..5, -2000.0f64..2000.0).prop_map(|(joint, angle)| Message::JointTelemetry { joint, angle }),
    ]
}

/// Largest decode error a message may show: half a quantum per field.
fn within_quantum(a: &Message, b: &Message) -> bool {
    let eps = 1e-12;
    match (*a, *b) {
        (Message::VelocityCmd { v, w }, Message::VelocityCmd { v: v2, w: w2 })
        | (Message::OdomTelemetry { v, w }, Message::OdomTelemetry { v: v2, w: w2 }) => {
            close(v, v2, 5e-4 + eps) && close(w, w2, 5e-4 + eps)
        }
        (Message::VesselCmd { angle }, Message::VesselCmd { angle: a2 }) => {
            close(angle, a2, (0.005f64).to_radians() + eps)
        }
        (Message::JointVelCmd { joint, vel, valve }, Message::JointVelCmd { joint: j2, vel: v2, valve: x2 }) => {
            joint == j2 && valve == x2 && close(vel, v2, 5e-4 + eps)
        }
        (Message::GnssTelemetry { lat, lon }, Message::GnssTelemetry { lat: a2, lon: o2 }) => {
            close(lat, a2, 5e-8 + 1e-10) && close(lon, o2, 5e-8 + 1e-10)
        }
        (Message::GnssAltitude { alt }, Message::GnssAltitude { alt: a2 }) => close(alt, a2, 5e-4 + 1e-9),
        (Message::JointTelemetry { joint, angle }, Message::JointTelemetry { joint: j2, angle: a2 }) => {
            joint == j2 && close(angle, a2, 5e-7 + 1e-12)
        }
        _ => false,
    }
}

proptest! {
    #[test]
    fn codec_decode_is_within_a_quantum(m in in_range_message()) {
        let frame = encode(&m).unwrap();
        let back = decode(&frame).unwrap();
        prop_assert!(within_quantum(&m, &back), "{m:?} -> {back:?}");
        // decoding lands on the grid, so a second pass is exact
        prop_assert_eq!(decode(&encode(&back).unwrap()).unwrap(), back);
        prop_assert_eq!(encode(&m).unwrap(), frame);
    }
}

// -------------------------------------------------------------------- geo

proptest! {
    #[test]
    fn geo_plane_roundtrip(
        lat0 in -60.0f64..60.0,
        lon0 in -170.0f64..170.0,
        dlat in -0.09f64..0.09,
        dlon in -0.09f64..0.09,
        alt in -50.0f64..50.0,
    ) {
        let origin = GeoPoint { lat: lat0, lon: lon0, alt: 10.0 };
        let p = GeoPoint { lat: lat0 + dlat, lon: lon0 + dlon, alt };
        let xyz = geo_to_plane(&p, &origin).unwrap();
        let back = plane_to_geo(xyz, &origin).unwrap();
        prop_assert!(close(back.lat, p.lat, 1e-9) && close(back.lon, p.lon, 1e-9) && close(back.alt, p.alt, 1e-9));
        let r = 6_378_137.0 * std::f64::consts::PI / 180.0;
        prop_assert!(close(xyz[1], dlat * r, 1e-6));
        prop_assert!(close(xyz[0], dlon * r * lat0.to_radians().cos(), 1e-6));
    }
}

// -------------------------------------------------------------------- EKF

#[derive(Debug, Clone)]
enum EkfStep {
    Predict(f64, f64),
    Fix(f64, f64),
}

fn is_psd(c: &[[f64; 3]; 3]) -> bool {
    let sym = (0..3).all(|i| (0..3).all(|j| (c[i][j] - c[j][i]).abs() <= 1e-12 * (1.0 + c[i][j].abs())));
    // leading principal minors of a symmetric matrix, with slack for rounding
    let m1 = c[0][0];
    let m2 = c[0][0] * c[1][1] - c[0][1] * c[1][0];
    let m3 = c[0][0] * (c[1][1] * c[2][2] - c[1][2] * c[2][1]) - c[0][1] * (c[1][0] * c[2][2] - c[1][2] * c[2][0])
        + c[0][2] * (c[1][0] * c[2][1] - c[1][1] * c[2][0]);
    sym && m1 >= 0.0 && m2 >= -1e-15 && m3 >= -1e-18 && (0..3).all(|i| c[i][i] >= 0.0)
}

proptest! {
    #[test]
    fn ekf_covariance_stays_psd(steps in prop::collection::vec(
        prop_oneof![
            (-1.5f64..1.5, -0.5f64..0.5).prop_map(|(v, w)| EkfStep::Predict(v, w)),
            (-3.0f64..3.0, -3.0f64..3.0).prop_map(|(x, y)| EkfStep::Fix(x, y)),
        ],
        1..300,
    )) {
        let q = diag3([2.5e-5, 2.5e-5, 1e-5]);
        let r = [[0.0025, 0.0], [0.0, 0.0025]];
        let mut s = EkfState::new([0.0, 0.0, 0.3], diag3([0.01, 0.01, 0.001]));
        for st in steps {
            s = match st {
                EkfStep::Predict(v, w) => ekf_predict(&s, v, w, 0.1, &q),
                EkfStep::Fix(dx, dy) => ekf_update_gnss(&s, [s.mean[0] + dx, s.mean[1] + dy], &r, GATE_99_2DOF).0,
            };
            prop_assert!(is_psd(&s.cov), "{:?}", s.cov);
            prop_assert!(s.mean[2] > -std::f64::consts::PI && s.mean[2] <= std::f64::consts::PI);
        }
    }
}

// ------------------------------------------------------------ trajectories

fn joints() -> impl Strategy<Value = [f64; 4]> {
    [-3.0f64..3.0, -1.0f64..1.4, -2.9f64..0.0, -1.0f64..3.2]
}

proptest! {
    #[test]
    fn trajectory_samples_integrate_their_velocities(a in joints(), b in joints()) {
        let vmax = [0.5, 0.4, 0.5, 0.8];
        let amax = [1.0, 1.0, 1.0, 1.5];
        let traj = plan_trajectory(a, b, vmax, amax, 0.1);
        prop_assert_eq!(traj.samples[0].q, a);
        prop_assert_eq!(traj.samples[0].t, 0.0);
        for w in traj.samples.windows(2) {
            let h = w[1].t - w[0].t;
            prop_assert!(h > 0.0);
            for (j, &cap) in vmax.iter().enumerate() {
                // velocity is linear between samples, so the mean velocity is exact
                let fd = (w[1].q[j] - w[0].q[j]) / h;
                let mean = 0.5 * (w[0].v[j] + w[1].v[j]);
                prop_assert!(close(fd, mean, 1e-6), "joint {j}: {fd} vs {mean}");
                prop_assert!(w[1].v[j].abs() <= cap + 1e-12);
            }
        }
        let last = traj.samples.last().unwrap();
        prop_assert!(close(last.t, traj.duration, 1e-12));
        for (q, want) in last.q.iter().zip(b) {
            prop_assert!(close(*q, want, 1e-9));
        }
    }

    #[test]
    fn theta_w_is_the_pitch_sum(q in joints()) {
        prop_assert_eq!(theta_w(&q), q[1] + q[2] + q[3]);
    }
}

// ----------------------------------------------------------------- terrain

#[derive(Debug, Clone)]
enum Earthwork {
    Dig([f64; 2], f64),
    Pile([f64; 2], f64),
}

proptest! {
    #[test]
    fn terrain_volume_moves_only_by_what_is_reported(ops in prop::collection::vec(
        prop_oneof![
            ((1.0f64..9.0, 1.0f64..9.0), 0.0f64..1.5).prop_map(|((x, y), v)| Earthwork::Dig([x, y], v)),
            ((1.0f64..9.0, 1.0f64..9.0), 0.0f64..1.5).prop_map(|((x, y), v)| Earthwork::Pile([x, y], v)),
        ],
        1..40,
    )) {
        let mut t = Terrain::flat(40, 40, 0.25, [0.0, 0.0]);
        t.add_mound([5.0, 5.0], 1.5, 2.0);
        let mut expected = t.volume();
        for op in ops {
            match op {
                Earthwork::Dig(at, v) => {
                    let got = t.excavate_at(at, v, 0.6).unwrap();
                    prop_assert!(got >= 0.0 && got <= v + 1e-12);
                    expected -= got;
                }
                Earthwork::Pile(at, v) => expected += t.deposit(at, v, 0.6),
            }
            prop_assert!(close(t.volume(), expected, 1e-9));
            prop_assert!(t.volume() >= 0.0);
        }
    }
}

// -------------------------------------------------------------- blackboard

proptest! {
    #[test]
    fn revisions_strictly_increase_per_key(writes in prop::collection::vec((0usize..3, any::<i64>()), 1..200)) {
        let bb = Blackboard::new();
        let mut last: BTreeMap<usize, u64> = BTreeMap::new();
        for (k, v) in writes {
            let key = format!("k{k}");
            let rev = bb.set(&key, v, 0.0).unwrap();
            prop_assert_eq!(rev, last.get(&k).copied().unwrap_or(0) + 1);
            last.insert(k, rev);
            prop_assert!(bb.set(&key, "text", 0.0).is_err());
            let e = bb.get(&key).unwrap();
            prop_assert_eq!((e.value, e.revision), (Value::Int(v), rev));
        }
    }
}

// ---------------------------------------------------------------------- BT

#[derive(Debug, Clone)]
enum Shape {
    Leaf { polls: u8, ok: bool },
    Seq(Vec<Shape>),
    Fb(Vec<Shape>),
    Par(Vec<Shape>, usize),
    Retry(u32, Box<Shape>),
}

fn shape() -> impl Strategy<Value = Shape> {
    let leaf = (0u8..4, prop::bool::weighted(0.7)).prop_map(|(polls, ok)| Shape::Leaf { polls, ok });
    leaf.prop_recursive(4, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 1..4).prop_map(Shape::Seq),
            prop::collection::vec(inner.clone(), 1..4).prop_map(Shape::Fb),
            (prop::collection::vec(inner.clone(), 1..4), 0usize..4).prop_map(|(c, t)| {
                let t = 1 + t % c.len();
                Shape::Par(c, t)
            }),
            (1u32..4, inner).prop_map(|(n, c)| Shape::Retry(n, Box::new(c))),
        ]
    })
}

/// Builds the tree and the outcome script keyed by leaf record name.
fn build(s: &Shape, script: &mut BTreeMap<String, (u8, ActionState)>) -> BtNode {
    match s {
        Shape::Leaf { polls, ok } => {
            let name = format!("leaf{}", script.len());
            let end = if *ok { ActionState::Succeeded } else { ActionState::Aborted };
            script.insert(name.clone(), (*polls, end));
            BtNode::leaf("m", &name, "srv")
        }
        Shape::Seq(c) => BtNode::sequence(c.iter().map(|c| build(c, script)).collect()),
        Shape::Fb(c) => BtNode::fallback(c.iter().map(|c| build(c, script)).collect()),
        Shape::Par(c, t) => BtNode::parallel(*t, c.iter().map(|c| build(c, script)).collect()),
        Shape::Retry(n, c) => BtNode::retry(*n, build(c, script)),
    }
}

#[derive(Default)]
struct Client {
    script: BTreeMap<String, (u8, ActionState)>,
    /// goal -> (record, polls left, final state)
    goals: BTreeMap<GoalId, (String, u8, ActionState)>,
    next: GoalId,
    log: Vec<String>,
    double_open: bool,
}

impl Client {
    fn open(&self, record: &str) -> bool {
        self.goals.values().any(|(r, n, s)| r == record && (*n > 0 || !s.is_terminal()))
    }

    fn advance(&mut self) {
        for g in self.goals.values_mut() {
            g.1 = g.1.saturating_sub(1);
        }
    }
}

impl ActionClient for Client {
    fn send_goal(&mut self, _task: TaskId, _server: &str, payload: GoalPayload) -> Result<GoalId, SendGoalError> {
        self.double_open |= self.open(&payload.record_name);
        self.next += 1;
        let (n, s) = self.script[&payload.record_name];
        self.log.push(format!("send {}", payload.record_name));
        self.goals.insert(self.next, (payload.record_name, n, s));
        Ok(self.next)
    }

    fn goal_state(&self, goal: GoalId) -> Option<ActionState> {
        self.goals.get(&goal).map(|(_, n, s)| if *n > 0 { ActionState::Executing } else { *s })
    }

    fn cancel_goal(&mut self, goal: GoalId) -> ActionState {
        let g = self.goals.get_mut(&goal).expect("known goal");
        let was = if g.1 > 0 { ActionState::Executing } else { g.2 };
        if !was.is_terminal() {
            g.1 = 0;
            g.2 = ActionState::Canceled;
        }
        self.log.push(format!("cancel {}", g.0));
        g.2
    }
}

type Drive = (Vec<BtStatus>, Vec<String>, bool, Option<(TaskTree, yardmaster_core::bt::CancelReport)>);

/// Tick until terminal or `limit`, then cancel if still running.
fn drive(shape: &Shape, limit: usize) -> Drive {
    let mut script = BTreeMap::new();
    let root = build(shape, &mut script);
    let mut tree = TaskTree::new(1, root).unwrap();
    let mut client = Client { script, ..Default::default() };
    let mut statuses = vec![];
    for i in 0..limit {
        let s = tree.tick(&mut ExecutionContext { client: &mut client, now: i as f64 }).unwrap();
        statuses.push(s);
        if s.is_terminal() {
            break;
        }
        client.advance();
    }
    let report = if tree.status() == BtStatus::Running {
        let r = tree.cancel(&mut ExecutionContext { client: &mut client, now: limit as f64 }).unwrap();
        Some((tree, r))
    } else {
        None
    };
    (statuses, client.log, client.double_open, report)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ticking_is_deterministic(s in shape(), limit in 1usize..30) {
        let a = drive(&s, limit);
        let b = drive(&s, limit);
        prop_assert_eq!(&a.0, &b.0);
        prop_assert_eq!(&a.1, &b.1);
    }

    #[test]
    fn root_never_leaves_a_terminal_status(s in shape()) {
        let (statuses, _, double_open, _) = drive(&s, 200);
        prop_assert!(!double_open, "a leaf opened a second goal while one was live");
        if let Some(i) = statuses.iter().position(|s| s.is_terminal()) {
            prop_assert!(statuses[i..].iter().all(|x| *x == statuses[i]));
        }
        prop_assert!(statuses.iter().all(|s| *s != BtStatus::Idle));
    }

    #[test]
    fn cancel_goes_down_then_up(s in shape(), limit in 1usize..8) {
        let (_, _, _, report) = drive(&s, limit);
        if let Some((tree, r)) = report {
            prop_assert_eq!(tree.status(), BtStatus::Canceled);
            prop_assert_eq!(r.issue_order().first().copied(), Some(0));
            prop_assert_eq!(r.completion_order().last().copied(), Some(0));
            for n in r.issue_order() {
                if let Some(p) = tree.parent(n) {
                    prop_assert!(r.issued_at(p) < r.issued_at(n));
                    prop_assert!(r.completed_at(n) < r.completed_at(p));
                }
            }
            for l in &r.leaves {
                prop_assert!(l.final_state.is_terminal());
                prop_assert!(tree.node_status(l.node) == BtStatus::Canceled || l.final_state != ActionState::Canceled);
            }
        }
    }
}
