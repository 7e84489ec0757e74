//! IC120 subtask servers: waypoint following, pose navigation and the
//! vessel.

use serde_json::Value as Json;

use super::global::plan_global;
use super::grid::CostGrid;
use super::local::{approach, Approach, Direction, DwaParams, Tolerance};
use crate::comms::{GoalPayload, Message};
use crate::manip::kinematics::quaternion_to_rpy;
use crate::orchestrator::server::{
    check_machine, num, num_in, Execution, Progress, ServerCtx, ServerError, SubtaskServer,
};
use crate::sim::IC120;

pub const FOLLOW_WAYPOINTS: &str = "subtask_ic120_follow_waypoints";
pub const NAVIGATE_THROUGH_POSES: &str = "subtask_ic120_navigate_through_poses";
pub const ANYWARE: &str = "subtask_ic120_anyware";
pub const RELEASE_SOIL: &str = "subtask_ic120_release_soil";

/// Goal tolerances on the estimated pose.
pub const POSITION_TOLERANCE: f64 = 0.1;
pub const YAW_TOLERANCE: f64 = 0.05;
/// Intermediate waypoints without a heading are passed at this distance.
pub const PASS_TOLERANCE: f64 = 0.3;
/// Seconds the vessel stays open.
pub const HOLD_OPEN: f64 = 1.0;
const VESSEL_TOLERANCE: f64 = 0.01;
/// Give up on a drive after this long.
const DRIVE_TIMEOUT: f64 = 600.0;

pub fn all() -> Vec<Box<dyn SubtaskServer>> {
    vec![
        Box::new(NavServer { name: FOLLOW_WAYPOINTS, kind: NavKind::Waypoints }),
        Box::new(NavServer { name: NAVIGATE_THROUGH_POSES, kind: NavKind::ThroughPoses }),
        Box::new(NavServer { name: ANYWARE, kind: NavKind::Single }),
        Box::new(ReleaseSoilServer),
    ]
}

/// Site-frame (x, y, yaw) from a record object holding `x`, `y` and either
/// `yaw` or a quaternion.
pub fn pose_of(obj: &Json, record_name: &str) -> Result<[f64; 3], ServerError> {
    let x = num_in(obj, "x", record_name)?;
    let y = num_in(obj, "y", record_name)?;
    if let Some(yaw) = obj.get("yaw").and_then(Json::as_f64) {
        return Ok([x, y, yaw]);
    }
    let q = ["qx", "qy", "qz", "qw"].map(|k| obj.get(k).and_then(Json::as_f64));
    match q {
        [Some(qx), Some(qy), Some(qz), Some(qw)] => {
            let n = (qx * qx + qy * qy + qz * qz + qw * qw).sqrt();
            if n == 0.0 {
                return Err(ServerError::bad(record_name, "zero quaternion"));
            }
            let (_, _, yaw) = quaternion_to_rpy([qx / n, qy / n, qz / n, qw / n]);
            Ok([x, y, yaw])
        }
        _ => Err(ServerError::bad(record_name, "needs `yaw` or `qx`..`qw`")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NavKind {
    /// Every waypoint is a full pose.
    Waypoints,
    /// Only the last pose's heading counts.
    ThroughPoses,
    Single,
}

struct NavServer {
    name: &'static str,
    kind: NavKind,
}

impl SubtaskServer for NavServer {
    fn name(&self) -> &'static str {
        self.name
    }

    fn start(&self, payload: &GoalPayload, ctx: &mut ServerCtx<'_>) -> Result<Box<dyn Execution>, ServerError> {
        check_machine(self.name, IC120, payload)?;
        let rec = ctx.record(payload)?;
        let name = &rec.record_name;
        let poses = match self.kind {
            NavKind::Single => vec![pose_of(&Json::Object(rec.others.clone()), name)?],
            _ => {
                let list = rec
                    .field("poses")
                    .and_then(Json::as_array)
                    .ok_or_else(|| ServerError::bad(name, "missing `poses` array"))?;
                if list.is_empty() {
                    return Err(ServerError::bad(name, "`poses` is empty"));
                }
                list.iter().map(|p| pose_of(p, name)).collect::<Result<Vec<_>, _>>()?
            }
        };
        let pose = ctx.estimates.dump.pose();
        let legs = plan_legs([pose[0], pose[1]], &poses, self.kind == NavKind::Waypoints);
        Ok(Box::new(Drive::new(legs, ctx.site.cost_grid().clone())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Leg {
    pub goal: [f64; 3],
    /// Heading must be reached as well as position.
    pub yaw: bool,
    /// Come to a standstill at the goal.
    pub stop: bool,
    pub direction: Direction,
}

/// Split a pose list into legs. Intermediate positions are passed on the
/// move unless the direction of travel flips there.
pub fn plan_legs(start: [f64; 2], poses: &[[f64; 3]], every_heading: bool) -> Vec<Leg> {
    let n = poses.len();
    let mut legs: Vec<Leg> = (0..n)
        .map(|k| {
            let from = if k == 0 { start } else { [poses[k - 1][0], poses[k - 1][1]] };
            let to = [poses[k][0], poses[k][1]];
            let yaw = every_heading || k + 1 == n;
            let arrival = if yaw { poses[k][2] } else { (to[1] - from[1]).atan2(to[0] - from[0]) };
            Leg { goal: poses[k], yaw, stop: yaw, direction: Direction::for_leg(from, to, arrival) }
        })
        .collect();
    for k in 0..n.saturating_sub(1) {
        if legs[k].direction != legs[k + 1].direction {
            legs[k].stop = true;
        }
    }
    legs
}

fn zero_velocity(ctx: &mut ServerCtx<'_>) {
    if let Some(link) = ctx.site.link(IC120) {
        link.send_message(&Message::VelocityCmd { v: 0.0, w: 0.0 });
    }
}

pub struct Drive {
    legs: Vec<Leg>,
    current: usize,
    path: Vec<[f64; 2]>,
    cmd: (f64, f64),
    grid: CostGrid,
    params: DwaParams,
    elapsed: f64,
    /// Times at which each leg was completed.
    pub arrivals: Vec<f64>,
}

impl Drive {
    pub fn new(legs: Vec<Leg>, grid: CostGrid) -> Self {
        Self { legs, current: 0, path: vec![], cmd: (0.0, 0.0), grid, params: DwaParams::default(), elapsed: 0.0, arrivals: vec![] }
    }

    fn remaining(&self, pose: [f64; 3]) -> f64 {
        let Some(leg) = self.legs.get(self.current) else { return 0.0 };
        let mut d = (leg.goal[0] - pose[0]).hypot(leg.goal[1] - pose[1]);
        for w in self.legs[self.current..].windows(2) {
            d += (w[1].goal[0] - w[0].goal[0]).hypot(w[1].goal[1] - w[0].goal[1]);
        }
        d
    }

    fn plan(&self, pose: [f64; 3], goal: [f64; 3]) -> Result<Vec<[f64; 2]>, ServerError> {
        let mut path = plan_global(&self.grid, [pose[0], pose[1]], [goal[0], goal[1]])?.world_points(&self.grid);
        path[0] = [pose[0], pose[1]];
        if path.len() == 1 {
            path.push([goal[0], goal[1]]);
        } else {
            *path.last_mut().expect("nonempty") = [goal[0], goal[1]];
        }
        Ok(path)
    }

    fn send(&mut self, ctx: &mut ServerCtx<'_>, v: f64, w: f64) {
        self.cmd = (v, w);
        if let Some(link) = ctx.site.link(IC120) {
            link.send_message(&Message::VelocityCmd { v, w });
        }
    }
}

impl Execution for Drive {
    fn step(&mut self, ctx: &mut ServerCtx<'_>) -> Progress {
        self.elapsed += ctx.dt;
        if self.elapsed > DRIVE_TIMEOUT {
            self.send(ctx, 0.0, 0.0);
            return Progress::Aborted(format!("no arrival after {DRIVE_TIMEOUT} s"));
        }
        let pose = ctx.estimates.dump.pose();
        loop {
            let Some(leg) = self.legs.get(self.current).cloned() else {
                self.send(ctx, 0.0, 0.0);
                return Progress::Succeeded(format!("arrived at {:.3} {:.3} {:.3}", pose[0], pose[1], pose[2]));
            };
            if self.path.is_empty() {
                match self.plan(pose, leg.goal) {
                    Ok(p) => self.path = p,
                    Err(e) => {
                        self.send(ctx, 0.0, 0.0);
                        return Progress::Aborted(e.to_string());
                    }
                }
            }
            let tol = if leg.stop {
                Tolerance { position: POSITION_TOLERANCE, yaw: leg.yaw.then_some(YAW_TOLERANCE) }
            } else {
                Tolerance { position: PASS_TOLERANCE, yaw: None }
            };
            match approach(pose, self.cmd, leg.goal, &self.path, &self.grid, &self.params, leg.direction, tol) {
                Ok(Approach::Arrived) => {
                    self.arrivals.push(ctx.now);
                    self.current += 1;
                    self.path.clear();
                    if leg.stop {
                        self.send(ctx, 0.0, 0.0);
                        if self.current == self.legs.len() {
                            return Progress::Succeeded(format!(
                                "arrived at {:.3} {:.3} {:.3}",
                                pose[0], pose[1], pose[2]
                            ));
                        }
                        return Progress::Running(self.remaining(pose));
                    }
                }
                Ok(Approach::Drive { v, w }) => {
                    self.send(ctx, v, w);
                    return Progress::Running(self.remaining(pose));
                }
                Err(e) => {
                    self.send(ctx, 0.0, 0.0);
                    return Progress::Aborted(e.to_string());
                }
            }
        }
    }

    fn cancel(&mut self, ctx: &mut ServerCtx<'_>) {
        self.send(ctx, 0.0, 0.0);
    }
}

struct ReleaseSoilServer;

impl SubtaskServer for ReleaseSoilServer {
    fn name(&self) -> &'static str {
        RELEASE_SOIL
    }

    fn start(&self, payload: &GoalPayload, ctx: &mut ServerCtx<'_>) -> Result<Box<dyn Execution>, ServerError> {
        check_machine(RELEASE_SOIL, IC120, payload)?;
        let rec = ctx.record(payload)?;
        let target = num(rec, "target_angle")?;
        if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&target) {
            return Err(ServerError::bad(&rec.record_name, format!("target_angle {target} outside [0, pi/2]")));
        }
        Ok(Box::new(ReleaseSoil { target, phase: VesselPhase::Opening, elapsed: 0.0 }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum VesselPhase {
    Opening,
    Holding(f64),
    Closing,
}

struct ReleaseSoil {
    target: f64,
    phase: VesselPhase,
    elapsed: f64,
}

impl Execution for ReleaseSoil {
    fn step(&mut self, ctx: &mut ServerCtx<'_>) -> Progress {
        self.elapsed += ctx.dt;
        let angle = ctx.estimates.dump.vessel_angle;
        if self.phase == VesselPhase::Opening && angle >= self.target - VESSEL_TOLERANCE {
            self.phase = VesselPhase::Holding(0.0);
        }
        if let VesselPhase::Holding(t) = self.phase {
            self.phase = if t >= HOLD_OPEN { VesselPhase::Closing } else { VesselPhase::Holding(t + ctx.dt) };
        }
        if self.phase == VesselPhase::Closing && angle <= VESSEL_TOLERANCE {
            return Progress::Succeeded(format!("vessel cycled to {:.3} rad", self.target));
        }
        let command = if self.phase == VesselPhase::Closing { 0.0 } else { self.target };
        if let Some(link) = ctx.site.link(IC120) {
            link.send_message(&Message::VesselCmd { angle: command });
        }
        let remaining = match self.phase {
            VesselPhase::Opening => 2.0 * self.target - angle,
            VesselPhase::Holding(_) => self.target,
            VesselPhase::Closing => angle,
        };
        Progress::Running(remaining)
    }

    fn cancel(&mut self, ctx: &mut ServerCtx<'_>) {
        zero_velocity(ctx);
        if let Some(link) = ctx.site.link(IC120) {
            link.send_message(&Message::VesselCmd { angle: 0.0 });
        }
    }
}
