//! ZX200 subtask servers: pose changes, digging and bucket release.

use super::kinematics::{
    inverse_kinematics, quaternion_from_rpy, quaternion_to_rpy, theta_w, theta_w_from_quaternion, IkError, Joints,
    JOINT_NAMES, SWING,
};
use super::script::{dig_script, release_script, Segment, DIG_SEGMENTS, RELEASE_SEGMENTS};
use super::trajectory::{plan_trajectory, valve_for, JointTrajectory};
use crate::comms::{GoalPayload, Message};
use crate::orchestrator::server::{check_machine, num, Execution, Progress, ServerCtx, ServerError, SubtaskServer};
use crate::scalar::wrap_angle;
use crate::sim::plant::ExcavatorState;
use crate::sim::ZX200;
use crate::store::ParameterRecord;

pub const CHANGE_POSE: &str = "subtask_zx200_change_pose";
pub const EXCAVATE_SIMPLE: &str = "subtask_zx200_excavate_simple";
pub const RELEASE_SIMPLE: &str = "subtask_zx200_release_simple";

/// Per-joint tolerance for a reached pose.
pub const JOINT_TOLERANCE: f64 = 1e-3;
/// Extra time allowed after a trajectory ends for the joints to settle.
const SETTLE_TIMEOUT: f64 = 5.0;
/// Headroom over the joint speed limit for the tracking correction.
const TRACKING_HEADROOM: f64 = 1.5;

pub fn all() -> Vec<Box<dyn SubtaskServer>> {
    vec![Box::new(ChangePose), Box::new(ExcavateSimple), Box::new(ReleaseSimple)]
}

fn base(ctx: &ServerCtx<'_>) -> ExcavatorState {
    ExcavatorState::at(ctx.site.config.excavator.base_pose, ctx.estimates.joints)
}

fn position(rec: &ParameterRecord, ex: &ExcavatorState) -> Result<[f64; 3], ServerError> {
    Ok(ex.to_base([num(rec, "x")?, num(rec, "y")?, num(rec, "z")?]))
}

/// Joint target of a pose record: four joint angles, or a site-frame
/// position with `theta_w`, a quaternion, or a `yaw` for the swing.
pub fn pose_target(rec: &ParameterRecord, ctx: &ServerCtx<'_>) -> Result<Joints<f64>, ServerError> {
    let geom = &ctx.site.config.excavator.geometry;
    let joints = JOINT_NAMES.map(|k| rec.f64_field(k));
    if let [Some(a), Some(b), Some(c), Some(d)] = joints {
        let q = [a, b, c, d];
        for (j, &v) in q.iter().enumerate() {
            let [lo, hi] = geom.limits[j];
            if v < lo || v > hi {
                return Err(IkError::JointLimitViolation { joint: JOINT_NAMES[j], value: v }.into());
            }
        }
        return Ok(q);
    }
    let ex = base(ctx);
    let p = position(rec, &ex)?;
    if let Some(tw) = rec.f64_field("theta_w") {
        return Ok(inverse_kinematics(p, tw, geom)?);
    }
    let quat = ["qx", "qy", "qz", "qw"].map(|k| rec.f64_field(k));
    if let [Some(qx), Some(qy), Some(qz), Some(qw)] = quat {
        let (roll, pitch, yaw) = quaternion_to_rpy([qx, qy, qz, qw]);
        let local = quaternion_from_rpy(roll, pitch, yaw - ex.base_pose[2]);
        let tw = theta_w_from_quaternion(p, local)?;
        return Ok(inverse_kinematics(p, tw, geom)?);
    }
    if let Some(yaw) = rec.f64_field("yaw") {
        let q = inverse_kinematics(p, theta_w(&ctx.estimates.joints), geom)?;
        if wrap_angle(q[SWING] - (yaw - ex.base_pose[2])).abs() > JOINT_TOLERANCE {
            return Err(IkError::Unreachable.into());
        }
        return Ok(q);
    }
    Err(ServerError::bad(&rec.record_name, "needs joint angles, or x/y/z with theta_w, a quaternion or yaw"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Hook {
    Nothing,
    /// Take soil at this site-frame point.
    Dig { at: [f64; 2], scoop: f64 },
    /// Empty the bucket over this site-frame point.
    Release { at: [f64; 2] },
}

#[derive(Debug, Clone)]
struct Stage {
    target: Joints<f64>,
    segment: Option<Segment>,
    hook: Hook,
}

/// Tracks a list of joint targets one trajectory at a time.
pub struct ArmMotion {
    stages: Vec<Stage>,
    current: usize,
    traj: Option<JointTrajectory<f64>>,
    t: f64,
    vmax: Joints<f64>,
    amax: Joints<f64>,
    dug: f64,
    released: f64,
}

impl ArmMotion {
    fn new(stages: Vec<Stage>, ctx: &ServerCtx<'_>) -> Self {
        let ex = &ctx.site.config.excavator;
        Self { stages, current: 0, traj: None, t: 0.0, vmax: ex.vmax, amax: ex.amax, dug: 0.0, released: 0.0 }
    }

    fn send_all(&self, ctx: &mut ServerCtx<'_>, vel: Joints<f64>) {
        if let Some(link) = ctx.site.link(ZX200) {
            for (j, &v) in vel.iter().enumerate() {
                link.send_message(&Message::JointVelCmd { joint: j as u8, vel: v, valve: valve_for(v, self.vmax[j]) });
            }
        }
    }

    fn summary(&self) -> String {
        format!("dug {:.6} m3, released {:.6} m3", self.dug, self.released)
    }

    fn run_hook(&mut self, hook: Hook, ctx: &mut ServerCtx<'_>) -> Result<(), String> {
        match hook {
            Hook::Nothing => {}
            Hook::Dig { at, scoop } => self.dug += ctx.site.excavate(at, scoop).map_err(|e| e.to_string())?,
            Hook::Release { at } => {
                let t = ctx.site.release_bucket(at);
                self.released += t.loaded + t.spilled;
            }
        }
        Ok(())
    }
}

impl Execution for ArmMotion {
    fn step(&mut self, ctx: &mut ServerCtx<'_>) -> Progress {
        let q = ctx.estimates.joints;
        loop {
            let Some(stage) = self.stages.get(self.current).cloned() else {
                return Progress::Succeeded(self.summary());
            };
            let traj = self
                .traj
                .get_or_insert_with(|| plan_trajectory(q, stage.target, self.vmax, self.amax, ctx.dt))
                .clone();
            let settled = (0..4).all(|j| (q[j] - stage.target[j]).abs() <= JOINT_TOLERANCE);
            if self.t >= traj.duration && settled {
                if let Err(e) = self.run_hook(stage.hook, ctx) {
                    return Progress::Aborted(e);
                }
                self.current += 1;
                self.traj = None;
                self.t = 0.0;
                continue;
            }
            if self.t > traj.duration + SETTLE_TIMEOUT {
                self.send_all(ctx, [0.0; 4]);
                let what = stage.segment.map(|s| format!("{s:?}")).unwrap_or_else(|| "pose".into());
                return Progress::Aborted(format!("{what} did not settle within {SETTLE_TIMEOUT} s"));
            }
            let (want, _) = traj.at((self.t + ctx.dt).min(traj.duration));
            let vel: Joints<f64> = std::array::from_fn(|j| {
                let cap = self.vmax[j] * TRACKING_HEADROOM;
                ((want[j] - q[j]) / ctx.dt).clamp(-cap, cap)
            });
            self.send_all(ctx, vel);
            self.t += ctx.dt;
            let left = (traj.duration - self.t).max(0.0) + (self.stages.len() - self.current - 1) as f64;
            return Progress::Running(left);
        }
    }

    fn cancel(&mut self, ctx: &mut ServerCtx<'_>) {
        self.send_all(ctx, [0.0; 4]);
    }
}

struct ChangePose;

impl SubtaskServer for ChangePose {
    fn name(&self) -> &'static str {
        CHANGE_POSE
    }

    fn start(&self, payload: &GoalPayload, ctx: &mut ServerCtx<'_>) -> Result<Box<dyn Execution>, ServerError> {
        check_machine(CHANGE_POSE, ZX200, payload)?;
        let target = pose_target(ctx.record(payload)?, ctx)?;
        let stage = Stage { target, segment: None, hook: Hook::Nothing };
        Ok(Box::new(ArmMotion::new(vec![stage], ctx)))
    }
}

struct ExcavateSimple;

impl SubtaskServer for ExcavateSimple {
    fn name(&self) -> &'static str {
        EXCAVATE_SIMPLE
    }

    fn start(&self, payload: &GoalPayload, ctx: &mut ServerCtx<'_>) -> Result<Box<dyn Execution>, ServerError> {
        check_machine(EXCAVATE_SIMPLE, ZX200, payload)?;
        let rec = ctx.record(payload)?;
        let ex = base(ctx);
        let p = position(rec, &ex)?;
        let tw = num(rec, "theta_w")?;
        let scoop = rec.f64_field("scoop").unwrap_or(ctx.site.config.excavator.bucket_capacity);
        let at = [num(rec, "x")?, num(rec, "y")?];
        let targets = dig_script(p, tw, &ctx.site.config.excavator.geometry)?;
        let stages = targets
            .into_iter()
            .zip(DIG_SEGMENTS)
            .map(|(target, seg)| Stage {
                target,
                segment: Some(seg),
                hook: if seg == Segment::Drag { Hook::Dig { at, scoop } } else { Hook::Nothing },
            })
            .collect();
        Ok(Box::new(ArmMotion::new(stages, ctx)))
    }
}

struct ReleaseSimple;

impl SubtaskServer for ReleaseSimple {
    fn name(&self) -> &'static str {
        RELEASE_SIMPLE
    }

    fn start(&self, payload: &GoalPayload, ctx: &mut ServerCtx<'_>) -> Result<Box<dyn Execution>, ServerError> {
        check_machine(RELEASE_SIMPLE, ZX200, payload)?;
        let rec = ctx.record(payload)?;
        let ex = base(ctx);
        let p = position(rec, &ex)?;
        let at = [num(rec, "x")?, num(rec, "y")?];
        let targets = release_script(p, num(rec, "theta_w")?, num(rec, "target_angle")?, &ctx.site.config.excavator.geometry)?;
        let stages = targets
            .into_iter()
            .zip(RELEASE_SEGMENTS)
            .map(|(target, seg)| Stage {
                target,
                segment: Some(seg),
                hook: if seg == Segment::Open { Hook::Release { at } } else { Hook::Nothing },
            })
            .collect();
        Ok(Box::new(ArmMotion::new(stages, ctx)))
    }
}
