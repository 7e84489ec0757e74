//! Dynamic-window local planner.
//!
//! Velocity pairs reachable within one control period are sampled, each is
//! rolled out for a short horizon, rollouts that touch a lethal cell are
//! discarded, and the rest are scored by weighted critics. Reverse motion is
//! supported: when driving backwards the direction of travel is the heading
//! plus pi.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::grid::{CostGrid, LETHAL};
use crate::scalar::wrap_angle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Reverse,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Reverse => -1.0,
        }
    }

    /// Drive forwards when the arrival heading roughly agrees with the
    /// direction of travel, backwards otherwise.
    pub fn for_leg(from: [f64; 2], to: [f64; 2], arrival_yaw: f64) -> Direction {
        let travel = (to[1] - from[1]).atan2(to[0] - from[0]);
        if wrap_angle(arrival_yaw - travel).cos() >= 0.0 {
            Direction::Forward
        } else {
            Direction::Reverse
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DwaParams {
    pub v_max: f64,
    pub w_max: f64,
    pub acc_v: f64,
    pub acc_w: f64,
    pub control_dt: f64,
    pub sim_time: f64,
    pub sim_step: f64,
    pub v_samples: usize,
    pub w_samples: usize,
    pub w_path: f64,
    pub w_goal: f64,
    pub w_obstacle: f64,
    pub w_speed: f64,
    pub w_heading: f64,
    /// Distance along the path to the point the goal critic aims at.
    pub lookahead: f64,
    /// Above this heading error the robot turns on the spot first.
    pub rotate_first: f64,
    /// Speed limit near the goal is `approach_gain * distance`.
    pub approach_gain: f64,
    pub min_approach_speed: f64,
    pub yaw_gain: f64,
    pub min_yaw_rate: f64,
}

impl Default for DwaParams {
    fn default() -> Self {
        Self {
            v_max: 1.0,
            w_max: 0.5,
            acc_v: 1.0,
            acc_w: 2.0,
            control_dt: 0.1,
            sim_time: 1.5,
            sim_step: 0.1,
            v_samples: 11,
            w_samples: 21,
            w_path: 3.2,
            w_goal: 2.4,
            w_obstacle: 1.0,
            w_speed: 0.5,
            w_heading: 2.0,
            lookahead: 2.0,
            rotate_first: 0.8,
            approach_gain: 0.8,
            min_approach_speed: 0.05,
            yaw_gain: 1.5,
            min_yaw_rate: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("every sampled command collides within the rollout horizon")]
pub struct NoAdmissibleCommand;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub v: f64,
    pub w: f64,
    pub score: f64,
}

/// Simulate a constant command; returns the poses after each sub-step.
pub fn rollout(pose: [f64; 3], v: f64, w: f64, params: &DwaParams) -> Vec<[f64; 3]> {
    let n = (params.sim_time / params.sim_step).round() as usize;
    let mut p = pose;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        p = [
            p[0] + v * p[2].cos() * params.sim_step,
            p[1] + v * p[2].sin() * params.sim_step,
            wrap_angle(p[2] + w * params.sim_step),
        ];
        out.push(p);
    }
    out
}

fn closest_index(path: &[[f64; 2]], p: [f64; 2]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, q) in path.iter().enumerate() {
        let d = (q[0] - p[0]).hypot(q[1] - p[1]);
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

fn dist_to_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (a[0] + t * dx - p[0]).hypot(a[1] + t * dy - p[1])
}

fn dist_to_path(path: &[[f64; 2]], p: [f64; 2]) -> f64 {
    if path.len() == 1 {
        return (path[0][0] - p[0]).hypot(path[0][1] - p[1]);
    }
    path.windows(2).map(|w| dist_to_segment(w[0], w[1], p)).fold(f64::INFINITY, f64::min)
}

/// Point `lookahead` metres further along the path than the point closest to `p`.
pub fn lookahead_point(path: &[[f64; 2]], p: [f64; 2], lookahead: f64) -> [f64; 2] {
    let mut i = closest_index(path, p);
    let mut travelled = 0.0;
    while i + 1 < path.len() && travelled < lookahead {
        travelled += (path[i + 1][0] - path[i][0]).hypot(path[i + 1][1] - path[i][1]);
        i += 1;
    }
    path[i]
}

fn window(current: f64, acc: f64, dt: f64, lo: f64, hi: f64) -> (f64, f64) {
    ((current - acc * dt).max(lo), (current + acc * dt).min(hi))
}

fn samples(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || hi <= lo {
        return vec![0.5 * (lo + hi)];
    }
    let mut out: Vec<f64> = (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect();
    // make sure standing still is always a candidate when it is admissible
    if lo <= 0.0 && hi >= 0.0 && !out.contains(&0.0) {
        out.push(0.0);
    }
    out
}

/// Score every admissible sample; lower is better. `speed_cap` bounds |v|.
pub fn score_window(
    pose: [f64; 3],
    vel: (f64, f64),
    path: &[[f64; 2]],
    grid: &CostGrid,
    params: &DwaParams,
    direction: Direction,
    speed_cap: f64,
) -> Vec<Rollout> {
    let cap = speed_cap.min(params.v_max);
    let (vlo, vhi) = match direction {
        Direction::Forward => (0.0, cap),
        Direction::Reverse => (-cap, 0.0),
    };
    let (vlo, vhi) = window(vel.0, params.acc_v, params.control_dt, vlo, vhi);
    let (wlo, whi) = window(vel.1, params.acc_w, params.control_dt, -params.w_max, params.w_max);
    let (vlo, vhi) = if vlo > vhi { (vhi, vhi) } else { (vlo, vhi) };
    let target = lookahead_point(path, [pose[0], pose[1]], params.lookahead);
    let mut out = vec![];
    for v in samples(vlo, vhi, params.v_samples) {
        for w in samples(wlo, whi, params.w_samples) {
            let traj = rollout(pose, v, w, params);
            let mut worst = 0u8;
            let mut blocked = false;
            for p in &traj {
                let c = grid.cost_at(p[0], p[1]);
                if c >= LETHAL {
                    blocked = true;
                    break;
                }
                worst = worst.max(c);
            }
            if blocked {
                continue;
            }
            let end = *traj.last().expect("non-empty rollout");
            let motion_yaw = if direction == Direction::Reverse { end[2] + std::f64::consts::PI } else { end[2] };
            let to_target = (target[1] - end[1]).atan2(target[0] - end[0]);
            let goal_d = (target[0] - end[0]).hypot(target[1] - end[1]);
            let heading = if goal_d > 1e-6 { wrap_angle(to_target - motion_yaw).abs() } else { 0.0 };
            let score = params.w_path * dist_to_path(path, [end[0], end[1]])
                + params.w_goal * goal_d
                + params.w_obstacle * worst as f64 / (LETHAL - 1) as f64
                + params.w_speed * (params.v_max - v.abs())
                + params.w_heading * heading;
            out.push(Rollout { v, w, score });
        }
    }
    out
}

/// One dynamic-window decision following `path` in `direction`.
pub fn plan_local(
    pose: [f64; 3],
    vel: (f64, f64),
    path: &[[f64; 2]],
    grid: &CostGrid,
    params: &DwaParams,
    direction: Direction,
    speed_cap: f64,
) -> Result<(f64, f64), NoAdmissibleCommand> {
    let scored = score_window(pose, vel, path, grid, params, direction, speed_cap);
    scored
        .iter()
        .min_by(|a, b| a.score.partial_cmp(&b.score).expect("finite scores"))
        .map(|r| (r.v, r.w))
        .ok_or(NoAdmissibleCommand)
}

/// Angular rate that turns towards `error`, limited by acceleration and rate.
pub fn turn_rate(error: f64, current_w: f64, params: &DwaParams) -> f64 {
    let mut w = (params.yaw_gain * error).clamp(-params.w_max, params.w_max);
    if w.abs() < params.min_yaw_rate {
        w = params.min_yaw_rate.min(error.abs() / params.control_dt).copysign(error);
    }
    let (lo, hi) = window(current_w, params.acc_w, params.control_dt, -params.w_max, params.w_max);
    w.clamp(lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum Approach {
    /// Command to send while still underway.
    Drive { v: f64, w: f64 },
    /// Within tolerance of the goal pose.
    Arrived,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub position: f64,
    /// `None` for position-only goals.
    pub yaw: Option<f64>,
}

/// Full approach behaviour towards `goal` along `path`: turn onto the path,
/// follow it with the dynamic window, slow down near the goal, then align
/// the heading in place.
#[allow(clippy::too_many_arguments)]
pub fn approach(
    pose: [f64; 3],
    vel: (f64, f64),
    goal: [f64; 3],
    path: &[[f64; 2]],
    grid: &CostGrid,
    params: &DwaParams,
    direction: Direction,
    tol: Tolerance,
) -> Result<Approach, NoAdmissibleCommand> {
    let dist = (goal[0] - pose[0]).hypot(goal[1] - pose[1]);
    if dist <= tol.position {
        let Some(yaw_tol) = tol.yaw else { return Ok(Approach::Arrived) };
        let err = wrap_angle(goal[2] - pose[2]);
        if err.abs() <= yaw_tol {
            return Ok(Approach::Arrived);
        }
        return Ok(Approach::Drive { v: 0.0, w: turn_rate(err, vel.1, params) });
    }
    let target = lookahead_point(path, [pose[0], pose[1]], params.lookahead);
    let aim = if (target[0] - pose[0]).hypot(target[1] - pose[1]) < 1e-6 { [goal[0], goal[1]] } else { target };
    let travel = (aim[1] - pose[1]).atan2(aim[0] - pose[0]);
    let motion_yaw = if direction == Direction::Reverse { pose[2] + std::f64::consts::PI } else { pose[2] };
    let err = wrap_angle(travel - motion_yaw);
    if err.abs() > params.rotate_first && vel.0.abs() < 1e-9 {
        return Ok(Approach::Drive { v: 0.0, w: turn_rate(err, vel.1, params) });
    }
    let cap = (params.approach_gain * dist).max(params.min_approach_speed);
    let (v, w) = plan_local(pose, vel, path, grid, params, direction, cap)?;
    Ok(Approach::Drive { v, w })
}
