//! Kinematic plants for the crawler dump and the excavator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::terrain::Terrain;
use crate::manip::ArmGeometry;
use crate::scalar::wrap_angle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpLimits {
    pub v_max: f64,
    pub w_max: f64,
    pub capacity: f64,
    pub max_tilt: f64,
    /// Vessel servo rate, rad/s.
    pub tilt_rate: f64,
    /// The load slides out at or above this angle.
    pub release_angle: f64,
    /// Half side of the square vessel footprint centred on the pose.
    pub vessel_half: f64,
    /// Distance behind the pose where released soil lands.
    pub dump_offset: f64,
    pub dump_radius: f64,
}

impl Default for DumpLimits {
    fn default() -> Self {
        Self {
            v_max: 1.5,
            w_max: 0.5,
            capacity: 5.5,
            max_tilt: 1.2,
            tilt_rate: 0.5,
            release_angle: 0.7,
            vessel_half: 1.0,
            dump_offset: 2.0,
            dump_radius: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpState {
    /// x, y, yaw in the site frame.
    pub pose: [f64; 3],
    pub v: f64,
    pub w: f64,
    pub vessel_angle: f64,
    pub vessel_target: f64,
    pub vessel_load: f64,
}

impl DumpState {
    pub fn at(pose: [f64; 3]) -> Self {
        Self { pose, v: 0.0, w: 0.0, vessel_angle: 0.0, vessel_target: 0.0, vessel_load: 0.0 }
    }

    pub fn fill(&self, limits: &DumpLimits) -> f64 {
        self.vessel_load / limits.capacity
    }

    /// Site-frame point at vessel-frame offset (forward, left).
    pub fn vessel_point(&self, forward: f64, left: f64) -> [f64; 2] {
        let (s, c) = self.pose[2].sin_cos();
        [self.pose[0] + forward * c - left * s, self.pose[1] + forward * s + left * c]
    }

    /// Vessel-frame offset of a site-frame point.
    pub fn to_vessel_frame(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.pose[2].sin_cos();
        let (dx, dy) = (p[0] - self.pose[0], p[1] - self.pose[1]);
        [dx * c + dy * s, -dx * s + dy * c]
    }

    pub fn over_vessel(&self, p: [f64; 2], limits: &DumpLimits) -> bool {
        let [f, l] = self.to_vessel_frame(p);
        f.abs() <= limits.vessel_half && l.abs() <= limits.vessel_half
    }
}

/// Unicycle step with the command clamped to the machine limits.
pub fn step_dump(state: &DumpState, cmd: (f64, f64), dt: f64, limits: &DumpLimits) -> DumpState {
    let v = cmd.0.clamp(-limits.v_max, limits.v_max);
    let w = cmd.1.clamp(-limits.w_max, limits.w_max);
    let [x, y, yaw] = state.pose;
    let mut next = state.clone();
    next.pose = [x + v * yaw.cos() * dt, y + v * yaw.sin() * dt, wrap_angle(yaw + w * dt)];
    next.v = v;
    next.w = w;
    let target = state.vessel_target.clamp(0.0, limits.max_tilt);
    let step = limits.tilt_rate * dt;
    let delta = (target - state.vessel_angle).clamp(-step, step);
    next.vessel_angle = (state.vessel_angle + delta).clamp(0.0, limits.max_tilt);
    next
}

/// Result of loading soil into the vessel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transfer {
    pub loaded: f64,
    pub spilled: f64,
}

pub fn transfer_to_vessel(dump: &mut DumpState, volume: f64, limits: &DumpLimits) -> Transfer {
    let volume = volume.max(0.0);
    let loaded = volume.min((limits.capacity - dump.vessel_load).max(0.0));
    dump.vessel_load += loaded;
    Transfer { loaded, spilled: volume - loaded }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VesselError {
    #[error("vessel is at {angle} rad, below the release angle")]
    VesselClosed { angle: f64 },
}

/// Tip the vessel's load onto the ground behind the dump. Returns the
/// volume placed on the terrain.
pub fn dump_vessel(dump: &mut DumpState, terrain: &mut Terrain, limits: &DumpLimits) -> Result<f64, VesselError> {
    if dump.vessel_angle < limits.release_angle {
        return Err(VesselError::VesselClosed { angle: dump.vessel_angle });
    }
    if dump.vessel_load <= 0.0 {
        return Ok(0.0);
    }
    let spot = dump.vessel_point(-limits.dump_offset, 0.0);
    let placed = terrain.deposit(spot, dump.vessel_load, limits.dump_radius);
    dump.vessel_load = 0.0;
    Ok(placed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcavatorState {
    pub base_pose: [f64; 3],
    pub joints: [f64; 4],
    pub joint_vel: [f64; 4],
    /// Last valve opening per joint, permille. Carried, not actuated.
    pub valves: [i16; 4],
    pub bucket_load: f64,
}

impl ExcavatorState {
    pub fn at(base_pose: [f64; 3], joints: [f64; 4]) -> Self {
        Self { base_pose, joints, joint_vel: [0.0; 4], valves: [0; 4], bucket_load: 0.0 }
    }

    /// Site-frame position of a base-frame point.
    pub fn to_site(&self, p: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.base_pose[2].sin_cos();
        [self.base_pose[0] + p[0] * c - p[1] * s, self.base_pose[1] + p[0] * s + p[1] * c, p[2]]
    }

    pub fn to_base(&self, p: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.base_pose[2].sin_cos();
        let (dx, dy) = (p[0] - self.base_pose[0], p[1] - self.base_pose[1]);
        [dx * c + dy * s, -dx * s + dy * c, p[2]]
    }
}

/// One joint-velocity command as carried by a `JointVelCmd` frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointVel {
    pub joint: u8,
    pub vel: f64,
    pub valve: i16,
}

/// Integrate the commanded joint velocities; joints without a command in
/// this step hold still. Joints stop at their limits.
pub fn step_excavator(state: &ExcavatorState, cmds: &[JointVel], dt: f64, geom: &ArmGeometry<f64>) -> ExcavatorState {
    let mut next = state.clone();
    next.joint_vel = [0.0; 4];
    next.valves = [0; 4];
    for c in cmds {
        let j = c.joint as usize;
        if j < 4 {
            next.joint_vel[j] = c.vel;
            next.valves[j] = c.valve;
        }
    }
    for j in 0..4 {
        let [lo, hi] = geom.limits[j];
        let q = (state.joints[j] + next.joint_vel[j] * dt).clamp(lo, hi);
        next.joint_vel[j] = (q - state.joints[j]) / dt;
        next.joints[j] = q;
    }
    next
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    #[test]
    fn dump_integrates_and_clamps() {
        let l = DumpLimits::default();
        let s = step_dump(&DumpState::at([0.0; 3]), (1.0, 0.0), 0.1, &l);
        assert_eq!(s.pose, [0.1, 0.0, 0.0]);
        let wide = DumpLimits { w_max: 10.0, ..l.clone() };
        let s = step_dump(&DumpState::at([0.0; 3]), (0.0, PI), 0.5, &wide);
        assert_eq!(s.pose[2], PI / 2.0);
        let s = step_dump(&DumpState::at([0.0; 3]), (10.0, 0.0), 1.0, &l);
        assert_eq!(s.v, 1.5);
    }

    #[test]
    fn vessel_overflow_spills() {
        let l = DumpLimits::default();
        let mut d = DumpState::at([0.0; 3]);
        d.vessel_load = 5.0;
        let t = transfer_to_vessel(&mut d, 0.8, &l);
        assert_eq!(d.vessel_load, 5.5);
        assert!((t.spilled - 0.3).abs() < 1e-12);
        let t = transfer_to_vessel(&mut d, 0.0, &l);
        assert_eq!((t.loaded, t.spilled), (0.0, 0.0));
    }

    #[test]
    fn dump_needs_open_vessel() {
        let l = DumpLimits::default();
        let mut terrain = Terrain::flat(40, 40, 0.25, [0.0, 0.0]);
        let mut d = DumpState::at([5.0, 5.0, 0.0]);
        d.vessel_load = 5.5;
        d.vessel_angle = 0.1;
        assert!(matches!(dump_vessel(&mut d, &mut terrain, &l), Err(VesselError::VesselClosed { .. })));
        d.vessel_angle = 0.8;
        let placed = dump_vessel(&mut d, &mut terrain, &l).unwrap();
        assert!((placed - 5.5).abs() < 1e-12);
        assert_eq!(d.vessel_load, 0.0);
        assert!((terrain.volume() - 5.5).abs() < 1e-12);
        // behind a dump facing +x means smaller x
        assert!(terrain.height_at(3.0, 5.0).unwrap() > 0.0);
        assert_eq!(terrain.height_at(7.0, 5.0).unwrap(), 0.0);
    }

    #[test]
    fn excavator_joint_limits() {
        let g = ArmGeometry::default();
        let s = ExcavatorState::at([0.0; 3], [0.0, 0.0, -1.0, 0.0]);
        let n = step_excavator(&s, &[JointVel { joint: 1, vel: 0.1, valve: 200 }], 1.0, &g);
        assert!((n.joints[1] - 0.1).abs() < 1e-15);
        let n = step_excavator(&s, &[JointVel { joint: 2, vel: 5.0, valve: 1000 }], 1.0, &g);
        assert_eq!(n.joints[2], 0.0);
        let n = step_excavator(&s, &[], 0.1, &g);
        assert_eq!(n.joints, s.joints);
    }
}
