//! Scripted bucket paths for digging and releasing soil.

use serde::{Deserialize, Serialize};

use super::kinematics::{inverse_kinematics, ArmGeometry, IkError, Joints, BUCKET};

/// Bucket angle to the ground while carrying soil.
pub const CARRY_THETA_W: f64 = 0.5;
/// Height of the pre-dig and curl poses above the cut.
pub const CLEARANCE: f64 = 1.0;
/// How deep the tip enters the soil.
pub const CUT_DEPTH: f64 = 0.2;
/// Length of the drag towards the machine.
pub const DRAG: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    PreDig,
    Approach,
    Drag,
    Curl,
    Carry,
    Open,
    Close,
}

/// Tip poses of the dig script for a cut at `target` (base frame, z is
/// the soil surface) with the bucket at `theta_w`. The curl lifts the
/// bucket back above the cut point.
pub fn dig_poses(target: [f64; 3], theta_w: f64) -> [([f64; 3], f64); 4] {
    let [x, y, z] = target;
    let r = x.hypot(y);
    let (ux, uy) = if r > 0.0 { (x / r, y / r) } else { (1.0, 0.0) };
    let end = [x - DRAG * ux, y - DRAG * uy];
    [
        ([x, y, z + CLEARANCE], theta_w),
        ([x, y, z - CUT_DEPTH], theta_w),
        ([end[0], end[1], z - CUT_DEPTH], theta_w),
        ([x, y, z + CLEARANCE], CARRY_THETA_W),
    ]
}

pub const DIG_SEGMENTS: [Segment; 4] = [Segment::PreDig, Segment::Approach, Segment::Drag, Segment::Curl];

/// Joint targets for the whole dig script, or the first failure.
pub fn dig_script(target: [f64; 3], theta_w: f64, geom: &ArmGeometry<f64>) -> Result<[Joints<f64>; 4], IkError> {
    let poses = dig_poses(target, theta_w);
    let mut out = [[0.0; 4]; 4];
    for (slot, (p, tw)) in out.iter_mut().zip(poses) {
        *slot = inverse_kinematics(p, tw, geom)?;
    }
    Ok(out)
}

pub const RELEASE_SEGMENTS: [Segment; 3] = [Segment::Carry, Segment::Open, Segment::Close];

/// Carry pose over `target` (base frame), the same pose with the bucket
/// joint opened to `open_angle`, and back.
pub fn release_script(target: [f64; 3], theta_w: f64, open_angle: f64, geom: &ArmGeometry<f64>) -> Result<[Joints<f64>; 3], IkError> {
    let carry = inverse_kinematics(target, theta_w, geom)?;
    let mut open = carry;
    open[BUCKET] = open_angle;
    let [lo, hi] = geom.limits[BUCKET];
    if open_angle < lo || open_angle > hi {
        return Err(IkError::JointLimitViolation { joint: "bucket", value: open_angle });
    }
    Ok([carry, open, carry])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manip::forward_kinematics;

    #[test]
    fn drag_moves_towards_base() {
        let p = dig_poses([6.0, 0.0, 1.0], -1.0);
        assert_eq!(p[0].0, [6.0, 0.0, 2.0]);
        assert_eq!(p[2].0, [5.0, 0.0, 0.8]);
        assert_eq!(p[3], ([6.0, 0.0, 2.0], CARRY_THETA_W));
    }

    #[test]
    fn script_joints_reach_poses() {
        let g = ArmGeometry::default();
        let joints = dig_script([6.0, -1.0, 1.5], -1.0, &g).unwrap();
        for (q, (p, tw)) in joints.iter().zip(dig_poses([6.0, -1.0, 1.5], -1.0)) {
            let tip = forward_kinematics(q, &g);
            for (got, want) in tip.position.iter().zip(p) {
                assert!((got - want).abs() < 1e-9);
            }
            assert!((tip.theta_w - tw).abs() < 1e-9);
        }
    }

    #[test]
    fn too_close_is_rejected() {
        assert!(dig_script([1.0, 0.0, 0.0], -1.0, &ArmGeometry::default()).is_err());
    }
}
