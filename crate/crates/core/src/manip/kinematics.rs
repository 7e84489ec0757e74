//! Forward and inverse kinematics of the swing/boom/arm/bucket chain.
//!
//! Swing rotates about the vertical axis through the base. Boom, arm and
//! bucket pitch in the swing plane, each angle measured relative to the
//! previous link (boom relative to horizontal). `theta_w` is the pitch of
//! the bucket link relative to the ground, positive upwards.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{wrap_angle, Scalar};

pub const SWING: usize = 0;
pub const BOOM: usize = 1;
pub const ARM: usize = 2;
pub const BUCKET: usize = 3;
pub const JOINT_NAMES: [&str; 4] = ["swing", "boom", "arm", "bucket"];

pub type Joints<T> = [T; 4];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmGeometry<T> {
    pub l_boom: T,
    pub l_arm: T,
    pub l_bucket: T,
    pub boom_pivot_height: T,
    /// `[min, max]` per joint.
    pub limits: [[T; 2]; 4],
}

impl<T: Scalar> ArmGeometry<T> {
    /// Chain with unrestricted joints, handy for pure geometry.
    pub fn unlimited(l_boom: T, l_arm: T, l_bucket: T, boom_pivot_height: T) -> Self {
        let pi = T::PI();
        let big = T::lit(1e3);
        Self { l_boom, l_arm, l_bucket, boom_pivot_height, limits: [[-pi, pi], [-big, big], [-big, big], [-big, big]] }
    }

    pub fn within_limits(&self, joints: &Joints<T>) -> bool {
        joints.iter().zip(&self.limits).all(|(q, [lo, hi])| *q >= *lo && *q <= *hi)
    }

    pub fn clamp_to_limits(&self, joints: &Joints<T>) -> Joints<T> {
        let mut out = *joints;
        for (q, [lo, hi]) in out.iter_mut().zip(&self.limits) {
            *q = q.max(*lo).min(*hi);
        }
        out
    }
}

impl Default for ArmGeometry<f64> {
    fn default() -> Self {
        Self {
            l_boom: 5.7,
            l_arm: 2.9,
            l_bucket: 1.3,
            boom_pivot_height: 2.0,
            limits: [
                [-std::f64::consts::PI, std::f64::consts::PI],
                [-1.0, 1.4],
                [-2.9, 0.0],
                [-1.0, 3.2],
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TipPose<T> {
    /// Bucket tip in the base frame (x forward, z up from the ground).
    pub position: [T; 3],
    pub theta_w: T,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IkError {
    #[error("target is out of reach")]
    Unreachable,
    #[error("joint {joint} would be at {value}, outside its limits")]
    JointLimitViolation { joint: &'static str, value: f64 },
}

pub fn theta_w<T: Scalar>(joints: &Joints<T>) -> T {
    joints[BOOM] + joints[ARM] + joints[BUCKET]
}

pub fn forward_kinematics<T: Scalar>(joints: &Joints<T>, geom: &ArmGeometry<T>) -> TipPose<T> {
    let a1 = joints[BOOM];
    let a2 = a1 + joints[ARM];
    let a3 = theta_w(joints);
    let r = geom.l_boom * a1.cos() + geom.l_arm * a2.cos() + geom.l_bucket * a3.cos();
    let z = geom.boom_pivot_height + geom.l_boom * a1.sin() + geom.l_arm * a2.sin() + geom.l_bucket * a3.sin();
    let s = joints[SWING];
    TipPose { position: [r * s.cos(), r * s.sin(), z], theta_w: a3 }
}

/// Closed-form inverse kinematics, elbow-up branch.
///
/// The swing either faces the target or faces away from it with the tip
/// reaching back over the base; the first branch within the joint limits
/// wins.
pub fn inverse_kinematics<T: Scalar>(position: [T; 3], theta_w: T, geom: &ArmGeometry<T>) -> Result<Joints<T>, IkError> {
    let [x, y, _] = position;
    let swing = if x == T::zero() && y == T::zero() { T::zero() } else { y.atan2(x) };
    let r = x.hypot(y);
    let facing = planar_ik(swing, r, position[2], theta_w, geom);
    if facing.is_ok() || r == T::zero() {
        return facing;
    }
    planar_ik(swing + T::PI(), -r, position[2], theta_w, geom).or(facing)
}

fn planar_ik<T: Scalar>(swing: T, r: T, z: T, theta_w: T, geom: &ArmGeometry<T>) -> Result<Joints<T>, IkError> {
    let (l1, l2, l3) = (geom.l_boom, geom.l_arm, geom.l_bucket);
    let rw = r - l3 * theta_w.cos();
    let zw = z - geom.boom_pivot_height - l3 * theta_w.sin();
    let d = rw.hypot(zw);
    let eps = T::lit(1e-12) * (l1 + l2);
    if d > l1 + l2 + eps || d < (l1 - l2).abs() - eps {
        return Err(IkError::Unreachable);
    }
    let two = T::lit(2.0);
    let c2 = ((d * d - l1 * l1 - l2 * l2) / (two * l1 * l2)).max(-T::one()).min(T::one());
    let arm = -c2.acos();
    let boom = zw.atan2(rw) + (l2 * (-arm).sin()).atan2(l1 + l2 * arm.cos());
    let bucket = theta_w - boom - arm;
    let joints = [wrap_angle(swing), boom, arm, bucket];
    for (i, (q, [lo, hi])) in joints.iter().zip(&geom.limits).enumerate() {
        if *q < *lo || *q > *hi {
            return Err(IkError::JointLimitViolation { joint: JOINT_NAMES[i], value: q.to_f64_lossy() });
        }
    }
    Ok(joints)
}

/// Roll, pitch, yaw (ZYX) of a unit quaternion `[x, y, z, w]`.
pub fn quaternion_to_rpy<T: Scalar>(q: [T; 4]) -> (T, T, T) {
    let [x, y, z, w] = q;
    let two = T::lit(2.0);
    let one = T::one();
    let roll = (two * (w * x + y * z)).atan2(one - two * (x * x + y * y));
    let sp = (two * (w * y - z * x)).max(-one).min(one);
    let pitch = sp.asin();
    let yaw = (two * (w * z + x * y)).atan2(one - two * (y * y + z * z));
    (roll, pitch, yaw)
}

pub fn quaternion_from_rpy<T: Scalar>(roll: T, pitch: T, yaw: T) -> [T; 4] {
    let half = T::lit(0.5);
    let (sr, cr) = (roll * half).sin_cos();
    let (sp, cp) = (pitch * half).sin_cos();
    let (sy, cy) = (yaw * half).sin_cos();
    [
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
        cr * cp * cy + sr * sp * sy,
    ]
}

/// Bucket-link orientation for a tip at `position` with angle `theta_w`.
/// A positive (upward) theta_w is a negative pitch about the link's y axis.
pub fn quaternion_for_tip<T: Scalar>(position: [T; 3], theta_w: T) -> [T; 4] {
    let yaw = position[1].atan2(position[0]);
    quaternion_from_rpy(T::zero(), -theta_w, yaw)
}

/// Recover theta_w from a quaternion goal. The chain cannot roll and its
/// heading is fixed by the target position, so those components must vanish.
pub fn theta_w_from_quaternion<T: Scalar>(position: [T; 3], q: [T; 4]) -> Result<T, IkError> {
    let norm = q.iter().fold(T::zero(), |acc, c| acc + *c * *c).sqrt();
    if norm == T::zero() {
        return Err(IkError::Unreachable);
    }
    let q = q.map(|c| c / norm);
    let (roll, pitch, yaw) = quaternion_to_rpy(q);
    let tol = T::lit(1e-3);
    let heading = position[1].atan2(position[0]);
    if roll.abs() > tol || wrap_angle(yaw - heading).abs() > tol {
        return Err(IkError::Unreachable);
    }
    Ok(-pitch)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_6};

    use super::*;

    fn small() -> ArmGeometry<f64> {
        ArmGeometry::unlimited(2.0, 1.0, 0.5, 0.0)
    }

    #[test]
    fn colinear_chain() {
        let tip = forward_kinematics(&[0.0; 4], &small());
        assert_eq!(tip.position, [3.5, 0.0, 0.0]);
        assert_eq!(tip.theta_w, 0.0);
    }

    #[test]
    fn pure_swing() {
        let tip = forward_kinematics(&[FRAC_PI_2, 0.0, 0.0, 0.0], &small());
        assert!(tip.position[0].abs() < 1e-15);
        assert_eq!(tip.position[1], 3.5);
    }

    #[test]
    fn boom_and_arm_cancel() {
        let tip = forward_kinematics(&[0.0, FRAC_PI_6, -FRAC_PI_6, 0.0], &small());
        assert_eq!(tip.theta_w, 0.0);
        // boom rises 2*sin(30deg) = 1, arm and bucket are horizontal
        let r = 2.0 * FRAC_PI_6.cos() + 1.5;
        assert!((tip.position[0] - r).abs() < 1e-12);
        assert!((tip.position[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_of_zero_pose() {
        let q = inverse_kinematics([3.5, 0.0, 0.0], 0.0, &small()).unwrap();
        for (a, b) in q.iter().zip([0.0; 4]) {
            assert!((a - b).abs() < 1e-7, "{q:?}");
        }
    }

    #[test]
    fn far_target_unreachable() {
        assert_eq!(inverse_kinematics([10.0, 0.0, 0.0], 0.0, &small()), Err(IkError::Unreachable));
    }

    #[test]
    fn elbow_up_branch() {
        let g = small();
        let q = inverse_kinematics([2.0, 0.5, 0.3], -0.4, &g).unwrap();
        assert!(q[ARM] <= 0.0);
        // elbow sits above the pivot-wrist chord
        let tip = forward_kinematics(&q, &g);
        assert!((tip.theta_w + 0.4).abs() < 1e-12);
    }

    #[test]
    fn limits_are_enforced() {
        let g = ArmGeometry::<f64>::default();
        // straight up is beyond the boom's upper limit
        let err = inverse_kinematics([0.5, 0.0, 11.0], 1.5, &g).unwrap_err();
        assert!(matches!(err, IkError::JointLimitViolation { .. } | IkError::Unreachable));
    }

    #[test]
    fn quaternion_roundtrip() {
        let pos = [3.0f64, 4.0, 1.0];
        let q = quaternion_for_tip(pos, -0.7);
        assert!((theta_w_from_quaternion(pos, q).unwrap() + 0.7).abs() < 1e-12);
        let rolled = quaternion_from_rpy(0.1, 0.7, 4.0f64.atan2(3.0));
        assert_eq!(theta_w_from_quaternion(pos, rolled), Err(IkError::Unreachable));
    }

    #[test]
    fn works_in_single_precision() {
        let g = ArmGeometry::<f32>::unlimited(2.0, 1.0, 0.5, 0.0);
        let q = inverse_kinematics([2.5f32, 0.4, 0.2], -0.3, &g).unwrap();
        let tip = forward_kinematics(&q, &g);
        assert!((tip.position[0] - 2.5f32).abs() < 1e-4);
    }
}
