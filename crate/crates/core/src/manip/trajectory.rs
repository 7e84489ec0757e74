//! Synchronized trapezoidal joint trajectories.
//!
//! Every joint uses its own acceleration limit; the slowest joint fixes the
//! duration and the others lower their cruise speed so that all of them
//! arrive together.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::kinematics::Joints;
use crate::scalar::Scalar;

/// One joint's velocity profile: ramp up, cruise at `v_peak`, ramp down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Profile<T> {
    pub start: T,
    /// Signed displacement.
    pub delta: T,
    pub v_peak: T,
    pub accel: T,
    pub duration: T,
}

impl<T: Scalar> Profile<T> {
    fn ramp_time(&self) -> T {
        if self.accel > T::zero() {
            self.v_peak / self.accel
        } else {
            T::zero()
        }
    }

    /// Position and velocity at `t`, clamped to the profile's span.
    pub fn eval(&self, t: T) -> (T, T) {
        if self.delta == T::zero() || self.duration == T::zero() {
            return (self.start + self.delta, T::zero());
        }
        let sign = self.delta.signum();
        let d = self.delta.abs();
        let half = T::lit(0.5);
        let tr = self.ramp_time();
        let t = t.max(T::zero()).min(self.duration);
        let (s, v) = if t < tr {
            (half * self.accel * t * t, self.accel * t)
        } else if t <= self.duration - tr {
            (half * self.accel * tr * tr + self.v_peak * (t - tr), self.v_peak)
        } else {
            let tau = self.duration - t;
            (d - half * self.accel * tau * tau, self.accel * tau)
        };
        (self.start + sign * s, sign * v)
    }

    /// Times at which the acceleration changes.
    pub fn breakpoints(&self) -> [T; 2] {
        let tr = self.ramp_time();
        [tr, self.duration - tr]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajSample<T> {
    pub t: T,
    pub q: Joints<T>,
    pub v: Joints<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTrajectory<T> {
    pub profiles: [Profile<T>; 4],
    pub duration: T,
    pub samples: Vec<TrajSample<T>>,
}

impl<T: Scalar> JointTrajectory<T> {
    pub fn at(&self, t: T) -> (Joints<T>, Joints<T>) {
        let mut q = [T::zero(); 4];
        let mut v = [T::zero(); 4];
        for (j, p) in self.profiles.iter().enumerate() {
            (q[j], v[j]) = p.eval(t);
        }
        (q, v)
    }

    pub fn target(&self) -> Joints<T> {
        self.profiles.map(|p| p.start + p.delta)
    }
}

/// Shortest time to travel `d` from rest to rest.
pub fn min_duration<T: Scalar>(d: T, vmax: T, amax: T) -> T {
    let d = d.abs();
    if d == T::zero() {
        return T::zero();
    }
    if d >= vmax * vmax / amax {
        d / vmax + vmax / amax
    } else {
        T::lit(2.0) * (d / amax).sqrt()
    }
}

/// Cruise speed that covers `d` in exactly `duration` with acceleration `a`.
pub fn cruise_speed<T: Scalar>(d: T, duration: T, a: T) -> T {
    let d = d.abs();
    if d == T::zero() {
        return T::zero();
    }
    let at = a * duration;
    let disc = (at * at - T::lit(4.0) * a * d).max(T::zero());
    (at - disc.sqrt()) / T::lit(2.0)
}

/// Plan from `current` to `target`, sampled every `sample_dt` plus every
/// profile breakpoint so that piecewise-linear velocities integrate exactly.
pub fn plan_trajectory<T: Scalar>(
    current: Joints<T>,
    target: Joints<T>,
    vmax: Joints<T>,
    amax: Joints<T>,
    sample_dt: T,
) -> JointTrajectory<T> {
    let duration = (0..4)
        .map(|j| min_duration(target[j] - current[j], vmax[j], amax[j]))
        .fold(T::zero(), |a, b| a.max(b));
    let profiles: [Profile<T>; 4] = std::array::from_fn(|j| {
        let delta = target[j] - current[j];
        Profile { start: current[j], delta, v_peak: cruise_speed(delta, duration, amax[j]), accel: amax[j], duration }
    });
    let mut traj = JointTrajectory { profiles, duration, samples: vec![] };
    if duration == T::zero() {
        traj.samples.push(TrajSample { t: T::zero(), q: current, v: [T::zero(); 4] });
        return traj;
    }
    let mut times = vec![T::zero(), duration];
    let mut k = 1;
    loop {
        let t = sample_dt * T::from_usize(k).expect("sample index");
        if t >= duration {
            break;
        }
        times.push(t);
        k += 1;
    }
    for p in &traj.profiles {
        for b in p.breakpoints() {
            if b > T::zero() && b < duration {
                times.push(b);
            }
        }
    }
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    times.dedup_by(|a, b| (*a - *b).abs() <= T::epsilon() * duration);
    traj.samples = times
        .into_iter()
        .map(|t| {
            let (q, v) = traj.at(t);
            TrajSample { t, q, v }
        })
        .collect();
    // the first sample must be the current state exactly
    traj.samples[0].q = current;
    traj
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("time {t} outside trajectory of duration {duration}")]
pub struct OutOfRange {
    pub t: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointCommand<T> {
    pub joint: u8,
    pub vel: T,
    /// Valve opening in permille of full scale.
    pub valve: i16,
}

pub fn valve_for<T: Scalar>(vel: T, vmax: T) -> i16 {
    if vmax <= T::zero() {
        return 0;
    }
    let permille = (vel / vmax * T::lit(1000.0)).round().max(T::lit(-1000.0)).min(T::lit(1000.0));
    permille.to_f64_lossy() as i16
}

/// Planned joint velocities at `t`, with matching valve openings.
pub fn trajectory_to_commands<T: Scalar>(
    traj: &JointTrajectory<T>,
    t: T,
    vmax: Joints<T>,
) -> Result<[JointCommand<T>; 4], OutOfRange> {
    if t < T::zero() || t > traj.duration {
        return Err(OutOfRange { t: t.to_f64_lossy(), duration: traj.duration.to_f64_lossy() });
    }
    let (_, v) = traj.at(t);
    Ok(std::array::from_fn(|j| JointCommand { joint: j as u8, vel: v[j], valve: valve_for(v[j], vmax[j]) }))
}

#[cfg(test)]
mod tests {
    use super::*;

    const V: Joints<f64> = [0.5; 4];
    const A: Joints<f64> = [1.0; 4];

    #[test]
    fn identity_is_single_sample() {
        let q = [0.1, 0.2, -0.3, 0.4];
        let tr = plan_trajectory(q, q, V, A, 0.1);
        assert_eq!(tr.duration, 0.0);
        assert_eq!(tr.samples.len(), 1);
        assert_eq!(tr.samples[0].q, q);
    }

    #[test]
    fn one_radian_trapezoid() {
        // ramps of 0.5 s cover 0.125 rad each, cruise covers 0.75 rad in 1.5 s
        let tr = plan_trajectory([0.0; 4], [0.0, 1.0, 0.0, 0.0], V, A, 0.1);
        assert!((tr.duration - 2.5).abs() < 1e-12);
        assert_eq!(tr.samples.last().unwrap().q[1], 1.0);
        assert_eq!(tr.samples.last().unwrap().v[1], 0.0);
    }

    #[test]
    fn joints_finish_together() {
        let tr = plan_trajectory([0.0; 4], [0.3, 1.0, -2.0, 0.05], V, A, 0.1);
        for p in &tr.profiles {
            let (q, v) = p.eval(tr.duration);
            assert!((q - (p.start + p.delta)).abs() < 1e-9);
            assert!(v.abs() < 1e-9);
            assert!(p.v_peak <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn commands_follow_profile() {
        let tr = plan_trajectory([0.0; 4], [0.0, 1.0, 0.0, 0.0], V, A, 0.1);
        let c0 = trajectory_to_commands(&tr, 0.0, V).unwrap();
        assert!(c0.iter().all(|c| c.vel == 0.0 && c.valve == 0));
        let mid = trajectory_to_commands(&tr, 1.2, V).unwrap();
        assert_eq!(mid[1].vel, 0.5);
        assert_eq!(mid[1].valve, 1000);
        let back = plan_trajectory([0.0; 4], [0.0, -1.0, 0.0, 0.0], V, A, 0.1);
        assert_eq!(trajectory_to_commands(&back, 1.2, V).unwrap()[1].valve, -1000);
        assert!(trajectory_to_commands(&tr, 2.6, V).is_err());
    }

    #[test]
    fn short_move_is_triangular() {
        let tr = plan_trajectory([0.0; 4], [0.1, 0.0, 0.0, 0.0], V, A, 0.1);
        assert!((tr.duration - 2.0 * 0.1f64.sqrt()).abs() < 1e-12);
    }
}
