//! Planar pose EKF: unicycle prediction from odometry, position updates
//! from GNSS with chi-square gating.

use serde::{Deserialize, Serialize};

use crate::scalar::{wrap_angle, Scalar};

pub type Mat3<T> = [[T; 3]; 3];
pub type Mat2<T> = [[T; 2]; 2];

/// 99 % quantile of chi-square with two degrees of freedom.
pub const GATE_99_2DOF: f64 = 9.21;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EkfState<T> {
    /// x, y, yaw
    pub mean: [T; 3],
    pub cov: Mat3<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum GnssUpdate {
    Accepted { mahalanobis2: f64 },
    Rejected { mahalanobis2: f64 },
}

fn zero3<T: Scalar>() -> Mat3<T> {
    [[T::zero(); 3]; 3]
}

pub fn diag3<T: Scalar>(d: [T; 3]) -> Mat3<T> {
    let mut m = zero3();
    for i in 0..3 {
        m[i][i] = d[i];
    }
    m
}

fn mul3<T: Scalar>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut m = zero3();
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = (0..3).fold(T::zero(), |acc, k| acc + a[i][k] * b[k][j]);
        }
    }
    m
}

fn transpose3<T: Scalar>(a: &Mat3<T>) -> Mat3<T> {
    let mut m = zero3();
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = a[j][i];
        }
    }
    m
}

#[allow(clippy::needless_range_loop)]
fn symmetrize<T: Scalar>(p: &mut Mat3<T>) {
    let half = T::lit(0.5);
    for i in 0..3 {
        for j in (i + 1)..3 {
            let s = (p[i][j] + p[j][i]) * half;
            p[i][j] = s;
            p[j][i] = s;
        }
    }
}

impl<T: Scalar> EkfState<T> {
    pub fn new(mean: [T; 3], cov: Mat3<T>) -> Self {
        Self { mean, cov }
    }
}

/// Motion Jacobian of the unicycle step at `yaw`.
pub fn motion_jacobian<T: Scalar>(yaw: T, v: T, dt: T) -> Mat3<T> {
    let mut f = diag3([T::one(); 3]);
    f[0][2] = -v * yaw.sin() * dt;
    f[1][2] = v * yaw.cos() * dt;
    f
}

pub fn ekf_predict<T: Scalar>(s: &EkfState<T>, v: T, w: T, dt: T, q: &Mat3<T>) -> EkfState<T> {
    let [x, y, yaw] = s.mean;
    let mean = [x + v * yaw.cos() * dt, y + v * yaw.sin() * dt, wrap_angle(yaw + w * dt)];
    let f = motion_jacobian(yaw, v, dt);
    let mut cov = mul3(&mul3(&f, &s.cov), &transpose3(&f));
    for i in 0..3 {
        for j in 0..3 {
            cov[i][j] = cov[i][j] + q[i][j];
        }
    }
    symmetrize(&mut cov);
    EkfState { mean, cov }
}

/// Kalman update with a measured position `z` and covariance `r`. Updates
/// whose squared Mahalanobis distance exceeds `gate` leave the state as is.
pub fn ekf_update_gnss<T: Scalar>(s: &EkfState<T>, z: [T; 2], r: &Mat2<T>, gate: T) -> (EkfState<T>, GnssUpdate) {
    let p = &s.cov;
    let innov = [z[0] - s.mean[0], z[1] - s.mean[1]];
    let sm = [[p[0][0] + r[0][0], p[0][1] + r[0][1]], [p[1][0] + r[1][0], p[1][1] + r[1][1]]];
    let det = sm[0][0] * sm[1][1] - sm[0][1] * sm[1][0];
    let si = [[sm[1][1] / det, -sm[0][1] / det], [-sm[1][0] / det, sm[0][0] / det]];
    let d2 = innov[0] * (si[0][0] * innov[0] + si[0][1] * innov[1]) + innov[1] * (si[1][0] * innov[0] + si[1][1] * innov[1]);
    // a NaN distance is rejected too
    if d2.is_nan() || d2 > gate {
        return (*s, GnssUpdate::Rejected { mahalanobis2: d2.to_f64_lossy() });
    }
    // K = P H^T S^-1, H selects x and y
    let mut k = [[T::zero(); 2]; 3];
    for (i, row) in k.iter_mut().enumerate() {
        for (j, kij) in row.iter_mut().enumerate() {
            *kij = p[i][0] * si[0][j] + p[i][1] * si[1][j];
        }
    }
    let mut mean = s.mean;
    for i in 0..3 {
        mean[i] = mean[i] + k[i][0] * innov[0] + k[i][1] * innov[1];
    }
    mean[2] = wrap_angle(mean[2]);
    // Joseph form: (I - KH) P (I - KH)^T + K R K^T
    let mut ikh = diag3([T::one(); 3]);
    for i in 0..3 {
        ikh[i][0] = ikh[i][0] - k[i][0];
        ikh[i][1] = ikh[i][1] - k[i][1];
    }
    let mut cov = mul3(&mul3(&ikh, p), &transpose3(&ikh));
    for i in 0..3 {
        for j in 0..3 {
            let krk = (0..2).fold(T::zero(), |acc, a| acc + (0..2).fold(T::zero(), |acc2, b| acc2 + k[i][a] * r[a][b] * k[j][b]));
            cov[i][j] = cov[i][j] + krk;
        }
    }
    symmetrize(&mut cov);
    (EkfState { mean, cov }, GnssUpdate::Accepted { mahalanobis2: d2.to_f64_lossy() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q0() -> Mat3<f64> {
        diag3([1e-4, 1e-4, 1e-5])
    }

    #[test]
    fn straight_predict() {
        let s = EkfState::new([0.0; 3], diag3([0.0; 3]));
        let n = ekf_predict(&s, 1.0, 0.0, 0.1, &q0());
        assert_eq!(n.mean, [0.1, 0.0, 0.0]);
        assert_eq!(n.cov, q0());
    }

    #[test]
    fn covariance_via_hand_jacobian() {
        // yaw = pi/2, v = 2, dt = 0.5: F = [[1,0,-1],[0,1,0],[0,0,1]]
        let p = diag3([0.1, 0.2, 0.3]);
        let s = EkfState::new([0.0, 0.0, std::f64::consts::FRAC_PI_2], p);
        let n = ekf_predict(&s, 2.0, 0.0, 0.5, &diag3([0.0; 3]));
        // F P F^T = [[0.1+0.3, ~0, -0.3], [~0, 0.2, ~0], [-0.3, ~0, 0.3]]
        assert!((n.cov[0][0] - 0.4).abs() < 1e-12);
        assert!((n.cov[0][2] + 0.3).abs() < 1e-12);
        assert!((n.cov[1][1] - 0.2).abs() < 1e-12);
        assert!((n.cov[2][2] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn zero_innovation_shrinks_covariance() {
        let s = EkfState::new([1.0, 2.0, 0.3], diag3([0.5, 0.5, 0.1]));
        let r = [[0.0025, 0.0], [0.0, 0.0025]];
        let (n, out) = ekf_update_gnss(&s, [1.0, 2.0], &r, GATE_99_2DOF);
        assert!(matches!(out, GnssUpdate::Accepted { .. }));
        assert_eq!(n.mean, s.mean);
        assert!(n.cov[0][0] < s.cov[0][0] && n.cov[1][1] < s.cov[1][1]);
    }

    #[test]
    fn outlier_is_gated() {
        let s = EkfState::new([0.0; 3], diag3([0.01, 0.01, 0.01]));
        let r = [[0.0025, 0.0], [0.0, 0.0025]];
        let (n, out) = ekf_update_gnss(&s, [50.0, 0.0], &r, GATE_99_2DOF);
        assert!(matches!(out, GnssUpdate::Rejected { .. }));
        assert_eq!(n, s);
    }
}
