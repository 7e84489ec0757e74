//! Controller-side state estimates built only from telemetry.

use serde::{Deserialize, Serialize};

use crate::comms::codec::VESSEL_JOINT;
use crate::comms::Message;
use crate::nav::ekf::{diag3, Mat2, Mat3, GATE_99_2DOF};
use crate::nav::{ekf_predict, ekf_update_gnss, geo_to_plane, EkfState, GeoPoint, GnssUpdate};
use crate::sim::config::SiteConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpEstimate {
    pub ekf: EkfState<f64>,
    pub vessel_angle: f64,
    pub gnss_accepted: u64,
    pub gnss_rejected: u64,
    #[serde(skip)]
    pending_fix: Option<(f64, f64)>,
    q: Mat3<f64>,
    r: Mat2<f64>,
}

impl DumpEstimate {
    pub fn new(start: [f64; 3], gnss_sigma: f64) -> Self {
        let s2 = gnss_sigma.max(0.01).powi(2);
        Self {
            ekf: EkfState::new(start, diag3([0.01, 0.01, 0.001])),
            vessel_angle: 0.0,
            gnss_accepted: 0,
            gnss_rejected: 0,
            pending_fix: None,
            q: diag3([2.5e-5, 2.5e-5, 1e-5]),
            r: [[s2, 0.0], [0.0, s2]],
        }
    }

    pub fn pose(&self) -> [f64; 3] {
        self.ekf.mean
    }

    /// Fold one step's worth of dump telemetry into the estimate.
    pub fn ingest(&mut self, msgs: &[Message], dt: f64, origin: &GeoPoint<f64>) {
        for m in msgs {
            match *m {
                Message::OdomTelemetry { v, w } => self.ekf = ekf_predict(&self.ekf, v, w, dt, &self.q),
                Message::JointTelemetry { joint: VESSEL_JOINT, angle } => self.vessel_angle = angle,
                Message::GnssTelemetry { lat, lon } => self.pending_fix = Some((lat, lon)),
                Message::GnssAltitude { alt } => {
                    if let Some((lat, lon)) = self.pending_fix.take() {
                        if let Ok([x, y, _]) = geo_to_plane(&GeoPoint { lat, lon, alt }, origin) {
                            let (next, outcome) = ekf_update_gnss(&self.ekf, [x, y], &self.r, GATE_99_2DOF);
                            self.ekf = next;
                            match outcome {
                                GnssUpdate::Accepted { .. } => self.gnss_accepted += 1,
                                GnssUpdate::Rejected { .. } => self.gnss_rejected += 1,
                            }
                        }
                    }
                }
                _ => {}
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimates {
    pub dump: DumpEstimate,
    /// Last reported excavator joint angles.
    pub joints: [f64; 4],
}

impl Estimates {
    pub fn new(cfg: &SiteConfig) -> Self {
        Self {
            dump: DumpEstimate::new(cfg.dump_start, cfg.noise.gnss_sigma),
            joints: cfg.excavator.initial_joints,
        }
    }

    pub fn ingest_excavator(&mut self, msgs: &[Message]) {
        for m in msgs {
            if let Message::JointTelemetry { joint, angle } = *m {
                if let Some(q) = self.joints.get_mut(joint as usize) {
                    *q = angle;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{decode_all, Site, IC120, ZX200};

    #[test]
    fn noiseless_estimate_tracks_truth() {
        let cfg = SiteConfig { noise: crate::sim::config::NoiseConfig::none(), ..SiteConfig::default() };
        let mut site = Site::new(cfg.clone());
        let mut est = Estimates::new(&cfg);
        for k in 0..50 {
            let w = if k < 25 { 0.3 } else { -0.2 };
            site.link(IC120).unwrap().send_message(&Message::VelocityCmd { v: 0.8, w });
            site.step();
            let up = decode_all(&site.link(IC120).unwrap().drain_telemetry());
            est.dump.ingest(&up, cfg.dt, &cfg.geo_origin);
            est.ingest_excavator(&decode_all(&site.link(ZX200).unwrap().drain_telemetry()));
        }
        let truth = site.dump.pose;
        let e = est.dump.pose();
        assert!((e[0] - truth[0]).hypot(e[1] - truth[1]) < 0.02, "{e:?} {truth:?}");
        assert!(est.dump.gnss_accepted == 5);
        assert!(est.joints.iter().zip(site.excavator.joints).all(|(a, b)| (a - b).abs() < 1e-6));
    }
}
