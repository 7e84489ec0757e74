//! Fixed-step simulation of the site: plants driven by control frames,
//! terrain and soil accounting, telemetry and sensing.

pub mod config;
pub mod plant;
pub mod sensing;
pub mod terrain;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use config::{ExcavatorConfig, MoundConfig, NoiseConfig, SiteConfig};
pub use plant::{
    dump_vessel, step_dump, step_excavator, transfer_to_vessel, DumpLimits, DumpState, ExcavatorState, JointVel, Transfer,
    VesselError,
};
pub use sensing::{sense_site, ExcavationTarget, ReleaseTarget, SensingReport};
pub use terrain::{Terrain, TerrainError};

use crate::comms::codec::VESSEL_JOINT;
use crate::comms::{decode, encode, ControlFrame, MachineLink, Message};
use crate::manip::forward_kinematics;
use crate::nav::{plane_to_geo, CostGrid};

pub const IC120: &str = "ic120";
pub const ZX200: &str = "zx200";
pub const MACHINES: [&str; 2] = [IC120, ZX200];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpRecord {
    pub t: f64,
    pub volume: f64,
    pub at: [f64; 2],
}

/// Running totals of where the soil went.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SoilLedger {
    pub initial_total: f64,
    pub excavated: f64,
    pub loaded: f64,
    pub spilled: f64,
    pub dumps: Vec<DumpRecord>,
}

impl SoilLedger {
    pub fn dumped(&self) -> f64 {
        self.dumps.iter().map(|d| d.volume).sum()
    }
}

/// Frames a machine accepted in one step, for the event log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Delivered {
    pub machine: String,
    pub frames: Vec<Message>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Volumes {
    pub terrain: f64,
    pub mound: f64,
    pub bucket: f64,
    pub vessel: f64,
    pub dumped: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteSnapshot {
    pub t: f64,
    pub step: u64,
    pub dump: DumpState,
    pub excavator: ExcavatorState,
    /// Bucket tip in the site frame.
    pub tip: [f64; 3],
    pub volumes: Volumes,
    pub estopped: Vec<String>,
}

pub struct Site {
    pub config: SiteConfig,
    pub terrain: Terrain,
    pub dump: DumpState,
    pub excavator: ExcavatorState,
    pub ic120_link: MachineLink,
    pub zx200_link: MachineLink,
    pub ledger: SoilLedger,
    /// Soil placed in each vessel quadrant since the last dump.
    pub quadrant_fill: [f64; 4],
    cost_grid: CostGrid,
    rng: ChaCha8Rng,
    time: f64,
    step_index: u64,
}

impl Site {
    pub fn new(config: SiteConfig) -> Self {
        let r = config.terrain_resolution;
        let mut terrain =
            Terrain::flat((config.extent[0] / r).round() as usize, (config.extent[1] / r).round() as usize, r, [0.0, 0.0]);
        terrain.add_mound(config.mound.center, config.mound.peak, config.mound.radius);
        let ledger = SoilLedger { initial_total: terrain.volume(), ..Default::default() };
        let ex = &config.excavator;
        Self {
            dump: DumpState::at(config.dump_start),
            excavator: ExcavatorState::at(ex.base_pose, ex.initial_joints),
            ic120_link: MachineLink::new(),
            zx200_link: MachineLink::new(),
            ledger,
            quadrant_fill: [0.0; 4],
            cost_grid: config.cost_grid(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            time: 0.0,
            step_index: 0,
            terrain,
            config,
        }
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn cost_grid(&self) -> &CostGrid {
        &self.cost_grid
    }

    pub fn link(&mut self, machine: &str) -> Option<&mut MachineLink> {
        match machine {
            IC120 => Some(&mut self.ic120_link),
            ZX200 => Some(&mut self.zx200_link),
            _ => None,
        }
    }

    pub fn tip_site(&self) -> [f64; 3] {
        let tip = forward_kinematics(&self.excavator.joints, &self.config.excavator.geometry);
        self.excavator.to_site(tip.position)
    }

    pub fn volumes(&self) -> Volumes {
        let terrain = self.terrain.volume();
        let r = self.config.mound.radius + self.config.excavator.bucket_radius;
        let total = terrain + self.excavator.bucket_load + self.dump.vessel_load;
        Volumes {
            terrain,
            mound: self.terrain.region_volume(self.config.mound.center, r),
            bucket: self.excavator.bucket_load,
            vessel: self.dump.vessel_load,
            dumped: self.ledger.dumped(),
            residual: total - self.ledger.initial_total,
        }
    }

    pub fn snapshot(&self) -> SiteSnapshot {
        let estopped = [(IC120, &self.ic120_link), (ZX200, &self.zx200_link)]
            .iter()
            .filter(|(_, l)| l.is_latched())
            .map(|(m, _)| m.to_string())
            .collect();
        SiteSnapshot {
            t: self.time,
            step: self.step_index,
            dump: self.dump.clone(),
            excavator: self.excavator.clone(),
            tip: self.tip_site(),
            volumes: self.volumes(),
            estopped,
        }
    }

    pub fn sense(&self) -> SensingReport {
        sense_site(&self.terrain, &self.dump, &self.excavator, &self.quadrant_fill, &self.config)
    }

    /// Dig at a site-frame point; the bucket takes what it can hold.
    pub fn excavate(&mut self, at: [f64; 2], request: f64) -> Result<f64, TerrainError> {
        let room = (self.config.excavator.bucket_capacity - self.excavator.bucket_load).max(0.0);
        let got = self.terrain.excavate_at(at, request.min(room), self.config.excavator.bucket_radius)?;
        self.excavator.bucket_load += got;
        self.ledger.excavated += got;
        Ok(got)
    }

    /// Empty the bucket at a site-frame point: into the vessel when the point
    /// is over it, onto the ground otherwise.
    pub fn release_bucket(&mut self, at: [f64; 2]) -> Transfer {
        let load = std::mem::take(&mut self.excavator.bucket_load);
        let t = if self.dump.over_vessel(at, &self.config.dump) {
            let t = transfer_to_vessel(&mut self.dump, load, &self.config.dump);
            self.quadrant_fill[sensing::quadrant_of(&self.dump, at)] += t.loaded;
            t
        } else {
            Transfer { loaded: 0.0, spilled: load }
        };
        if t.spilled > 0.0 {
            self.terrain.deposit(at, t.spilled, self.config.excavator.bucket_radius);
        }
        self.ledger.loaded += t.loaded;
        self.ledger.spilled += t.spilled;
        t
    }

    /// Deliver queued commands, advance both plants by one step and publish
    /// telemetry.
    pub fn step(&mut self) -> Vec<Delivered> {
        let dt = self.config.dt;
        let mut delivered = vec![];

        let frames = self.ic120_link.deliver();
        let msgs: Vec<Message> = frames.iter().filter_map(|f| decode(f).ok()).collect();
        let mut cmd = (0.0, 0.0);
        for m in &msgs {
            match *m {
                Message::VelocityCmd { v, w } => cmd = (v, w),
                Message::VesselCmd { angle } => self.dump.vessel_target = angle,
                Message::EStop => {
                    cmd = (0.0, 0.0);
                    self.dump.vessel_target = self.dump.vessel_angle;
                }
                _ => {}
            }
        }
        if self.ic120_link.is_latched() {
            self.dump.vessel_target = self.dump.vessel_angle;
        }
        delivered.push(Delivered { machine: IC120.into(), frames: msgs });
        self.dump = step_dump(&self.dump, cmd, dt, &self.config.dump);
        if self.dump.vessel_angle >= self.config.dump.release_angle && self.dump.vessel_load > 0.0 {
            let at = self.dump.vessel_point(-self.config.dump.dump_offset, 0.0);
            let volume = dump_vessel(&mut self.dump, &mut self.terrain, &self.config.dump).expect("vessel is open");
            self.quadrant_fill = [0.0; 4];
            self.ledger.dumps.push(DumpRecord { t: self.time + dt, volume, at });
        }

        let frames = self.zx200_link.deliver();
        let msgs: Vec<Message> = frames.iter().filter_map(|f| decode(f).ok()).collect();
        let mut cmds: Vec<JointVel> = vec![];
        for m in &msgs {
            match *m {
                Message::JointVelCmd { joint, vel, valve } => {
                    cmds.retain(|c| c.joint != joint);
                    cmds.push(JointVel { joint, vel, valve });
                }
                Message::EStop => cmds.clear(),
                _ => {}
            }
        }
        delivered.push(Delivered { machine: ZX200.into(), frames: msgs });
        self.excavator = step_excavator(&self.excavator, &cmds, dt, &self.config.excavator.geometry);

        self.time = (self.step_index + 1) as f64 * dt;
        self.step_index += 1;
        self.publish_telemetry();
        delivered
    }

    fn publish_telemetry(&mut self) {
        let n = &self.config.noise;
        let odom = Normal::new(0.0, n.odom_sigma).expect("valid sigma");
        let gnss = Normal::new(0.0, n.gnss_sigma).expect("valid sigma");
        let scale = 1.0 + n.odom_bias;
        let v = self.dump.v * scale + odom.sample(&mut self.rng);
        let w = self.dump.w * scale + odom.sample(&mut self.rng);
        let mut up = vec![
            Message::OdomTelemetry { v, w },
            Message::JointTelemetry { joint: VESSEL_JOINT, angle: self.dump.vessel_angle },
        ];
        if self.step_index.is_multiple_of(n.gnss_every.max(1)) {
            let ex = gnss.sample(&mut self.rng);
            let ey = gnss.sample(&mut self.rng);
            let p = [self.dump.pose[0] + ex, self.dump.pose[1] + ey, 0.0];
            if let Ok(geo) = plane_to_geo(p, &self.config.geo_origin) {
                up.push(Message::GnssTelemetry { lat: geo.lat, lon: geo.lon });
                up.push(Message::GnssAltitude { alt: geo.alt });
            }
        }
        for m in &up {
            self.ic120_link.publish(encode(m).expect("telemetry in range"));
        }
        for (j, &angle) in self.excavator.joints.iter().enumerate() {
            let m = Message::JointTelemetry { joint: j as u8, angle };
            self.zx200_link.publish(encode(&m).expect("telemetry in range"));
        }
    }

    /// Where a dump parked at `pose` drops its load.
    pub fn dump_spot(&self, pose: [f64; 3]) -> [f64; 2] {
        DumpState::at(pose).vessel_point(-self.config.dump.dump_offset, 0.0)
    }

    /// Queue an emergency stop to every machine.
    pub fn estop_all(&mut self) {
        for link in [&mut self.ic120_link, &mut self.zx200_link] {
            link.send(encode(&Message::EStop).expect("estop encodes"));
        }
    }
}

/// Decode a batch of telemetry, skipping frames that fail to decode.
pub fn decode_all(frames: &[ControlFrame]) -> Vec<Message> {
    frames.iter().filter_map(|f| decode(f).ok()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn site_starts_conserved() {
        let site = Site::new(SiteConfig::default());
        let v = site.volumes();
        assert_eq!(v.residual, 0.0);
        assert!(v.mound > 20.0 && v.mound < 23.0, "{}", v.mound);
        assert_eq!(site.dump.pose, site.config.point(2));
    }

    #[test]
    fn gnss_once_per_second() {
        let mut site = Site::new(SiteConfig::default());
        let mut fixes = 0;
        for _ in 0..100 {
            site.step();
            fixes += decode_all(&site.ic120_link.drain_telemetry())
                .iter()
                .filter(|m| matches!(m, Message::GnssTelemetry { .. }))
                .count();
        }
        assert_eq!(fixes, 10);
    }

    #[test]
    fn estop_freezes_everything() {
        let mut site = Site::new(SiteConfig::default());
        site.ic120_link.send_message(&Message::VelocityCmd { v: 1.0, w: 0.0 });
        site.step();
        site.estop_all();
        site.ic120_link.send_message(&Message::VelocityCmd { v: 1.0, w: 0.2 });
        site.zx200_link.send_message(&Message::JointVelCmd { joint: 1, vel: 0.3, valve: 600 });
        let before = (site.dump.pose, site.excavator.joints);
        site.step();
        assert_eq!((site.dump.pose, site.excavator.joints), before);
        assert_eq!(site.ic120_link.suppressed(), 1);
    }

    #[test]
    fn dig_and_load_conserves_soil() {
        let mut site = Site::new(SiteConfig::default());
        let got = site.excavate(site.config.mound.center, 0.8).unwrap();
        assert!((got - 0.8).abs() < 1e-12);
        site.dump.pose = site.config.point(1);
        let over = site.dump.vessel_point(0.5, 0.5);
        let t = site.release_bucket(over);
        assert_eq!(t.spilled, 0.0);
        assert!((site.dump.vessel_load - got).abs() < 1e-15);
        assert!(site.volumes().residual.abs() < 1e-9);
        assert_eq!(site.quadrant_fill[0], got);
    }
}
