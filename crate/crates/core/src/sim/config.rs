use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::plant::DumpLimits;
use crate::manip::ArmGeometry;
use crate::nav::{CostGrid, GeoPoint, LETHAL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoundConfig {
    pub center: [f64; 2],
    pub peak: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub gnss_sigma: f64,
    /// Steps between GNSS fixes.
    pub gnss_every: u64,
    /// Multiplicative odometry scale error.
    pub odom_bias: f64,
    pub odom_sigma: f64,
}

impl NoiseConfig {
    pub fn none() -> Self {
        Self { gnss_sigma: 0.0, gnss_every: 10, odom_bias: 0.0, odom_sigma: 0.0 }
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { gnss_sigma: 0.05, gnss_every: 10, odom_bias: 0.01, odom_sigma: 0.005 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExcavatorConfig {
    pub base_pose: [f64; 3],
    pub geometry: ArmGeometry<f64>,
    pub initial_joints: [f64; 4],
    pub vmax: [f64; 4],
    pub amax: [f64; 4],
    pub bucket_capacity: f64,
    pub bucket_radius: f64,
    /// Footprint kept clear by the dump's planner.
    pub keepout_radius: f64,
}

impl Default for ExcavatorConfig {
    fn default() -> Self {
        Self {
            base_pose: [7.5, 21.0, 0.0],
            geometry: ArmGeometry::default(),
            initial_joints: [-1.4995, 0.6756, -2.6313, 2.4556],
            vmax: [0.5, 0.4, 0.5, 0.8],
            amax: [1.0, 1.0, 1.0, 1.5],
            bucket_capacity: 0.8,
            bucket_radius: 0.6,
            keepout_radius: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SiteConfig {
    pub dt: f64,
    pub seed: u64,
    pub extent: [f64; 2],
    pub terrain_resolution: f64,
    pub grid_resolution: f64,
    pub inscribed_radius: f64,
    pub inflation_radius: f64,
    pub geo_origin: GeoPoint<f64>,
    /// Points 1 to 5 as (x, y, yaw).
    pub points: [[f64; 3]; 5],
    pub dump_start: [f64; 3],
    pub dump: DumpLimits,
    pub excavator: ExcavatorConfig,
    pub mound: MoundConfig,
    pub noise: NoiseConfig,
    pub arrival_tolerance: [f64; 2],
    /// Vessel fill fraction at which the load counts as sufficient.
    pub loaded_fill: f64,
}

impl Default for SiteConfig {
    fn default() -> Self {
        let points = [
            [12.0, 20.0, FRAC_PI_2],
            [12.0, 26.0, FRAC_PI_2],
            [24.0, 26.0, 0.0],
            [36.0, 26.0, FRAC_PI_2],
            [36.0, 20.0, FRAC_PI_2],
        ];
        Self {
            dt: 0.1,
            seed: 42,
            extent: [48.0, 36.0],
            terrain_resolution: 0.25,
            grid_resolution: 0.5,
            inscribed_radius: 1.5,
            inflation_radius: 3.0,
            geo_origin: GeoPoint { lat: 36.0, lon: 140.0, alt: 20.0 },
            points,
            dump_start: points[1],
            dump: DumpLimits::default(),
            excavator: ExcavatorConfig::default(),
            mound: MoundConfig { center: [8.0, 14.0], peak: 3.0, radius: 2.2 },
            noise: NoiseConfig::default(),
            arrival_tolerance: [0.2, 0.1],
            loaded_fill: 0.9,
        }
    }
}

impl SiteConfig {
    pub fn point(&self, n: usize) -> [f64; 3] {
        self.points[n - 1]
    }

    /// Static cost grid for the dump: border, excavator and mound, inflated.
    pub fn cost_grid(&self) -> CostGrid {
        let r = self.grid_resolution;
        let mut g = CostGrid::new((self.extent[0] / r).round() as usize, (self.extent[1] / r).round() as usize, r, [0.0, 0.0]);
        g.mark_border();
        let ex = &self.excavator;
        g.mark_disk([ex.base_pose[0], ex.base_pose[1]], ex.keepout_radius, LETHAL);
        g.mark_disk(self.mound.center, self.mound.radius, LETHAL);
        g.inflate(self.inscribed_radius, self.inflation_radius);
        g
    }
}
