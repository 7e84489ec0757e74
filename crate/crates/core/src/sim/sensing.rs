//! Synthetic site sensing: mound shape, vessel fill and dump arrival, turned
//! into excavation/release targets and flag proposals.

use serde::{Deserialize, Serialize};

use super::config::SiteConfig;
use super::plant::{DumpState, ExcavatorState};
use super::terrain::Terrain;
use crate::manip::script::{dig_script, release_script, CARRY_THETA_W};
use crate::scalar::wrap_angle;

/// Bucket angle at the cut.
pub const DIG_THETA_W: f64 = -1.0;
/// Height of the bucket tip above the ground while releasing.
pub const RELEASE_HEIGHT: f64 = 3.5;
/// Bucket joint angle that opens the bucket fully.
pub const OPEN_ANGLE: f64 = 0.0;
/// Cells lower than this are treated as bare ground.
const MIN_SOIL: f64 = 1e-3;

/// Site-frame cut point with bucket angle and requested scoop volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcavationTarget {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub theta_w: f64,
    pub scoop: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReleaseTarget {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub theta_w: f64,
    pub target_angle: f64,
    /// Vessel quadrant (0..4, front-left first) the target lies over.
    pub quadrant: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingReport {
    pub mound_volume: f64,
    pub fill: f64,
    pub excavation_target: Option<ExcavationTarget>,
    pub release_target: Option<ReleaseTarget>,
    pub loaded: bool,
    pub check_mound: bool,
    pub arrival: bool,
}

fn mound_radius(cfg: &SiteConfig) -> f64 {
    cfg.mound.radius + cfg.excavator.bucket_radius
}

/// Highest soil cell in the mound area whose dig script the excavator can
/// execute. Ties go to the lowest cell index.
pub fn excavation_target(terrain: &Terrain, ex: &ExcavatorState, cfg: &SiteConfig, free: f64) -> Option<ExcavationTarget> {
    let mut cells: Vec<usize> = terrain
        .cells_within(cfg.mound.center, mound_radius(cfg))
        .into_iter()
        .filter(|&i| terrain.heights[i] > MIN_SOIL)
        .collect();
    cells.sort_by(|&a, &b| terrain.heights[b].partial_cmp(&terrain.heights[a]).expect("finite").then(a.cmp(&b)));
    let scoop = cfg.excavator.bucket_capacity.min(free.max(0.0));
    cells.into_iter().find_map(|i| {
        let [x, y] = terrain.cell_center(i % terrain.width, i / terrain.width);
        let z = terrain.heights[i];
        let local = ex.to_base([x, y, z]);
        dig_script(local, DIG_THETA_W, &cfg.excavator.geometry)
            .ok()
            .map(|_| ExcavationTarget { x, y, z, theta_w: DIG_THETA_W, scoop })
    })
}

/// Quadrant centres in the vessel frame, front-left, front-right,
/// rear-left, rear-right.
fn quadrant_offsets(half: f64) -> [[f64; 2]; 4] {
    let q = half / 2.0;
    [[q, q], [q, -q], [-q, q], [-q, -q]]
}

/// Release point over the least-filled quadrant that the arm can reach.
pub fn release_target(dump: &DumpState, fills: &[f64; 4], ex: &ExcavatorState, cfg: &SiteConfig) -> Option<ReleaseTarget> {
    let offsets = quadrant_offsets(cfg.dump.vessel_half);
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| fills[a].partial_cmp(&fills[b]).expect("finite").then(a.cmp(&b)));
    order.into_iter().find_map(|q| {
        let [x, y] = dump.vessel_point(offsets[q][0], offsets[q][1]);
        let local = ex.to_base([x, y, RELEASE_HEIGHT]);
        release_script(local, CARRY_THETA_W, OPEN_ANGLE, &cfg.excavator.geometry).ok().map(|_| ReleaseTarget {
            x,
            y,
            z: RELEASE_HEIGHT,
            theta_w: CARRY_THETA_W,
            target_angle: OPEN_ANGLE,
            quadrant: q,
        })
    })
}

/// Which vessel quadrant a site-frame point falls into.
pub fn quadrant_of(dump: &DumpState, p: [f64; 2]) -> usize {
    let [f, l] = dump.to_vessel_frame(p);
    match (f >= 0.0, l >= 0.0) {
        (true, true) => 0,
        (true, false) => 1,
        (false, true) => 2,
        (false, false) => 3,
    }
}

pub fn at_loading_point(dump: &DumpState, cfg: &SiteConfig) -> bool {
    let p1 = cfg.point(1);
    let [tol_p, tol_yaw] = cfg.arrival_tolerance;
    (dump.pose[0] - p1[0]).hypot(dump.pose[1] - p1[1]) <= tol_p && wrap_angle(dump.pose[2] - p1[2]).abs() <= tol_yaw
}

pub fn sense_site(terrain: &Terrain, dump: &DumpState, ex: &ExcavatorState, fills: &[f64; 4], cfg: &SiteConfig) -> SensingReport {
    let mound_volume = terrain.region_volume(cfg.mound.center, mound_radius(cfg));
    let fill = dump.fill(&cfg.dump);
    let free = cfg.dump.capacity - dump.vessel_load - ex.bucket_load;
    let excavation_target = excavation_target(terrain, ex, cfg, free);
    SensingReport {
        mound_volume,
        fill,
        release_target: release_target(dump, fills, ex, cfg),
        loaded: fill >= cfg.loaded_fill,
        check_mound: mound_volume < cfg.excavator.bucket_capacity || excavation_target.is_none(),
        arrival: at_loading_point(dump, cfg),
        excavation_target,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (SiteConfig, Terrain, DumpState, ExcavatorState) {
        let cfg = SiteConfig::default();
        let mut t = Terrain::flat(192, 144, 0.25, [0.0, 0.0]);
        t.add_mound(cfg.mound.center, cfg.mound.peak, cfg.mound.radius);
        let d = DumpState::at(cfg.point(1));
        let e = ExcavatorState::at(cfg.excavator.base_pose, cfg.excavator.initial_joints);
        (cfg, t, d, e)
    }

    #[test]
    fn every_mound_cell_is_diggable() {
        let (cfg, t, _, e) = setup();
        for i in t.cells_within(cfg.mound.center, cfg.mound.radius).into_iter().filter(|&i| t.heights[i] > 0.0) {
            let [x, y] = t.cell_center(i % t.width, i / t.width);
            let local = e.to_base([x, y, t.heights[i]]);
            assert!(dig_script(local, DIG_THETA_W, &cfg.excavator.geometry).is_ok(), "{x} {y}");
        }
    }

    #[test]
    fn every_quadrant_is_reachable_at_point_one() {
        let (cfg, _, d, e) = setup();
        for q in 0..4 {
            let mut fills = [1.0; 4];
            fills[q] = 0.0;
            assert_eq!(release_target(&d, &fills, &e, &cfg).unwrap().quadrant, q);
        }
    }

    #[test]
    fn fresh_site() {
        let (cfg, t, d, e) = setup();
        let r = sense_site(&t, &d, &e, &[0.0; 4], &cfg);
        assert!(r.arrival && !r.loaded && !r.check_mound);
        let target = r.excavation_target.unwrap();
        assert!((target.z - t.heights.iter().cloned().fold(0.0, f64::max)).abs() < 1e-12);
        assert_eq!(target.scoop, 0.8);
    }

    #[test]
    fn thin_mound_and_full_vessel() {
        let (cfg, mut t, mut d, e) = setup();
        t.heights.iter_mut().for_each(|h| *h *= 0.1 / 22.8);
        d.vessel_load = 5.5;
        d.pose[0] += 0.5;
        let r = sense_site(&t, &d, &e, &[0.0; 4], &cfg);
        assert!(r.check_mound && r.loaded && !r.arrival);
        assert_eq!(r.fill, 1.0);
    }
}
