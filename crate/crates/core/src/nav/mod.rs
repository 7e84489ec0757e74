//! Localization and navigation for the crawler dump.

pub mod ekf;
pub mod geo;
pub mod global;
pub mod grid;
pub mod local;
pub mod servers;

pub use ekf::{ekf_predict, ekf_update_gnss, EkfState, GnssUpdate};
pub use geo::{geo_to_plane, plane_to_geo, GeoError, GeoPoint};
pub use global::{plan_global, plan_global_cells, GlobalPath, PlanError, SurdCost};
pub use grid::{CostGrid, LETHAL};
pub use local::{approach, plan_local, Approach, Direction, DwaParams, NoAdmissibleCommand, Tolerance};
