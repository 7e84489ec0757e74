//! Turns site sensing into dynamic parameter records and sensing flags.
//!
//! Flags are written only when the sensed value changes, so a task or an
//! operator can overwrite a sensing flag and keep it until the sensed value
//! moves again.

use std::collections::BTreeMap;

use serde_json::json;

use crate::blackboard::flags::{SENSING_ARRIVAL_FLG, SENSING_CHECK_MOUND_FLG, SENSING_LOADED_FLG};
use crate::blackboard::{Blackboard, BlackboardError, FLAG_TABLE};
use crate::sim::{Site, ZX200};
use crate::store::{ParamStore, ParamType, ParameterRecord, StoreError};

pub const EXCAVATION_RECORD: &str = "Target_excavation_position";
pub const RELEASE_RECORD: &str = "Target_release_position";
/// The dump must stand still at Point 1 this long before arrival is sensed.
pub const ARRIVAL_SETTLE: f64 = 1.0;

#[derive(Debug, thiserror::Error)]
pub enum SensingError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Blackboard(#[from] BlackboardError),
}

/// A dynamic record written by sensing, with its new revision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamWrite {
    pub model_name: String,
    pub record_name: String,
    pub revision: u64,
}

#[derive(Debug, Clone)]
pub struct SensingDriver {
    sensed: BTreeMap<&'static str, bool>,
    dwell: f64,
}

impl Default for SensingDriver {
    fn default() -> Self {
        let sensed = FLAG_TABLE
            .iter()
            .filter(|(k, _, _)| [SENSING_ARRIVAL_FLG, SENSING_CHECK_MOUND_FLG, SENSING_LOADED_FLG].contains(k))
            .map(|(k, _, initial)| (*k, *initial))
            .collect();
        Self { sensed, dwell: 0.0 }
    }
}

fn upsert_if_changed(
    store: &mut ParamStore,
    record_name: &str,
    others: serde_json::Value,
) -> Result<Option<ParamWrite>, StoreError> {
    let rec = ParameterRecord::new(ZX200, ParamType::Dynamic, record_name, others);
    if store.query_parameter(ZX200, record_name).is_some_and(|old| old.others == rec.others) {
        return Ok(None);
    }
    let revision = store.upsert_parameter(rec)?;
    Ok(Some(ParamWrite { model_name: ZX200.into(), record_name: record_name.into(), revision }))
}

impl SensingDriver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn run(&mut self, site: &Site, store: &mut ParamStore, global: &Blackboard, now: f64) -> Result<Vec<ParamWrite>, SensingError> {
        let report = site.sense();
        let mut writes = vec![];
        if let Some(t) = report.excavation_target {
            let doc = json!({"x": t.x, "y": t.y, "z": t.z, "theta_w": t.theta_w, "scoop": t.scoop});
            writes.extend(upsert_if_changed(store, EXCAVATION_RECORD, doc)?);
        }
        // the vessel is only observed while the dump stands at the loading point
        if let (true, Some(t)) = (report.arrival, report.release_target) {
            let doc = json!({
                "x": t.x, "y": t.y, "z": t.z, "theta_w": t.theta_w,
                "target_angle": t.target_angle, "quadrant": t.quadrant,
            });
            writes.extend(upsert_if_changed(store, RELEASE_RECORD, doc)?);
        }

        let still = site.dump.v == 0.0 && site.dump.w == 0.0;
        self.dwell = if report.arrival && still { self.dwell + site.config.dt } else { 0.0 };
        let arrived = self.dwell >= ARRIVAL_SETTLE - 1e-9;
        for (key, value) in [
            (SENSING_ARRIVAL_FLG, arrived),
            (SENSING_LOADED_FLG, report.loaded),
            (SENSING_CHECK_MOUND_FLG, report.check_mound),
        ] {
            if self.sensed.insert(key, value) != Some(value) {
                global.set(key, value, now)?;
            }
        }
        Ok(writes)
    }
}
