use serde::{Deserialize, Serialize};

use super::{Blackboard, BlackboardError};

pub const ARRIVAL_FLG: &str = "ARRIVAL_FLG";
pub const CONTINUE_FLG: &str = "CONTINUE_FLG";
pub const MOVING_FLG: &str = "MOVING_FLG";
pub const INITIAL_POSE_FLG: &str = "INITIAL_POSE_FLG";
pub const SENSING_ARRIVAL_FLG: &str = "SENSING_ARRIVAL_FLG";
pub const SENSING_CHECK_MOUND_FLG: &str = "SENSING_CHECK_MOUND_FLG";
pub const SENSING_LOADED_FLG: &str = "SENSING_LOADED_FLG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UpdateMethod {
    Auto,
    Sensing,
}

/// The scenario flags with their update method and initial state.
pub const FLAG_TABLE: [(&str, UpdateMethod, bool); 7] = [
    (ARRIVAL_FLG, UpdateMethod::Auto, false),
    (CONTINUE_FLG, UpdateMethod::Auto, true),
    (MOVING_FLG, UpdateMethod::Auto, true),
    (INITIAL_POSE_FLG, UpdateMethod::Auto, true),
    (SENSING_ARRIVAL_FLG, UpdateMethod::Sensing, false),
    (SENSING_CHECK_MOUND_FLG, UpdateMethod::Sensing, false),
    (SENSING_LOADED_FLG, UpdateMethod::Sensing, false),
];

pub fn is_scenario_flag(key: &str) -> bool {
    FLAG_TABLE.iter().any(|(k, _, _)| *k == key)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct FlagSet {
    pub ARRIVAL_FLG: bool,
    pub CONTINUE_FLG: bool,
    pub MOVING_FLG: bool,
    pub INITIAL_POSE_FLG: bool,
    pub SENSING_ARRIVAL_FLG: bool,
    pub SENSING_CHECK_MOUND_FLG: bool,
    pub SENSING_LOADED_FLG: bool,
}

impl Default for FlagSet {
    fn default() -> Self {
        Self {
            ARRIVAL_FLG: false,
            CONTINUE_FLG: true,
            MOVING_FLG: true,
            INITIAL_POSE_FLG: true,
            SENSING_ARRIVAL_FLG: false,
            SENSING_CHECK_MOUND_FLG: false,
            SENSING_LOADED_FLG: false,
        }
    }
}

impl FlagSet {
    /// Read the flags from a blackboard; missing keys take their initial value.
    pub fn from_blackboard(bb: &Blackboard) -> Self {
        let d = Self::default();
        let get = |k: &str, dflt: bool| bb.get_bool(k).unwrap_or(dflt);
        Self {
            ARRIVAL_FLG: get(ARRIVAL_FLG, d.ARRIVAL_FLG),
            CONTINUE_FLG: get(CONTINUE_FLG, d.CONTINUE_FLG),
            MOVING_FLG: get(MOVING_FLG, d.MOVING_FLG),
            INITIAL_POSE_FLG: get(INITIAL_POSE_FLG, d.INITIAL_POSE_FLG),
            SENSING_ARRIVAL_FLG: get(SENSING_ARRIVAL_FLG, d.SENSING_ARRIVAL_FLG),
            SENSING_CHECK_MOUND_FLG: get(SENSING_CHECK_MOUND_FLG, d.SENSING_CHECK_MOUND_FLG),
            SENSING_LOADED_FLG: get(SENSING_LOADED_FLG, d.SENSING_LOADED_FLG),
        }
    }

    pub fn as_pairs(&self) -> [(&'static str, bool); 7] {
        [
            (ARRIVAL_FLG, self.ARRIVAL_FLG),
            (CONTINUE_FLG, self.CONTINUE_FLG),
            (MOVING_FLG, self.MOVING_FLG),
            (INITIAL_POSE_FLG, self.INITIAL_POSE_FLG),
            (SENSING_ARRIVAL_FLG, self.SENSING_ARRIVAL_FLG),
            (SENSING_CHECK_MOUND_FLG, self.SENSING_CHECK_MOUND_FLG),
            (SENSING_LOADED_FLG, self.SENSING_LOADED_FLG),
        ]
    }
}

/// Write the initial state of every scenario flag.
pub fn load_initial_flags(bb: &Blackboard, now: f64) -> Result<(), BlackboardError> {
    for (key, _, initial) in FLAG_TABLE {
        bb.set(key, initial, now)?;
    }
    Ok(())
}
