//! The single JSON run document shared by the CLI and the demo.

use serde::{Deserialize, Serialize};

use crate::compensation::CompensationConfig;
use crate::flight_sim::{FlightParams, NoiseModel};
use crate::tracker::TrackerConfig;

/// Every section is optional; unknown keys are rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub tracker: TrackerConfig,
    pub compensation: CompensationConfig,
    pub flight: FlightParams,
    pub noise: NoiseModel,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
