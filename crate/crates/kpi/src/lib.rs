//! Evaluation artifacts computed from simulation logs and training logs.

pub mod ecdf;
pub mod maneuver;
pub mod report;
pub mod rtt;

pub use ecdf::{compute_ecdf, fraction_in};
pub use maneuver::{compute_maneuver, Maneuver};
pub use report::{kpi_records, read_reward_log, report, Headline, ReportInputs, ReportSummary};
pub use rtt::{compute_rtt, RttReport, RttSample};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum KpiError {
    #[error("no values")]
    Empty,
    #[error("non-finite value {0}")]
    NonFinite(f64),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KpiKind {
    RttMs,
    InterVehicleDistanceM,
    AccelMps2,
    ManeuverLengthS,
    ManeuverLengthM,
}

impl KpiKind {
    pub fn name(self) -> &'static str {
        match self {
            KpiKind::RttMs => "rtt_ms",
            KpiKind::InterVehicleDistanceM => "inter_vehicle_distance_m",
            KpiKind::AccelMps2 => "accel_mps2",
            KpiKind::ManeuverLengthS => "maneuver_length_s",
            KpiKind::ManeuverLengthM => "maneuver_length_m",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            KpiKind::RttMs => "ms",
            KpiKind::InterVehicleDistanceM | KpiKind::ManeuverLengthM => "m",
            KpiKind::AccelMps2 => "m/s^2",
            KpiKind::ManeuverLengthS => "s",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiRecord {
    pub kind: KpiKind,
    pub value: f64,
    pub timestamp_ms: i64,
    pub vehicle_id: String,
    pub scenario_id: String,
}
