use serde::{Deserialize, Serialize};

use crate::geo::Vec2;

/// One timed point of a recommended trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub timestamp_ms: i64,
    pub position: Vec2,
    pub speed: f64,
    /// Acceleration applied over the tick ending at this waypoint.
    pub acceleration: f64,
    pub heading_deg: f64,
}

/// How a greedy rollout ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RolloutOutcome {
    /// The final waypoint sits in a safe slot on the target lane.
    Success,
    /// The rollout was cut short by a predicted safety violation.
    SafetyViolation,
    /// Horizon exhausted without reaching the slot.
    Horizon,
    /// Slow-down advice for the following vehicle.
    SlowDown,
}

/// Ordered waypoints for one target vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub target_id: String,
    pub waypoints: Vec<Waypoint>,
    pub outcome: RolloutOutcome,
}

impl Recommendation {
    pub fn final_waypoint(&self) -> Option<&Waypoint> {
        self.waypoints.last()
    }

    /// True when the recommendation does not claim a safe final slot.
    pub fn is_failure_flagged(&self) -> bool {
        matches!(self.outcome, RolloutOutcome::SafetyViolation | RolloutOutcome::Horizon)
    }
}
