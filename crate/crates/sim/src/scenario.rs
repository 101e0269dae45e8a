//! Scenario files: lanes, roster, camera, network impairment.

use lmo_core::geo::Polyline;
use lmo_core::scene::SceneConfig;
use lmo_core::Vec2;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::SimError;

pub const TICK_MS: i64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneRef {
    Target,
    Merge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptStep {
    pub from_ms: i64,
    pub accel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Behavior {
    /// Piecewise-constant acceleration; each step holds until the next.
    Scripted { steps: Vec<ScriptStep> },
    CarFollowing { desired_speed: f64 },
    /// Car-following until a recommendation is accepted, then tracks it.
    AgentRecommended { desired_speed: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    pub id: String,
    pub lane: LaneRef,
    /// Initial station along its own lane.
    pub station: f64,
    pub speed: f64,
    #[serde(default = "default_length")]
    pub length: f64,
    #[serde(default = "default_width")]
    pub width: f64,
    pub connected: bool,
    pub behavior: Behavior,
}

fn default_length() -> f64 {
    4.5
}

fn default_width() -> f64 {
    1.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    /// Coverage polygon in local meters.
    pub coverage: Vec<Vec2>,
    #[serde(default = "default_sigma")]
    pub sigma_m: f64,
}

fn default_sigma() -> f64 {
    0.25
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Impairment {
    pub latency_ms: i64,
    #[serde(default)]
    pub jitter_ms: i64,
    #[serde(default)]
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub scene: SceneConfig,
    /// Centerline of the merge lane.
    pub merge_lane: Polyline,
    #[serde(default = "default_tick")]
    pub tick_ms: i64,
    pub duration_ms: i64,
    #[serde(default)]
    pub seed: u64,
    pub vehicles: Vec<VehicleSpec>,
    pub camera: CameraSpec,
    #[serde(default)]
    pub impairment: Impairment,
}

fn default_tick() -> i64 {
    TICK_MS
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(path.display().to_string(), e))?;
        let s: Scenario = serde_json::from_str(&text).map_err(|e| SimError::Scenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    /// A vehicle on the merge lane that takes recommendations.
    pub fn is_merging(v: &VehicleSpec) -> bool {
        v.lane == LaneRef::Merge && v.connected && matches!(v.behavior, Behavior::AgentRecommended { .. })
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Scenario(m));
        if self.tick_ms != TICK_MS {
            return bad(format!("tick must be {TICK_MS} ms, got {}", self.tick_ms));
        }
        if self.duration_ms <= 0 {
            return bad("duration must be positive".into());
        }
        if !self.vehicles.iter().any(Self::is_merging) {
            return bad("scenario has no merging vehicle".into());
        }
        let mut ids: Vec<&str> = self.vehicles.iter().map(|v| v.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) || ids.iter().any(|i| i.is_empty()) {
            return bad("vehicle ids must be unique and nonempty".into());
        }
        for v in &self.vehicles {
            if !(v.speed >= 0.0 && v.length > 0.0 && v.width > 0.0) {
                return bad(format!("vehicle {} has invalid speed or size", v.id));
            }
        }
        let imp = self.impairment;
        if imp.latency_ms < 0 || imp.jitter_ms < 0 || !(0.0..=1.0).contains(&imp.loss) {
            return bad("impairment needs latency, jitter >= 0 and loss in [0, 1]".into());
        }
        if self.camera.coverage.len() < 3 || !(self.camera.sigma_m >= 0.0) {
            return bad("camera needs a polygon of at least 3 points and sigma >= 0".into());
        }
        self.scene.safety.validated().map_err(|e| SimError::Scenario(e.to_string()))?;
        Ok(())
    }

    pub fn lane(&self, lane: LaneRef) -> &Polyline {
        match lane {
            LaneRef::Target => &self.scene.target_lane,
            LaneRef::Merge => &self.merge_lane,
        }
    }
}
