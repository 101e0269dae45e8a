use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

use crate::error::GeoError;
use crate::geo::{LatLon, Vec2};

/// Where a vehicle report came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Onboard,
    Camera,
    Fused,
}

/// One timestamped kinematic report for one vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub vehicle_id: String,
    pub timestamp_ms: i64,
    /// Centroid, meters east/north in the local plane.
    pub position: Vec2,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latlon: Option<LatLon>,
    pub speed: f64,
    pub acceleration: f64,
    /// Degrees clockwise from north, `[0, 360)`.
    pub heading_deg: f64,
    pub lane_id: i32,
    pub length: f64,
    pub width: f64,
    pub connected: bool,
    pub source: Source,
}

impl VehicleState {
    pub fn builder(vehicle_id: impl Into<String>, timestamp_ms: i64) -> VehicleStateBuilder {
        VehicleStateBuilder {
            state: VehicleState {
                vehicle_id: vehicle_id.into(),
                timestamp_ms,
                position: Vec2::ZERO,
                latlon: None,
                speed: 0.0,
                acceleration: 0.0,
                heading_deg: 0.0,
                lane_id: 0,
                length: 4.5,
                width: 1.8,
                connected: true,
                source: Source::Onboard,
            },
        }
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        let bad = |msg: String| Err(GeoError::InvalidState(msg));
        if self.vehicle_id.is_empty() {
            return bad("empty vehicle id".into());
        }
        if self.timestamp_ms < 0 {
            return bad(format!("negative timestamp {}", self.timestamp_ms));
        }
        if !(self.position.x.is_finite() && self.position.y.is_finite()) {
            return bad("non-finite position".into());
        }
        if !(self.speed.is_finite() && self.speed >= 0.0) {
            return bad(format!("speed {} must be >= 0", self.speed));
        }
        if !self.acceleration.is_finite() {
            return bad("non-finite acceleration".into());
        }
        if !(self.heading_deg.is_finite() && (0.0..360.0).contains(&self.heading_deg)) {
            return bad(format!("heading {} outside [0, 360)", self.heading_deg));
        }
        if !(self.length.is_finite() && self.length > 0.0) {
            return bad(format!("length {} must be > 0", self.length));
        }
        if !(self.width.is_finite() && self.width > 0.0) {
            return bad(format!("width {} must be > 0", self.width));
        }
        if let Some(ll) = self.latlon {
            ll.validate()?;
        }
        Ok(())
    }
}

pub struct VehicleStateBuilder {
    state: VehicleState,
}

impl VehicleStateBuilder {
    pub fn position(mut self, p: Vec2) -> Self {
        self.state.position = p;
        self
    }
    pub fn latlon(mut self, ll: LatLon) -> Self {
        self.state.latlon = Some(ll);
        self
    }
    pub fn speed(mut self, v: f64) -> Self {
        self.state.speed = v;
        self
    }
    pub fn acceleration(mut self, a: f64) -> Self {
        self.state.acceleration = a;
        self
    }
    pub fn heading(mut self, deg: f64) -> Self {
        self.state.heading_deg = deg;
        self
    }
    pub fn lane(mut self, lane_id: i32) -> Self {
        self.state.lane_id = lane_id;
        self
    }
    pub fn size(mut self, length: f64, width: f64) -> Self {
        self.state.length = length;
        self.state.width = width;
        self
    }
    pub fn connected(mut self, connected: bool) -> Self {
        self.state.connected = connected;
        self
    }
    pub fn source(mut self, source: Source) -> Self {
        self.state.source = source;
        self
    }
    pub fn build(self) -> VehicleState {
        self.state
    }
}

/// Orders vehicle ids numerically when both parse as integers, otherwise
/// lexicographically. NGSIM ids are integers, so "lower id" means the
/// smaller number there.
pub fn cmp_vehicle_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        _ => a.cmp(b),
    }
}
