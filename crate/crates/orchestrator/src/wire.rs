//! NDJSON wire messages and their conversion to internal entities.

use lmo_core::scene::Boundary;
use lmo_core::{LatLon, Projection, Source, VehicleState, Waypoint};
use serde::{Deserialize, Serialize};

/// Longest accepted line, newline excluded.
pub const MAX_LINE_BYTES: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireSource {
    Obu,
    Camera,
    Fused,
}

impl From<WireSource> for Source {
    fn from(s: WireSource) -> Source {
        match s {
            WireSource::Obu => Source::Onboard,
            WireSource::Camera => Source::Camera,
            WireSource::Fused => Source::Fused,
        }
    }
}

impl From<Source> for WireSource {
    fn from(s: Source) -> WireSource {
        match s {
            Source::Onboard => WireSource::Obu,
            Source::Camera => WireSource::Camera,
            Source::Fused => WireSource::Fused,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleUpdate {
    pub uuid: String,
    pub timestamp_ms: i64,
    pub lat: f64,
    pub lon: f64,
    pub speed_mps: f64,
    pub acceleration_mps2: f64,
    pub heading_deg: f64,
    pub lane_id: i32,
    pub length_m: f64,
    pub width_m: f64,
    pub connected: bool,
    pub source: WireSource,
}

impl VehicleUpdate {
    pub fn from_state(st: &VehicleState, proj: &Projection) -> Self {
        let ll = st.latlon.unwrap_or_else(|| proj.unproject(st.position));
        Self {
            uuid: st.vehicle_id.clone(),
            timestamp_ms: st.timestamp_ms,
            lat: ll.lat,
            lon: ll.lon,
            speed_mps: st.speed,
            acceleration_mps2: st.acceleration,
            heading_deg: st.heading_deg,
            lane_id: st.lane_id,
            length_m: st.length,
            width_m: st.width,
            connected: st.connected,
            source: st.source.into(),
        }
    }

    /// Projects into the local plane and checks every state invariant.
    pub fn to_state(&self, proj: &Projection) -> Result<VehicleState, String> {
        let ll = LatLon::new(self.lat, self.lon);
        let position = proj.project(ll).map_err(|e| e.to_string())?;
        let st = VehicleState::builder(self.uuid.clone(), self.timestamp_ms)
            .position(position)
            .latlon(ll)
            .speed(self.speed_mps)
            .acceleration(self.acceleration_mps2)
            .heading(self.heading_deg)
            .lane(self.lane_id)
            .size(self.length_m, self.width_m)
            .connected(self.connected)
            .source(self.source.into())
            .build();
        st.validate().map_err(|e| e.to_string())?;
        Ok(st)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackStatus {
    Accept,
    Reject,
    Abort,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManeuverFeedback {
    pub recommendation_id: String,
    pub status: FeedbackStatus,
}

/// Identifies the vehicle update that led to a recommendation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerRef {
    pub uuid: String,
    pub timestamp_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireWaypoint {
    pub timestamp_ms: i64,
    pub lat: f64,
    pub lon: f64,
    pub speed_mps: f64,
    pub acceleration_mps2: f64,
    pub heading_deg: f64,
}

impl WireWaypoint {
    pub fn from_waypoint(w: &Waypoint, proj: &Projection) -> Self {
        let ll = proj.unproject(w.position);
        Self {
            timestamp_ms: w.timestamp_ms,
            lat: ll.lat,
            lon: ll.lon,
            speed_mps: w.speed,
            acceleration_mps2: w.acceleration,
            heading_deg: w.heading_deg,
        }
    }

    pub fn to_waypoint(&self, proj: &Projection) -> Result<Waypoint, String> {
        let position = proj.project(LatLon::new(self.lat, self.lon)).map_err(|e| e.to_string())?;
        Ok(Waypoint {
            timestamp_ms: self.timestamp_ms,
            position,
            speed: self.speed_mps,
            acceleration: self.acceleration_mps2,
            heading_deg: self.heading_deg,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationMsg {
    pub recommendation_id: String,
    pub target_uuid: String,
    pub waypoints: Vec<WireWaypoint>,
    /// Extension field: the update whose arrival led to this computation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger: Option<TriggerRef>,
}

/// Everything that travels over a connection, in either direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    VehicleUpdate(VehicleUpdate),
    ManeuverFeedback(ManeuverFeedback),
    SubscriptionRequest { boundary: Boundary },
    SubscriptionAck {
        #[serde(default)]
        accepted: bool,
    },
    Recommendation(RecommendationMsg),
    /// Barrier: answered once every earlier line on the connection and all
    /// computations it started are done.
    Sync { token: u64 },
    SyncAck { token: u64 },
}

impl Message {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("wire messages always serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectKind {
    MalformedJson,
    UnknownType,
    Validation,
}

impl RejectKind {
    pub fn name(self) -> &'static str {
        match self {
            RejectKind::MalformedJson => "malformed_json",
            RejectKind::UnknownType => "unknown_type",
            RejectKind::Validation => "validation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    pub kind: RejectKind,
    pub detail: String,
}

const KNOWN_TYPES: [&str; 7] = [
    "vehicle_update",
    "maneuver_feedback",
    "subscription_request",
    "subscription_ack",
    "recommendation",
    "sync",
    "sync_ack",
];

/// Parses one line. Distinguishes broken JSON, an unknown or missing
/// `type`, and a known type whose fields do not check out.
pub fn parse_line(line: &str) -> Result<Message, Reject> {
    let reject = |kind, detail: String| Reject { kind, detail };
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| reject(RejectKind::MalformedJson, e.to_string()))?;
    let ty = value.get("type").and_then(|t| t.as_str()).unwrap_or("");
    if !KNOWN_TYPES.contains(&ty) {
        return Err(reject(RejectKind::UnknownType, format!("type {ty:?}")));
    }
    serde_json::from_value(value).map_err(|e| reject(RejectKind::Validation, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn proj() -> Projection {
        Projection::new(LatLon::new(52.0, 13.0)).unwrap()
    }

    const UPDATE: &str = r#"{"type":"vehicle_update","uuid":"m","timestamp_ms":1200,"lat":52.0001,"lon":13.0002,"speed_mps":11.5,"acceleration_mps2":0.5,"heading_deg":3.0,"lane_id":2,"length_m":4.5,"width_m":1.8,"connected":true,"source":"obu"}"#;

    #[test]
    fn vehicle_update_round_trip() {
        let Message::VehicleUpdate(u) = parse_line(UPDATE).unwrap() else { panic!("wrong variant") };
        assert_eq!(u.uuid, "m");
        assert_eq!(u.source, WireSource::Obu);
        let st = u.to_state(&proj()).unwrap();
        assert_eq!(st.speed, 11.5);
        assert_eq!(st.lane_id, 2);
        assert_eq!(VehicleUpdate::from_state(&st, &proj()), u);
        assert_eq!(parse_line(&Message::VehicleUpdate(u.clone()).to_line()).unwrap(), Message::VehicleUpdate(u));
    }

    #[test]
    fn reject_kinds() {
        assert_eq!(parse_line("{nope").unwrap_err().kind, RejectKind::MalformedJson);
        assert_eq!(parse_line(r#"{"type":"bogus"}"#).unwrap_err().kind, RejectKind::UnknownType);
        assert_eq!(parse_line(r#"{"uuid":"x"}"#).unwrap_err().kind, RejectKind::UnknownType);
        assert_eq!(parse_line(r#"{"type":"vehicle_update","uuid":"x"}"#).unwrap_err().kind, RejectKind::Validation);
    }

    #[test]
    fn negative_speed_fails_state_validation() {
        let line = UPDATE.replace("\"speed_mps\":11.5", "\"speed_mps\":-1");
        let Message::VehicleUpdate(u) = parse_line(&line).unwrap() else { panic!() };
        assert!(u.to_state(&proj()).unwrap_err().contains("speed"));
    }

    #[test]
    fn feedback_and_sync_parse() {
        let fb = parse_line(r#"{"type":"maneuver_feedback","recommendation_id":"rec-1","status":"reject"}"#).unwrap();
        assert_eq!(
            fb,
            Message::ManeuverFeedback(ManeuverFeedback { recommendation_id: "rec-1".into(), status: FeedbackStatus::Reject })
        );
        assert_eq!(parse_line(r#"{"type":"sync","token":7}"#).unwrap(), Message::Sync { token: 7 });
        assert_eq!(Message::SyncAck { token: 7 }.to_line(), r#"{"type":"sync_ack","token":7}"#);
    }
}
