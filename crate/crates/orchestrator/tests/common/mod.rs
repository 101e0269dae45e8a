#![allow(dead_code)]

use lmo_core::geo::Polyline;
use lmo_core::scene::{Boundary, SceneConfig};
use lmo_core::{LatLon, Projection, Recommendation, RolloutOutcome, SafetyParams, Vec2, VehicleState, Waypoint};
use lmo_learn::dqn::{MergeSnapshot, NoRecommendation, RecommendationSet, TrajectoryModel};
use lmo_orchestrator::wire::{Message, VehicleUpdate};
use std::time::Duration;

pub fn scene() -> SceneConfig {
    SceneConfig {
        origin: LatLon::new(52.0, 13.0),
        boundary: Boundary { min_lat: 51.99, min_lon: 12.99, max_lat: 52.01, max_lon: 13.01 },
        target_lane_id: 1,
        merge_lane_id: 2,
        target_lane: Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(0.0, 600.0)]).unwrap(),
        lane_width_m: 3.7,
        merge_zone_end_station_m: 250.0,
        safety: SafetyParams::default(),
        horizon_ticks: 70,
    }
}

pub fn proj() -> Projection {
    Projection::new(scene().origin).unwrap()
}

pub fn vehicle(id: &str, t: i64, x: f64, y: f64, v: f64) -> VehicleState {
    let p = Vec2::new(x, y);
    VehicleState::builder(id, t).position(p).latlon(proj().unproject(p)).speed(v).lane(if x > 1.85 { 2 } else { 1 }).build()
}

pub fn update_line(st: &VehicleState) -> String {
    Message::VehicleUpdate(VehicleUpdate::from_state(st, &proj())).to_line()
}

/// Steers straight to the slot middle one second ahead, optionally slowly.
pub struct StubModel {
    pub delay: Duration,
    pub accel: f64,
}

impl Default for StubModel {
    fn default() -> Self {
        Self { delay: Duration::ZERO, accel: 0.5 }
    }
}

impl TrajectoryModel for StubModel {
    fn recommend(&self, snap: &MergeSnapshot, _: &SceneConfig, _: usize) -> Result<RecommendationSet, NoRecommendation> {
        std::thread::sleep(self.delay);
        let p = snap.preceding.as_ref().ok_or(NoRecommendation::NoPreceding)?;
        let f = snap.following.as_ref().ok_or(NoRecommendation::NoFollowing)?;
        let t = snap.merging.timestamp_ms + 1000;
        let mid = 0.5 * (p.position.y + p.speed + f.position.y + f.speed);
        let wp = Waypoint {
            timestamp_ms: t,
            position: Vec2::new(0.0, mid),
            speed: 0.5 * (p.speed + f.speed),
            acceleration: self.accel,
            heading_deg: 0.0,
        };
        Ok(RecommendationSet {
            merging: Recommendation { target_id: snap.merging.vehicle_id.clone(), waypoints: vec![wp], outcome: RolloutOutcome::Success },
            following: None,
        })
    }
}
