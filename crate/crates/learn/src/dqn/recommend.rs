//! Greedy rollout of a trained network into waypoint recommendations.

use lmo_core::geo::{wrap_heading, Vec2};
use lmo_core::scene::SceneConfig;
use lmo_core::{Recommendation, RolloutOutcome, VehicleState, Waypoint};
use serde::{Deserialize, Serialize};

use super::env::{EpisodeOutcome, EpisodeSpec, LaneVehicle, MergeEnv, TICK_MS, TICK_S};
use super::network::DuelingNetwork;

/// Suggested constant deceleration for F when the slot is too small.
pub const FOLLOWER_SLOWDOWN: f64 = -0.5;
pub const MAX_HORIZON_TICKS: usize = 70;

/// The vehicles around one merging vehicle at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeSnapshot {
    pub merging: VehicleState,
    pub preceding: Option<VehicleState>,
    pub following: Option<VehicleState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoRecommendation {
    NoPreceding,
    NoFollowing,
    InvalidHorizon(usize),
    Degenerate(String),
}

impl NoRecommendation {
    pub fn reason(&self) -> String {
        match self {
            NoRecommendation::NoPreceding => "no_preceding".into(),
            NoRecommendation::NoFollowing => "no_following".into(),
            NoRecommendation::InvalidHorizon(h) => format!("invalid_horizon: {h}"),
            NoRecommendation::Degenerate(why) => format!("degenerate: {why}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationSet {
    pub merging: Recommendation,
    /// Slow-down advice for F, present when the current slot is too small.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub following: Option<Recommendation>,
}

/// Anything that can turn a merge snapshot into recommendations.
pub trait TrajectoryModel: Send + Sync {
    fn recommend(
        &self,
        snapshot: &MergeSnapshot,
        scene: &SceneConfig,
        horizon_ticks: usize,
    ) -> Result<RecommendationSet, NoRecommendation>;
}

impl TrajectoryModel for DuelingNetwork {
    fn recommend(
        &self,
        snapshot: &MergeSnapshot,
        scene: &SceneConfig,
        horizon_ticks: usize,
    ) -> Result<RecommendationSet, NoRecommendation> {
        recommend_trajectory(self, snapshot, scene, horizon_ticks)
    }
}

/// Maps world states into the environment frame, mirroring scenes whose
/// merge lane lies left of the target lane.
struct Frame<'a> {
    scene: &'a SceneConfig,
    side: f64,
}

impl Frame<'_> {
    fn vehicle(&self, st: &VehicleState) -> LaneVehicle {
        let c = self.scene.lane_coords(st);
        LaneVehicle {
            s: c.station,
            l: self.side * c.offset,
            v: st.speed,
            heading_rel_deg: self.side * c.heading_rel_deg,
            length: st.length,
            width: st.width,
        }
    }

    fn position(&self, v: &LaneVehicle) -> Vec2 {
        self.scene.target_lane.point_at(v.s, self.side * v.l)
    }

    fn heading(&self, v: &LaneVehicle) -> f64 {
        wrap_heading(self.scene.target_lane.axis_at(v.s).heading_deg() + self.side * v.heading_rel_deg)
    }

    fn waypoint(&self, v: &LaneVehicle, t_ms: i64, accel: f64) -> Waypoint {
        Waypoint { timestamp_ms: t_ms, position: self.position(v), speed: v.v, acceleration: accel, heading_deg: self.heading(v) }
    }
}

/// Free room between P's rear and F's front minus what a safe slot needs.
fn slot_shortfall(m: &LaneVehicle, p: &LaneVehicle, f: &LaneVehicle, spec: &EpisodeSpec) -> f64 {
    let room = (p.s - 0.5 * p.length) - (f.s + 0.5 * f.length);
    m.length + spec.safety.required_gap(m.v) + spec.safety.required_gap(f.v) - room
}

/// Rolls the greedy policy forward from the snapshot at 100 ms ticks.
///
/// Each waypoint is the state after one tick and carries the acceleration
/// applied during that tick. The rollout stops once M is in the target lane
/// inside a safe slot, on a predicted violation, or at the horizon.
///
/// P moves at constant speed. F does too unless the slot is short, in which case F is advised to brake gently until it is
/// not and the rollout assumes F follows that advice.
pub fn recommend_trajectory(
    net: &DuelingNetwork,
    snapshot: &MergeSnapshot,
    scene: &SceneConfig,
    horizon_ticks: usize,
) -> Result<RecommendationSet, NoRecommendation> {
    let p_state = snapshot.preceding.as_ref().ok_or(NoRecommendation::NoPreceding)?;
    let f_state = snapshot.following.as_ref().ok_or(NoRecommendation::NoFollowing)?;
    if horizon_ticks == 0 || horizon_ticks > MAX_HORIZON_TICKS {
        return Err(NoRecommendation::InvalidHorizon(horizon_ticks));
    }
    let m_state = &snapshot.merging;
    let m_offset = scene.lane_coords(m_state).offset;
    let frame = Frame { scene, side: if m_offset < 0.0 { -1.0 } else { 1.0 } };
    let (m, p, f) = (frame.vehicle(m_state), frame.vehicle(p_state), frame.vehicle(f_state));
    let mut spec = EpisodeSpec {
        m,
        p,
        f,
        p_track: Vec::new(),
        f_track: Vec::new(),
        lane_width: scene.lane_width_m,
        zone_end: scene.merge_zone_end_station_m,
        safety: scene.safety,
        max_ticks: horizon_ticks,
    };
    let t0 = m_state.timestamp_ms;

    if MergeEnv::unchecked(&spec).in_safe_slot() {
        let hold = Waypoint {
            timestamp_ms: t0,
            position: m_state.position,
            speed: m_state.speed,
            acceleration: 0.0,
            heading_deg: m_state.heading_deg,
        };
        let merging = Recommendation { target_id: m_state.vehicle_id.clone(), waypoints: vec![hold], outcome: RolloutOutcome::Success };
        return Ok(RecommendationSet { merging, following: None });
    }

    let following = (slot_shortfall(&m, &p, &f, &spec) > 0.0).then(|| {
        let (mut pp, mut ff) = (p, f);
        let mut waypoints = Vec::new();
        for k in 1..=horizon_ticks {
            let (disp, v) = lmo_core::geo::advance_speed(ff.v, FOLLOWER_SLOWDOWN, TICK_S);
            ff.s += disp;
            ff.v = v;
            pp.s += pp.v * TICK_S;
            spec.f_track.push((ff.s, ff.v));
            waypoints.push(frame.waypoint(&ff, t0 + TICK_MS * k as i64, FOLLOWER_SLOWDOWN));
            if slot_shortfall(&m, &pp, &ff, &spec) <= 0.0 || ff.v == 0.0 {
                break;
            }
        }
        // tick 0 entry so the track index matches the env tick
        spec.f_track.insert(0, (f.s, f.v));
        Recommendation { target_id: f_state.vehicle_id.clone(), waypoints, outcome: RolloutOutcome::SlowDown }
    });

    let mut env = MergeEnv::reset(&spec).map_err(|e| NoRecommendation::Degenerate(e.to_string()))?;
    let mut waypoints = Vec::new();
    let mut outcome = RolloutOutcome::Horizon;
    while !env.is_done() {
        let action = net.greedy_action(&env.state());
        let step = env.step(action).map_err(|e| NoRecommendation::Degenerate(e.to_string()))?;
        waypoints.push(frame.waypoint(&env.m, t0 + TICK_MS * env.tick() as i64, step.acceleration));
        if let Some(EpisodeOutcome::Violation(_)) = step.outcome {
            outcome = RolloutOutcome::SafetyViolation;
            break;
        }
        if env.in_safe_slot() {
            outcome = RolloutOutcome::Success;
            break;
        }
    }
    let merging = Recommendation { target_id: m_state.vehicle_id.clone(), waypoints, outcome };
    Ok(RecommendationSet { merging, following })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dqn::network::NetShape;
    use lmo_core::geo::Polyline;
    use lmo_core::scene::Boundary;
    use lmo_core::{LatLon, SafetyParams};

    pub(crate) fn scene() -> SceneConfig {
        SceneConfig {
            origin: LatLon::new(52.0, 13.0),
            boundary: Boundary { min_lat: 51.9, min_lon: 12.9, max_lat: 52.1, max_lon: 13.1 },
            target_lane_id: 1,
            merge_lane_id: 2,
            target_lane: Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(0.0, 500.0)]).unwrap(),
            lane_width_m: 3.7,
            merge_zone_end_station_m: 300.0,
            safety: SafetyParams::default(),
            horizon_ticks: 70,
        }
    }

    fn vehicle(id: &str, x: f64, y: f64, v: f64) -> VehicleState {
        VehicleState::builder(id, 1000).position(Vec2::new(x, y)).speed(v).build()
    }

    #[test]
    fn missing_neighbours() {
        let net = DuelingNetwork::new(NetShape::DEFAULT, 1);
        let mut snap = MergeSnapshot {
            merging: vehicle("m", 3.7, 50.0, 10.0),
            preceding: Some(vehicle("p", 0.0, 80.0, 10.0)),
            following: None,
        };
        assert_eq!(recommend_trajectory(&net, &snap, &scene(), 70), Err(NoRecommendation::NoFollowing));
        assert_eq!(NoRecommendation::NoFollowing.reason(), "no_following");
        snap.preceding = None;
        snap.following = Some(vehicle("f", 0.0, 20.0, 10.0));
        assert_eq!(recommend_trajectory(&net, &snap, &scene(), 70), Err(NoRecommendation::NoPreceding));
    }

    #[test]
    fn already_merged_holds() {
        let net = DuelingNetwork::new(NetShape::DEFAULT, 1);
        let snap = MergeSnapshot {
            merging: vehicle("m", 0.2, 50.0, 10.0),
            preceding: Some(vehicle("p", 0.0, 80.0, 10.0)),
            following: Some(vehicle("f", 0.0, 20.0, 10.0)),
        };
        let rec = recommend_trajectory(&net, &snap, &scene(), 70).unwrap();
        assert_eq!(rec.merging.waypoints.len(), 1);
        assert_eq!(rec.merging.outcome, RolloutOutcome::Success);
        assert!(rec.following.is_none());
    }

    #[test]
    fn rollout_waypoints_are_timed_and_bounded() {
        let net = DuelingNetwork::new(NetShape::DEFAULT, 4);
        let snap = MergeSnapshot {
            merging: vehicle("m", 3.7, 40.0, 10.0),
            preceding: Some(vehicle("p", 0.0, 80.0, 10.0)),
            following: Some(vehicle("f", 0.0, 20.0, 10.0)),
        };
        let rec = recommend_trajectory(&net, &snap, &scene(), 30).unwrap();
        let w = &rec.merging.waypoints;
        assert!(!w.is_empty() && w.len() <= 30);
        for (k, wp) in w.iter().enumerate() {
            assert_eq!(wp.timestamp_ms, 1000 + 100 * (k as i64 + 1));
        }
        assert_eq!(rec.merging.is_failure_flagged(), rec.merging.outcome != RolloutOutcome::Success);
    }

    #[test]
    fn short_slot_slows_follower() {
        let net = DuelingNetwork::new(NetShape::DEFAULT, 4);
        let snap = MergeSnapshot {
            merging: vehicle("m", 3.7, 40.0, 10.0),
            preceding: Some(vehicle("p", 0.0, 48.0, 10.0)),
            following: Some(vehicle("f", 0.0, 30.0, 10.0)),
        };
        let rec = recommend_trajectory(&net, &snap, &scene(), 70).unwrap();
        let f = rec.following.expect("slow-down advice");
        assert_eq!(f.target_id, "f");
        assert_eq!(f.outcome, RolloutOutcome::SlowDown);
        assert!(f.waypoints.iter().all(|w| w.acceleration == FOLLOWER_SLOWDOWN));
        assert!(f.waypoints.windows(2).all(|p| p[1].speed < p[0].speed));
    }
}
