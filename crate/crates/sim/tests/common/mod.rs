#![allow(dead_code)]

use lmo_core::geo::{advance_speed, wrap_heading};
use lmo_core::scene::SceneConfig;
use lmo_core::{Recommendation, RolloutOutcome, Vec2, Waypoint};
use lmo_learn::dqn::{MergeSnapshot, NoRecommendation, RecommendationSet, TrajectoryModel};
use lmo_orchestrator::{Orchestrator, OrchestratorConfig};
use lmo_sim::Scenario;
use std::path::PathBuf;
use std::sync::Arc;

pub fn scenario_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/four_vehicle_merge.json")
}

pub fn four_vehicle() -> Scenario {
    Scenario::load(scenario_path()).unwrap()
}

/// Steers left at up to 12 degrees with a gentle acceleration until the
/// centroid is within 0.6 m of the target centerline, then straightens out.
/// Only handles merge lanes to the right.
pub struct LaneChangeStub;

impl TrajectoryModel for LaneChangeStub {
    fn recommend(&self, snap: &MergeSnapshot, scene: &SceneConfig, horizon: usize) -> Result<RecommendationSet, NoRecommendation> {
        if snap.preceding.is_none() {
            return Err(NoRecommendation::NoPreceding);
        }
        if snap.following.is_none() {
            return Err(NoRecommendation::NoFollowing);
        }
        let m = &snap.merging;
        let (mut pos, mut v) = (m.position, m.speed);
        let mut rel = 0.0f64;
        let mut waypoints = Vec::new();
        for k in 1..=horizon {
            let lp = scene.target_lane.locate(pos);
            let want: f64 = if lp.offset > 0.6 { -12.0 } else { 0.0 };
            rel += (want - rel).clamp(-4.0, 4.0);
            let heading = wrap_heading(lp.axis.heading_deg() + rel);
            let accel = 0.5;
            let (disp, nv) = advance_speed(v, accel, 0.1);
            pos = pos + Vec2::from_heading_deg(heading) * disp;
            v = nv;
            waypoints.push(Waypoint { timestamp_ms: m.timestamp_ms + 100 * k as i64, position: pos, speed: v, acceleration: accel, heading_deg: heading });
            if lp.offset <= 0.6 && rel == 0.0 {
                break;
            }
        }
        let merging = Recommendation { target_id: m.vehicle_id.clone(), waypoints, outcome: RolloutOutcome::Success };
        Ok(RecommendationSet { merging, following: None })
    }
}

pub fn orchestrator(scn: &Scenario) -> Arc<Orchestrator> {
    Arc::new(Orchestrator::new(OrchestratorConfig::new(scn.scene.clone()), Some(Arc::new(LaneChangeStub))).unwrap())
}
