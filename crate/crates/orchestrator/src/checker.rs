//! Safety checks run on every recommendation before it leaves the service,
//! and the scene detection that decides which vehicles need one.

use lmo_core::scene::SceneConfig;
use lmo_core::{is_safe_slot, Recommendation, Vec2, VehicleState};
use lmo_learn::dqn::MergeSnapshot;
use serde::{Deserialize, Serialize};

/// Largest acceleration magnitude a recommendation may contain, m/s^2.
pub const MAX_ABS_ACCEL: f64 = 4.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum CheckFailure {
    Empty,
    AccelBound { index: usize, value: f64 },
    UnsafeSlot,
}

impl CheckFailure {
    pub fn name(&self) -> &'static str {
        match self {
            CheckFailure::Empty => "empty",
            CheckFailure::AccelBound { .. } => "accel_bound",
            CheckFailure::UnsafeSlot => "unsafe_slot",
        }
    }
}

/// Constant-velocity prediction of `st` at `t_ms`.
pub fn extrapolate(st: &VehicleState, t_ms: i64) -> VehicleState {
    let dt = (t_ms - st.timestamp_ms) as f64 / 1000.0;
    let mut out = st.clone();
    out.position = st.position + Vec2::from_heading_deg(st.heading_deg) * (st.speed * dt);
    out.timestamp_ms = t_ms;
    out.latlon = None;
    out
}

fn accel_bound(rec: &Recommendation) -> Result<(), CheckFailure> {
    if rec.waypoints.is_empty() {
        return Err(CheckFailure::Empty);
    }
    match rec.waypoints.iter().position(|w| !(w.acceleration.abs() <= MAX_ABS_ACCEL)) {
        Some(index) => Err(CheckFailure::AccelBound { index, value: rec.waypoints[index].acceleration }),
        None => Ok(()),
    }
}

/// Passes a recommendation for the merging vehicle when no waypoint exceeds
/// the acceleration bound and its final waypoint is a safe slot between P and
/// F, both carried forward at constant velocity.
pub fn check_recommendation(rec: &Recommendation, snap: &MergeSnapshot, scene: &SceneConfig) -> Result<(), CheckFailure> {
    accel_bound(rec)?;
    let (Some(p), Some(f)) = (&snap.preceding, &snap.following) else {
        return Err(CheckFailure::UnsafeSlot);
    };
    let last = rec.final_waypoint().ok_or(CheckFailure::Empty)?;
    let mut m = snap.merging.clone();
    m.position = last.position;
    m.speed = last.speed;
    m.heading_deg = last.heading_deg;
    m.timestamp_ms = last.timestamp_ms;
    m.latlon = None;
    let (p, f) = (extrapolate(p, last.timestamp_ms), extrapolate(f, last.timestamp_ms));
    let axis = scene.target_lane.axis_at(scene.target_lane.locate(m.position).station);
    match is_safe_slot(&m, &p, &f, &scene.safety, axis) {
        Ok(true) => Ok(()),
        _ => Err(CheckFailure::UnsafeSlot),
    }
}

/// Slow-down advice for F only has to respect the acceleration bound.
pub fn check_follower_advice(rec: &Recommendation) -> Result<(), CheckFailure> {
    accel_bound(rec)
}

/// Connected vehicles on a merge lane next to the target lane, ahead of the
/// merge-zone end, each paired with the nearest target-lane vehicles ahead
/// (P) and behind (F). A vehicle with no neighbour on one side still gets a
/// snapshot with that side empty.
pub fn find_merge_scenes(states: &[VehicleState], scene: &SceneConfig) -> Vec<MergeSnapshot> {
    let w = scene.lane_width_m;
    let coords: Vec<_> = states.iter().map(|s| scene.lane_coords(s)).collect();
    let mut out = Vec::new();
    for (i, m) in states.iter().enumerate() {
        let c = coords[i];
        let on_ramp = (0.5 * w..=1.5 * w).contains(&c.offset.abs());
        if !m.connected || !on_ramp || c.station > scene.merge_zone_end_station_m {
            continue;
        }
        let mut p: Option<usize> = None;
        let mut f: Option<usize> = None;
        for (j, cj) in coords.iter().enumerate() {
            if j == i || cj.offset.abs() >= 0.5 * w {
                continue;
            }
            if cj.station > c.station {
                if p.is_none_or(|k| cj.station < coords[k].station) {
                    p = Some(j);
                }
            } else if f.is_none_or(|k| cj.station > coords[k].station) {
                f = Some(j);
            }
        }
        out.push(MergeSnapshot {
            merging: m.clone(),
            preceding: p.map(|k| states[k].clone()),
            following: f.map(|k| states[k].clone()),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use lmo_core::geo::Polyline;
    use lmo_core::scene::Boundary;
    use lmo_core::{LatLon, RolloutOutcome, SafetyParams, Waypoint};

    pub(crate) fn scene() -> SceneConfig {
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

    fn v(id: &str, x: f64, y: f64, speed: f64) -> VehicleState {
        VehicleState::builder(id, 1000).position(Vec2::new(x, y)).speed(speed).build()
    }

    fn rec_to(x: f64, y: f64, speed: f64, t: i64, accel: f64) -> Recommendation {
        Recommendation {
            target_id: "m".into(),
            waypoints: vec![Waypoint { timestamp_ms: t, position: Vec2::new(x, y), speed, acceleration: accel, heading_deg: 0.0 }],
            outcome: RolloutOutcome::Success,
        }
    }

    #[test]
    fn centered_in_thirty_meter_slot_passes() {
        // P rear bumper at 130, F front bumper at 100: a 30 m slot at 10 m/s
        let snap = MergeSnapshot {
            merging: v("m", 3.7, 110.0, 10.0),
            preceding: Some(v("p", 0.0, 132.25, 10.0)),
            following: Some(v("f", 0.0, 97.75, 10.0)),
        };
        // gaps of 12.75 m each side against a required 1 + 0.5*10 = 6 m
        assert_eq!(check_recommendation(&rec_to(0.0, 115.0, 10.0, 1000, 0.0), &snap, &scene()), Ok(()));
        // one second later everything has moved 10 m
        assert_eq!(check_recommendation(&rec_to(0.0, 125.0, 10.0, 2000, 1.5), &snap, &scene()), Ok(()));
    }

    #[test]
    fn acceleration_bound() {
        let snap = MergeSnapshot {
            merging: v("m", 3.7, 110.0, 10.0),
            preceding: Some(v("p", 0.0, 132.25, 10.0)),
            following: Some(v("f", 0.0, 97.75, 10.0)),
        };
        let r = check_recommendation(&rec_to(0.0, 115.0, 10.0, 1000, 6.0), &snap, &scene());
        assert_eq!(r, Err(CheckFailure::AccelBound { index: 0, value: 6.0 }));
        assert_eq!(r.unwrap_err().name(), "accel_bound");
        let empty = Recommendation { target_id: "m".into(), waypoints: vec![], outcome: RolloutOutcome::Success };
        assert_eq!(check_recommendation(&empty, &snap, &scene()), Err(CheckFailure::Empty));
    }

    #[test]
    fn slot_closing_under_extrapolation_fails() {
        // F is 4 m/s faster than P; after 3 s the 30 m slot is 18 m long
        let snap = MergeSnapshot {
            merging: v("m", 3.7, 110.0, 10.0),
            preceding: Some(v("p", 0.0, 132.25, 8.0)),
            following: Some(v("f", 0.0, 97.75, 12.0)),
        };
        assert_eq!(check_recommendation(&rec_to(0.0, 115.0, 10.0, 1000, 0.0), &snap, &scene()), Ok(()));
        assert_eq!(
            check_recommendation(&rec_to(0.0, 145.0, 10.0, 4000, 0.0), &snap, &scene()),
            Err(CheckFailure::UnsafeSlot)
        );
    }

    #[test]
    fn scene_detection() {
        let states = vec![
            v("f", 0.0, 90.0, 10.0),
            v("m", 3.7, 100.0, 10.0),
            v("p", 0.0, 130.0, 10.0),
            v("u", 0.0, 160.0, 10.0),
            v("past", 3.7, 300.0, 10.0),
        ];
        let scenes = find_merge_scenes(&states, &scene());
        assert_eq!(scenes.len(), 1);
        assert_eq!(scenes[0].merging.vehicle_id, "m");
        assert_eq!(scenes[0].preceding.as_ref().unwrap().vehicle_id, "p");
        assert_eq!(scenes[0].following.as_ref().unwrap().vehicle_id, "f");

        let mut unconnected = states.clone();
        unconnected[1].connected = false;
        assert!(find_merge_scenes(&unconnected, &scene()).is_empty());
        assert!(find_merge_scenes(&states[..3].iter().filter(|s| s.vehicle_id != "f").cloned().collect::<Vec<_>>(), &scene())[0]
            .following
            .is_none());
    }
}
