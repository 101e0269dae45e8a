//! Ground-truth vehicle kinematics and the driver models.

use lmo_core::geo::{advance_speed, heading_difference, wrap_heading, Polyline};
use lmo_core::{SafetyParams, Vec2, Waypoint};

use crate::scenario::{Behavior, Scenario, ScriptStep, VehicleSpec};

/// Largest heading change per tick, degrees.
pub const MAX_SLEW_DEG: f64 = 4.0;
/// Lane-keeping gain, degrees of heading per meter of offset.
pub const LANE_KEEP_GAIN: f64 = 2.0;
pub const BRAKE: f64 = -3.0;
pub const EMERGENCY_BRAKE: f64 = -4.5;
pub const CRUISE_ACCEL: f64 = 1.0;
/// Band above the desired speed where the car-following model coasts.
pub const SPEED_BAND: f64 = 0.5;

/// An accepted recommendation being tracked.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivePlan {
    pub recommendation_id: String,
    pub waypoints: Vec<Waypoint>,
}

impl ActivePlan {
    /// Waypoint for the tick that ends at or after `t_end_ms`.
    pub fn waypoint_for(&self, t_end_ms: i64) -> Option<&Waypoint> {
        self.waypoints.iter().filter(|w| w.timestamp_ms >= t_end_ms).min_by_key(|w| w.timestamp_ms)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimVehicle {
    pub id: String,
    pub length: f64,
    pub width: f64,
    pub connected: bool,
    pub behavior: Behavior,
    pub position: Vec2,
    pub speed: f64,
    /// Acceleration applied over the last tick.
    pub accel: f64,
    pub heading_deg: f64,
    pub plan: Option<ActivePlan>,
}

impl SimVehicle {
    pub fn from_spec(spec: &VehicleSpec, scn: &Scenario) -> Self {
        let lane = scn.lane(spec.lane);
        Self {
            id: spec.id.clone(),
            length: spec.length,
            width: spec.width,
            connected: spec.connected,
            behavior: spec.behavior.clone(),
            position: lane.point_at(spec.station, 0.0),
            speed: spec.speed,
            accel: 0.0,
            heading_deg: lane.axis_at(spec.station).heading_deg(),
            plan: None,
        }
    }

    pub fn takes_recommendations(&self) -> bool {
        self.connected && matches!(self.behavior, Behavior::AgentRecommended { .. })
    }
}

/// One tick: slew the heading toward the target, then integrate speed and
/// move along the new heading. Records the acceleration actually applied.
pub fn vehicle_tick(v: &mut SimVehicle, target_heading_deg: f64, accel: f64, dt_s: f64) {
    let turn = heading_difference(target_heading_deg, v.heading_deg).clamp(-MAX_SLEW_DEG, MAX_SLEW_DEG);
    v.heading_deg = wrap_heading(v.heading_deg + turn);
    let (disp, speed) = advance_speed(v.speed, accel, dt_s);
    v.accel = (speed - v.speed) / dt_s;
    v.speed = speed;
    v.position = v.position + Vec2::from_heading_deg(v.heading_deg) * disp;
}

/// Gap-keeping with a speed target: brake when the gap is under the headway
/// gap, brake hard under the standstill gap, otherwise drift toward the
/// desired speed.
pub fn car_following_accel(gap: Option<f64>, speed: f64, desired: f64, safety: &SafetyParams) -> f64 {
    match gap {
        Some(g) if g < safety.standstill_gap_m => EMERGENCY_BRAKE,
        Some(g) if g < safety.required_gap(speed) => BRAKE,
        _ if speed < desired => CRUISE_ACCEL,
        _ if speed > desired + SPEED_BAND => -CRUISE_ACCEL,
        _ => 0.0,
    }
}

/// Heading that steers back onto the centerline of `lane`.
pub fn lane_keeping_heading(lane: &Polyline, position: Vec2) -> f64 {
    let lp = lane.locate(position);
    let correction = (LANE_KEEP_GAIN * lp.offset).clamp(-MAX_SLEW_DEG, MAX_SLEW_DEG);
    wrap_heading(lp.axis.heading_deg() - correction)
}

/// Piecewise-constant acceleration of a script at `t_ms`.
pub fn scripted_accel(steps: &[ScriptStep], t_ms: i64) -> f64 {
    steps.iter().filter(|s| s.from_ms <= t_ms).max_by_key(|s| s.from_ms).map_or(0.0, |s| s.accel)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn car(speed: f64) -> SimVehicle {
        SimVehicle {
            id: "a".into(),
            length: 4.5,
            width: 1.8,
            connected: true,
            behavior: Behavior::CarFollowing { desired_speed: 10.0 },
            position: Vec2::ZERO,
            speed,
            accel: 0.0,
            heading_deg: 0.0,
            plan: None,
        }
    }

    #[test]
    fn one_tick_at_ten_meters_per_second() {
        let mut v = car(10.0);
        vehicle_tick(&mut v, 0.0, 0.0, 0.1);
        assert!((v.position.y - 1.0).abs() < 1e-12 && v.position.x.abs() < 1e-12);
        assert_eq!(v.speed, 10.0);
    }

    #[test]
    fn braking_to_a_stop_clamps_speed() {
        let mut v = car(0.05);
        vehicle_tick(&mut v, 0.0, -3.0, 0.1);
        assert_eq!(v.speed, 0.0);
        assert!((v.accel + 0.5).abs() < 1e-12);
        assert!((v.position.y - 0.05 * 0.05 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn heading_slews_at_most_four_degrees() {
        let mut v = car(10.0);
        vehicle_tick(&mut v, 90.0, 0.0, 0.1);
        assert_eq!(v.heading_deg, 4.0);
        vehicle_tick(&mut v, 355.0, 0.0, 0.1);
        assert_eq!(v.heading_deg, 0.0);
        vehicle_tick(&mut v, 358.0, 0.0, 0.1);
        assert_eq!(v.heading_deg, 358.0);
    }

    #[test]
    fn car_following_rules() {
        let s = SafetyParams::default();
        // gap 3 m at 10 m/s is under 1 + 0.5 * 10
        assert_eq!(car_following_accel(Some(3.0), 10.0, 12.0, &s), BRAKE);
        assert_eq!(car_following_accel(Some(0.5), 10.0, 12.0, &s), EMERGENCY_BRAKE);
        assert_eq!(car_following_accel(Some(50.0), 10.0, 12.0, &s), CRUISE_ACCEL);
        assert_eq!(car_following_accel(None, 12.3, 12.0, &s), 0.0);
        assert_eq!(car_following_accel(None, 13.0, 12.0, &s), -CRUISE_ACCEL);
    }

    #[test]
    fn lane_keeping_steers_toward_the_centerline() {
        let lane = Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(0.0, 100.0)]).unwrap();
        // right of a northbound lane: steer left
        assert_eq!(lane_keeping_heading(&lane, Vec2::new(1.0, 10.0)), 358.0);
        assert_eq!(lane_keeping_heading(&lane, Vec2::new(-5.0, 10.0)), 4.0);
        assert_eq!(lane_keeping_heading(&lane, Vec2::new(0.0, 10.0)), 0.0);
    }

    #[test]
    fn plan_lookup_and_script() {
        let wp = |t| Waypoint { timestamp_ms: t, position: Vec2::ZERO, speed: 0.0, acceleration: t as f64, heading_deg: 0.0 };
        let plan = ActivePlan { recommendation_id: "r".into(), waypoints: vec![wp(100), wp(200), wp(300)] };
        assert_eq!(plan.waypoint_for(150).unwrap().timestamp_ms, 200);
        assert_eq!(plan.waypoint_for(200).unwrap().timestamp_ms, 200);
        assert!(plan.waypoint_for(301).is_none());
        let steps = [ScriptStep { from_ms: 0, accel: 1.0 }, ScriptStep { from_ms: 500, accel: -2.0 }];
        assert_eq!(scripted_accel(&steps, 499), 1.0);
        assert_eq!(scripted_accel(&steps, 500), -2.0);
    }
}
