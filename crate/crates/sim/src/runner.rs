//! The tick loop.
//!
//! Every 100 ms of simulation time: deliver due messages (the orchestrator
//! answers instantly in simulation time), log ground truth and check it,
//! sense and fuse, publish the fused tracks, then advance every vehicle one
//! tick. All randomness comes from two seeded streams, one for the camera
//! and one for the network, so a run is a pure function of scenario and
//! seed.

use lmo_core::scene::SceneConfig;
use lmo_core::{is_safe_slot, longitudinal_gap, LatLon, Projection, Source, Vec2, VehicleState};
use lmo_orchestrator::wire::{FeedbackStatus, ManeuverFeedback, RecommendationMsg, VehicleUpdate};
use lmo_orchestrator::Message;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{Camera, Seen};
use crate::fusion::Fusion;
use crate::gateway::{Delivery, Endpoint, Gateway, GatewayCounters, Interest};
use crate::link::OrchestratorLink;
use crate::log::{LogEvent, TruthRecord};
use crate::network::EventQueue;
use crate::scenario::{Behavior, LaneRef, Scenario};
use crate::vehicle::{car_following_accel, lane_keeping_heading, scripted_accel, vehicle_tick, ActivePlan, SimVehicle};
use crate::SimError;

const CAMERA_STREAM: u64 = 1;
const NETWORK_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub seed: u64,
    pub end_ms: i64,
    pub end_reason: String,
    pub merged: Vec<String>,
    pub not_merged: Vec<String>,
    pub violations: usize,
    pub gateway: GatewayCounters,
    /// Set when the orchestrator link failed mid-run; the log is partial.
    pub aborted: Option<String>,
}

impl RunSummary {
    /// 0 merged safely, 1 aborted, 2 safety violation, 3 not merged in time.
    pub fn exit_code(&self) -> i32 {
        if self.violations > 0 {
            2
        } else if self.aborted.is_some() {
            1
        } else if !self.not_merged.is_empty() {
            3
        } else {
            0
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub events: Vec<LogEvent>,
    pub summary: RunSummary,
    /// Wall-clock time per orchestrator exchange, ms.
    pub processing_ms: Vec<f64>,
}

/// Where a vehicle is relative to the target lane.
#[derive(Debug, Clone, Copy)]
struct Placed {
    station: f64,
    offset: f64,
    lane: LaneRef,
}

fn place(scene: &SceneConfig, p: Vec2) -> Placed {
    let lp = scene.target_lane.locate(p);
    let lane = if lp.offset.abs() < 0.5 * scene.lane_width_m { LaneRef::Target } else { LaneRef::Merge };
    Placed { station: lp.station, offset: lp.offset, lane }
}

fn lane_name(l: LaneRef) -> &'static str {
    match l {
        LaneRef::Target => "target",
        LaneRef::Merge => "merge",
    }
}

fn message_type(m: &Message) -> String {
    serde_json::to_value(m).ok().and_then(|v| v["type"].as_str().map(String::from)).unwrap_or_default()
}

fn truth_state(v: &SimVehicle, t_ms: i64, scene: &SceneConfig, proj: &Projection) -> VehicleState {
    let lane = scene.lane_for_offset(place(scene, v.position).offset);
    VehicleState::builder(v.id.clone(), t_ms)
        .position(v.position)
        .latlon(proj.unproject(v.position))
        .speed(v.speed)
        .acceleration(v.accel)
        .heading(v.heading_deg)
        .lane(lane)
        .size(v.length, v.width)
        .connected(v.connected)
        .source(Source::Onboard)
        .build()
}

struct Run<'a> {
    scn: &'a Scenario,
    proj: Projection,
    vehicles: Vec<SimVehicle>,
    gateway: Gateway,
    queue: EventQueue<Delivery>,
    net_rng: ChaCha8Rng,
    events: Vec<LogEvent>,
    merging: Vec<String>,
    merged: Vec<String>,
    violations: usize,
}

impl Run<'_> {
    fn publish(&mut self, t_ms: i64, from: &str, msg: Message, position: Option<LatLon>) {
        let sent = self.gateway.publish(t_ms, from, msg.clone(), position, &mut self.net_rng, &mut self.queue);
        if sent.is_empty() {
            self.events.push(LogEvent::NoSubscriber { t_ms, from: from.to_string(), message_type: message_type(&msg) });
        }
        for s in sent {
            self.events.push(LogEvent::Sent {
                t_ms,
                from: from.to_string(),
                to: s.to.name(),
                seq: s.seq,
                delay_ms: s.delay_ms,
                message: msg.clone(),
            });
        }
    }

    /// Drains every delivery due at or before `t_ms`.
    fn deliver(&mut self, t_ms: i64, link: &mut dyn OrchestratorLink) -> Result<(), SimError> {
        while let Some((time, seq, d)) = self.queue.pop_before(t_ms + 1) {
            self.events.push(LogEvent::Delivered { t_ms: time, seq, to: d.to.name() });
            match d.to {
                Endpoint::Orchestrator => {
                    for reply in link.exchange(&d.message.to_line())? {
                        if matches!(reply, Message::Recommendation(_)) {
                            self.publish(time, "orchestrator", reply, None);
                        }
                    }
                }
                Endpoint::Vehicle(id) => {
                    if let Message::Recommendation(rec) = d.message {
                        self.receive_recommendation(time, &id, rec);
                    }
                }
            }
        }
        Ok(())
    }

    /// Accepts a recommendation that still has a future waypoint and starts
    /// tracking it; rejects it otherwise.
    fn receive_recommendation(&mut self, t_ms: i64, id: &str, rec: RecommendationMsg) {
        let Some(v) = self.vehicles.iter_mut().find(|v| v.id == id) else { return };
        let waypoints: Result<Vec<_>, _> = rec.waypoints.iter().map(|w| w.to_waypoint(&self.proj)).collect();
        let status = match waypoints {
            Ok(wps) if v.takes_recommendations() && wps.last().is_some_and(|w| w.timestamp_ms > t_ms) => {
                v.plan = Some(ActivePlan { recommendation_id: rec.recommendation_id.clone(), waypoints: wps });
                FeedbackStatus::Accept
            }
            _ => FeedbackStatus::Reject,
        };
        let fb = Message::ManeuverFeedback(ManeuverFeedback { recommendation_id: rec.recommendation_id, status });
        let from = Endpoint::Vehicle(id.to_string()).name();
        self.publish(t_ms, &from, fb, None);
    }

    fn log_truth(&mut self, t_ms: i64) {
        let scene = &self.scn.scene;
        let states = self
            .vehicles
            .iter()
            .map(|v| {
                let p = place(scene, v.position);
                TruthRecord {
                    id: v.id.clone(),
                    x: v.position.x,
                    y: v.position.y,
                    speed: v.speed,
                    accel: v.accel,
                    heading: v.heading_deg,
                    lane: lane_name(p.lane).into(),
                    station: p.station,
                    offset: p.offset,
                    length: v.length,
                    connected: v.connected,
                    plan: v.plan.as_ref().map(|p| p.recommendation_id.clone()),
                }
            })
            .collect();
        self.events.push(LogEvent::VehicleStates { t_ms, states });
    }

    /// Body overlap closer than the standstill gap, or a merge-lane vehicle
    /// running past the end of its lane.
    fn check_safety(&mut self, t_ms: i64) {
        let scene = &self.scn.scene;
        let s0 = scene.safety.standstill_gap_m;
        let placed: Vec<Placed> = self.vehicles.iter().map(|v| place(scene, v.position)).collect();
        let mut found = Vec::new();
        for i in 0..self.vehicles.len() {
            for j in i + 1..self.vehicles.len() {
                let (a, b) = (&self.vehicles[i], &self.vehicles[j]);
                let lateral = (placed[i].offset - placed[j].offset).abs() < 0.5 * (a.width + b.width);
                let gap = (placed[i].station - placed[j].station).abs() - 0.5 * (a.length + b.length);
                if lateral && gap < s0 {
                    found.push(("collision", vec![a.id.clone(), b.id.clone()]));
                }
            }
        }
        for (v, p) in self.vehicles.iter().zip(&placed) {
            if p.lane == LaneRef::Merge && p.station + 0.5 * v.length > scene.merge_zone_end_station_m {
                found.push(("ramp_end", vec![v.id.clone()]));
            }
        }
        for (kind, vehicles) in found {
            self.violations += 1;
            self.events.push(LogEvent::Violation { t_ms, kind: kind.into(), vehicles });
        }
    }

    /// A merging vehicle is done once its centroid is in the target lane and
    /// the true nearest vehicles ahead and behind leave it a safe slot.
    fn check_merges(&mut self, t_ms: i64) {
        let scene = &self.scn.scene;
        let states: Vec<VehicleState> = self.vehicles.iter().map(|v| truth_state(v, t_ms, scene, &self.proj)).collect();
        let placed: Vec<Placed> = self.vehicles.iter().map(|v| place(scene, v.position)).collect();
        for (i, v) in self.vehicles.iter().enumerate() {
            if !self.merging.contains(&v.id) || self.merged.contains(&v.id) || placed[i].lane != LaneRef::Target {
                continue;
            }
            let nearest = |ahead: bool| {
                (0..states.len())
                    .filter(|&j| j != i && placed[j].lane == LaneRef::Target)
                    .filter(|&j| (placed[j].station > placed[i].station) == ahead)
                    .min_by(|&a, &b| (placed[a].station - placed[i].station).abs().total_cmp(&(placed[b].station - placed[i].station).abs()))
            };
            let axis = scene.target_lane.axis_at(placed[i].station);
            let m = &states[i];
            let ok = match (nearest(true), nearest(false)) {
                (Some(p), Some(f)) => is_safe_slot(m, &states[p], &states[f], &scene.safety, axis).unwrap_or(false),
                (Some(p), None) => longitudinal_gap(m, &states[p], axis).is_ok_and(|g| g >= scene.safety.required_gap(m.speed)),
                (None, Some(f)) => longitudinal_gap(&states[f], m, axis).is_ok_and(|g| g >= scene.safety.required_gap(states[f].speed)),
                (None, None) => true,
            };
            if ok {
                self.merged.push(v.id.clone());
                self.events.push(LogEvent::MergeCompleted { t_ms, vehicle: v.id.clone() });
            }
        }
    }

    fn sense_and_publish(&mut self, t_ms: i64, camera: &Camera, cam_rng: &mut ChaCha8Rng, fusion: &mut Fusion) {
        let scene = &self.scn.scene;
        let onboard: Vec<VehicleState> =
            self.vehicles.iter().filter(|v| v.connected).map(|v| truth_state(v, t_ms, scene, &self.proj)).collect();
        let seen: Vec<Seen<'_>> = self
            .vehicles
            .iter()
            .map(|v| Seen { id: &v.id, position: v.position, speed: v.speed, heading_deg: v.heading_deg, length: v.length, width: v.width })
            .collect();
        let reports = camera.observe(t_ms, &seen, cam_rng);
        let fused = fusion.fuse(t_ms, &onboard, &reports);
        self.events.push(LogEvent::FusedTracks { t_ms, ids: fused.tracks.iter().map(|s| s.vehicle_id.clone()).collect() });
        for detail in fused.ambiguities {
            self.events.push(LogEvent::Ambiguity { t_ms, detail });
        }
        for track in fused.tracks {
            let ll = self.proj.unproject(track.position);
            let msg = Message::VehicleUpdate(VehicleUpdate::from_state(&track, &self.proj));
            self.publish(t_ms, "fusion", msg, Some(ll));
        }
    }

    /// Decides every vehicle's control from the same instant, then moves
    /// them all.
    fn advance(&mut self, t_ms: i64) {
        let scn = self.scn;
        let dt = scn.tick_ms as f64 / 1000.0;
        let placed: Vec<Placed> = self.vehicles.iter().map(|v| place(&scn.scene, v.position)).collect();
        let mut controls = Vec::with_capacity(self.vehicles.len());
        for (i, v) in self.vehicles.iter_mut().enumerate() {
            let me = placed[i];
            let gap = placed
                .iter()
                .enumerate()
                .filter(|&(j, p)| j != i && p.lane == me.lane && p.station > me.station)
                .map(|(j, p)| (j, p.station - me.station))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(j, ds)| ds - 0.5 * (v.length + scn.vehicles[j].length));
            let keep = lane_keeping_heading(scn.lane(me.lane), v.position);
            let safety = &scn.scene.safety;
            let control = match &v.behavior {
                Behavior::Scripted { steps } => (keep, scripted_accel(steps, t_ms)),
                Behavior::CarFollowing { desired_speed } => (keep, car_following_accel(gap, v.speed, *desired_speed, safety)),
                Behavior::AgentRecommended { desired_speed } => {
                    let cf = car_following_accel(gap, v.speed, *desired_speed, safety);
                    let tracked = v.plan.as_ref().and_then(|p| p.waypoint_for(t_ms + scn.tick_ms)).map(|w| (w.heading_deg, w.acceleration));
                    match tracked {
                        // the driver still brakes for a leader that is too close
                        Some((h, a)) => (h, if gap.is_some_and(|g| g < safety.required_gap(v.speed)) { a.min(cf) } else { a }),
                        None => {
                            v.plan = None;
                            (keep, cf)
                        }
                    }
                }
            };
            controls.push(control);
        }
        for (v, (heading, accel)) in self.vehicles.iter_mut().zip(controls) {
            vehicle_tick(v, heading, accel, dt);
        }
    }
}

/// Runs a scenario to completion. A failing orchestrator link ends the run
/// early with a partial log rather than an error.
pub fn run_scenario(scn: &Scenario, link: &mut dyn OrchestratorLink, seed: u64) -> Result<RunOutput, SimError> {
    scn.validate()?;
    let proj = Projection::new(scn.scene.origin).map_err(|e| SimError::Scenario(e.to_string()))?;
    let mut gateway = Gateway::new(scn.impairment);
    gateway.subscribe(Endpoint::Orchestrator, Interest::Area(link.boundary()));
    let vehicles: Vec<SimVehicle> = scn.vehicles.iter().map(|s| SimVehicle::from_spec(s, scn)).collect();
    for v in vehicles.iter().filter(|v| v.takes_recommendations()) {
        gateway.subscribe(Endpoint::Vehicle(v.id.clone()), Interest::Direct(v.id.clone()));
    }
    let merging: Vec<String> = scn.vehicles.iter().filter(|v| Scenario::is_merging(v)).map(|v| v.id.clone()).collect();

    let mut cam_rng = ChaCha8Rng::seed_from_u64(seed);
    cam_rng.set_stream(CAMERA_STREAM);
    let mut net_rng = ChaCha8Rng::seed_from_u64(seed);
    net_rng.set_stream(NETWORK_STREAM);
    let camera = Camera::new(scn.camera.clone());
    let mut fusion = Fusion::new(scn.scene.clone());

    let mut run = Run {
        scn,
        proj,
        vehicles,
        gateway,
        queue: EventQueue::default(),
        net_rng,
        events: vec![LogEvent::ScenarioStart { scenario: scn.id.clone(), seed, origin: scn.scene.origin, merging: merging.clone() }],
        merging,
        merged: Vec::new(),
        violations: 0,
    };

    let mut t = 0;
    let mut aborted = None;
    let reason = loop {
        if let Err(e) = run.deliver(t, link) {
            ::log::warn!("run aborted at {t} ms: {e}");
            aborted = Some(e.to_string());
            break format!("aborted: {e}");
        }
        run.log_truth(t);
        run.check_safety(t);
        run.check_merges(t);
        if run.violations > 0 {
            break "violation".to_string();
        }
        if run.merging.iter().all(|m| run.merged.contains(m)) {
            break "merged".to_string();
        }
        if t >= scn.duration_ms {
            break "duration".to_string();
        }
        run.sense_and_publish(t, &camera, &mut cam_rng, &mut fusion);
        run.advance(t);
        t += scn.tick_ms;
    };
    run.events.push(LogEvent::ScenarioEnd { t_ms: t, reason: reason.clone() });
    let not_merged = run.merging.iter().filter(|m| !run.merged.contains(m)).cloned().collect();
    let summary = RunSummary {
        scenario: scn.id.clone(),
        seed,
        end_ms: t,
        end_reason: reason,
        merged: run.merged,
        not_merged,
        violations: run.violations,
        gateway: run.gateway.counters,
        aborted,
    };
    Ok(RunOutput { events: run.events, summary, processing_ms: link.processing_ms().to_vec() })
}

/// One delivered message, reconstructed from a log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replayed {
    pub t_ms: i64,
    pub seq: u64,
    pub from: String,
    pub to: String,
    pub message: Message,
}

/// Every delivered message in delivery order.
pub fn replay(events: &[LogEvent]) -> Vec<Replayed> {
    let mut sent = std::collections::BTreeMap::new();
    let mut out = Vec::new();
    for e in events {
        match e {
            LogEvent::Sent { seq: Some(seq), from, message, .. } => {
                sent.insert(*seq, (from.clone(), message.clone()));
            }
            LogEvent::Delivered { t_ms, seq, to } => {
                if let Some((from, message)) = sent.remove(seq) {
                    out.push(Replayed { t_ms: *t_ms, seq: *seq, from, to: to.clone(), message });
                }
            }
            _ => {}
        }
    }
    out
}
