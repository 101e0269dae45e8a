use lmo_core::{LatLon, Projection, Vec2};
use lmo_kpi::{compute_maneuver, compute_rtt, kpi_records, report, KpiKind, ReportInputs};
use lmo_learn::dqn::{RewardRecord, RewardVariant};
use lmo_orchestrator::wire::{
    FeedbackStatus, ManeuverFeedback, Message, RecommendationMsg, TriggerRef, VehicleUpdate, WireSource, WireWaypoint,
};
use lmo_sim::log::{LogEvent, TruthRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ORIGIN: LatLon = LatLon { lat: 37.0, lon: -122.0 };

fn update(uuid: &str, ts: i64) -> Message {
    Message::VehicleUpdate(VehicleUpdate {
        uuid: uuid.into(),
        timestamp_ms: ts,
        lat: 37.0,
        lon: -122.0,
        speed_mps: 10.0,
        acceleration_mps2: 0.0,
        heading_deg: 0.0,
        lane_id: 1,
        length_m: 4.5,
        width_m: 1.8,
        connected: true,
        source: WireSource::Obu,
    })
}

fn rec(id: &str, target: &str, trigger_ts: i64, accels: &[f64]) -> Message {
    Message::Recommendation(RecommendationMsg {
        recommendation_id: id.into(),
        target_uuid: target.into(),
        waypoints: accels
            .iter()
            .enumerate()
            .map(|(i, &a)| WireWaypoint {
                timestamp_ms: trigger_ts + 100 * (i as i64 + 1),
                lat: 37.0 + 1e-6 * i as f64,
                lon: -122.0,
                speed_mps: 10.0,
                acceleration_mps2: a,
                heading_deg: 0.0,
            })
            .collect(),
        trigger: Some(TriggerRef { uuid: target.into(), timestamp_ms: trigger_ts }),
    })
}

fn feedback(id: &str) -> Message {
    Message::ManeuverFeedback(ManeuverFeedback { recommendation_id: id.into(), status: FeedbackStatus::Accept })
}

fn sent(t_ms: i64, from: &str, to: &str, seq: u64, delay: i64, message: Message) -> LogEvent {
    LogEvent::Sent { t_ms, from: from.into(), to: to.into(), seq: Some(seq), delay_ms: Some(delay), message }
}

fn delivered(t_ms: i64, seq: u64, to: &str) -> LogEvent {
    LogEvent::Delivered { t_ms, seq, to: to.into() }
}

fn truth(id: &str, x: f64, y: f64, lane: &str, accel: f64) -> TruthRecord {
    TruthRecord {
        id: id.into(),
        x,
        y,
        speed: 10.0,
        accel,
        heading: 0.0,
        lane: lane.into(),
        station: y,
        offset: x,
        length: 4.0,
        connected: true,
        plan: None,
    }
}

fn start() -> LogEvent {
    LogEvent::ScenarioStart { scenario: "fixture".into(), seed: 1, origin: ORIGIN, merging: vec!["M".into()] }
}

/// Update up, recommendation down, feedback up, each with its own delay.
fn exchange(events: &mut Vec<LogEvent>, seq: &mut u64, id: &str, t0: i64, delays: [i64; 3], accels: &[f64]) {
    let [up, down, back] = delays;
    *seq += 3;
    let (s1, s2, s3) = (*seq - 2, *seq - 1, *seq);
    events.push(sent(t0, "vehicle:M", "orchestrator", s1, up, update("M", t0)));
    events.push(delivered(t0 + up, s1, "orchestrator"));
    events.push(sent(t0 + up, "orchestrator", "vehicle:M", s2, down, rec(id, "M", t0, accels)));
    events.push(delivered(t0 + up + down, s2, "vehicle:M"));
    events.push(sent(t0 + up + down, "vehicle:M", "orchestrator", s3, back, feedback(id)));
    events.push(delivered(t0 + up + down + back, s3, "orchestrator"));
}

#[test]
fn rtt_from_trigger_receipt_to_feedback_receipt() {
    let mut ev = vec![start()];
    let mut seq = 0;
    exchange(&mut ev, &mut seq, "rec-1", 0, [0, 20, 25], &[1.0]);
    let r = compute_rtt(&ev);
    assert_eq!(r.samples.len(), 1);
    assert_eq!(r.samples[0].trigger_received_ms, 0);
    assert_eq!(r.samples[0].feedback_received_ms, 45);
    assert_eq!(r.samples[0].rtt_ms, 45);
    assert!(r.unmatched.is_empty());
}

#[test]
fn recommendation_without_feedback_is_unmatched() {
    let mut ev = vec![start()];
    let mut seq = 0;
    exchange(&mut ev, &mut seq, "rec-1", 0, [20, 20, 20], &[1.0]);
    ev.push(sent(500, "vehicle:M", "orchestrator", 10, 20, update("M", 500)));
    ev.push(delivered(520, 10, "orchestrator"));
    ev.push(sent(520, "orchestrator", "vehicle:M", 11, 20, rec("rec-2", "M", 500, &[1.0])));
    let r = compute_rtt(&ev);
    assert_eq!(r.samples.iter().map(|s| s.recommendation_id.as_str()).collect::<Vec<_>>(), ["rec-1"]);
    assert_eq!(r.unmatched, ["rec-2"]);
}

#[test]
fn twenty_ms_each_way_gives_forty_plus_jitter() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut ev = vec![start()];
    let mut seq = 0;
    for k in 0..50 {
        let mut d = || 20 + rng.random_range(-5..=5);
        exchange(&mut ev, &mut seq, &format!("rec-{k}"), 1000 * k, [d(), d(), d()], &[1.0]);
    }
    let r = compute_rtt(&ev);
    assert_eq!(r.samples.len(), 50);
    for s in &r.samples {
        assert!((s.rtt_ms - 40).abs() <= 10, "{s:?}");
        assert_eq!(s.rtt_ms, s.injected_ms);
        assert!(s.rtt_ms >= 0);
    }
}

fn ticks(ev: &mut Vec<LogEvent>, from: i64, to: i64, lane_at: impl Fn(i64) -> &'static str) {
    for t in (from..=to).step_by(100) {
        let y = 10.0 * t as f64 / 1000.0;
        ev.push(LogEvent::VehicleStates {
            t_ms: t,
            states: vec![
                truth("F", 0.0, y - 12.0, "target", 0.0),
                truth("M", if lane_at(t) == "target" { 0.5 } else { 3.7 }, y, lane_at(t), 0.8),
                truth("P", 0.0, y + 15.0, "target", 0.0),
            ],
        });
    }
}

#[test]
fn maneuver_that_completes_after_five_seconds() {
    let mut ev = vec![start()];
    ticks(&mut ev, 0, 900, |_| "merge");
    ev.push(sent(1000, "orchestrator", "vehicle:M", 1, 20, rec("rec-1", "M", 980, &[1.0])));
    ticks(&mut ev, 1000, 6000, |t| if t >= 6000 { "target" } else { "merge" });
    ev.push(LogEvent::MergeCompleted { t_ms: 6000, vehicle: "M".into() });
    let m = compute_maneuver(&ev, "M").unwrap();
    assert!(m.completed);
    assert_eq!((m.start_ms, m.end_ms), (1000, 6000));
    assert_eq!(m.length_s, 5.0);
    assert_eq!(m.preceding.as_deref(), Some("P"));
    assert_eq!(m.following.as_deref(), Some("F"));
    assert_eq!(m.min_gap_preceding_m, Some(11.0));
    assert_eq!(m.min_gap_following_m, Some(8.0));
}

#[test]
fn maneuver_that_never_completes_runs_to_log_end() {
    let mut ev = vec![start()];
    ev.push(sent(200, "orchestrator", "vehicle:M", 1, 20, rec("rec-1", "M", 180, &[1.0])));
    ticks(&mut ev, 0, 3000, |_| "merge");
    let m = compute_maneuver(&ev, "M").unwrap();
    assert!(!m.completed);
    assert_eq!(m.end_ms, 3000);
    assert!((m.length_s - 2.8).abs() < 1e-12);
    assert!(compute_maneuver(&ev, "P").is_none());
}

#[test]
fn maneuver_length_sums_tick_displacements() {
    let mut ev = vec![start()];
    ev.push(sent(0, "orchestrator", "vehicle:M", 1, 20, rec("rec-1", "M", 0, &[1.0])));
    for (t, (x, y)) in [(0, (0.0, 0.0)), (100, (3.0, 4.0)), (200, (3.0, 10.0))] {
        ev.push(LogEvent::VehicleStates { t_ms: t, states: vec![truth("M", x, y, "merge", 0.0)] });
    }
    let m = compute_maneuver(&ev, "M").unwrap();
    assert_eq!(m.length_m, 11.0);
    assert_eq!(m.length_s, 0.2);
}

fn full_fixture() -> Vec<LogEvent> {
    let mut ev = vec![start()];
    ticks(&mut ev, 0, 400, |_| "merge");
    let mut seq = 0;
    exchange(&mut ev, &mut seq, "rec-1", 500, [20, 22, 18], &[0.5, 1.5, 3.0, -1.0]);
    ticks(&mut ev, 500, 1500, |t| if t >= 1500 { "target" } else { "merge" });
    ev.push(LogEvent::MergeCompleted { t_ms: 1500, vehicle: "M".into() });
    ev.push(LogEvent::ScenarioEnd { t_ms: 1500, reason: "merged".into() });
    ev
}

fn rewards() -> Vec<RewardRecord> {
    (0..40)
        .map(|i| RewardRecord {
            step: i,
            episode: i / 10,
            variant: if i % 2 == 0 { RewardVariant::Positive } else { RewardVariant::Negative },
            reward: if i % 2 == 0 { (i as f64 / 40.0).min(1.0) } else { -(i as f64) / 40.0 },
        })
        .collect()
}

#[test]
fn report_is_deterministic_and_complete() {
    let inputs = ReportInputs { log: Some(full_fixture()), rewards: Some(rewards()) };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let sa = report(&inputs, a.path()).unwrap();
    let sb = report(&inputs, b.path()).unwrap();
    assert_eq!(sa, sb);
    assert!(sa.notes.is_empty(), "{:?}", sa.notes);
    let expected = [
        "accel_ecdf.csv",
        "recommended_accel_ecdf.csv",
        "rtt.csv",
        "maneuver.csv",
        "trajectory_overlay.csv",
        "kpi_records.csv",
        "reward_histogram.csv",
        "summary.json",
    ];
    assert_eq!(sa.files, expected);
    for f in expected {
        let (x, y) = (std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
        assert_eq!(x, y, "{f}");
    }
    assert_eq!(sa.headline.recommended_accel_in_0_2, Some(0.5));
    assert_eq!(sa.headline.recommended_abs_accel_in_0_2, Some(0.75));
    assert_eq!(sa.headline.executed_abs_accel_in_0_2, Some(1.0));
    assert_eq!(sa.headline.rtt_samples, 1);
    assert_eq!(sa.headline.rtt_mean_ms, Some(40.0));
    assert_eq!(sa.headline.merges_completed, 1);
    let rtt = std::fs::read_to_string(a.path().join("rtt.csv")).unwrap();
    assert!(rtt.starts_with("recommendation_id,target,"));
    assert!(rtt.contains("rec-1,M,M,500,520,560,40,40,matched"), "{rtt}");
    let summary: lmo_kpi::ReportSummary = serde_json::from_slice(&std::fs::read(a.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary, sa);
}

#[test]
fn overlay_has_executed_and_recommended_rows() {
    let ev = full_fixture();
    let dir = tempfile::tempdir().unwrap();
    report(&ReportInputs { log: Some(ev.clone()), rewards: None }, dir.path()).unwrap();
    let mut rdr = csv::Reader::from_path(dir.path().join("trajectory_overlay.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["role", "vehicle", "recommendation_id", "t_ms", "lat_deg", "lon_deg"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    let executed = rows.iter().filter(|r| &r[0] == "executed").count();
    let recommended = rows.iter().filter(|r| &r[0] == "recommended").count();
    let m_ticks = ev.iter().filter(|e| matches!(e, LogEvent::VehicleStates { .. })).count();
    assert_eq!(executed, m_ticks);
    assert_eq!(recommended, 4);
    assert_eq!(rows.len(), executed + recommended);
    // executed lat/lon come from the log's projection origin
    let proj = Projection::new(ORIGIN).unwrap();
    let first = rows.iter().find(|r| &r[0] == "executed").unwrap();
    let back = proj.project(LatLon::new(first[4].parse().unwrap(), first[5].parse().unwrap())).unwrap();
    assert!((back - Vec2::new(3.7, 0.0)).norm() < 1e-6);
}

#[test]
fn missing_or_empty_inputs_leave_notes() {
    let dir = tempfile::tempdir().unwrap();
    let s = report(&ReportInputs::default(), dir.path()).unwrap();
    assert_eq!(s.files, ["summary.json"]);
    assert_eq!(s.notes.len(), 2);

    let dir = tempfile::tempdir().unwrap();
    let s = report(&ReportInputs { log: Some(vec![]), rewards: Some(vec![]) }, dir.path()).unwrap();
    assert_eq!(s.files, ["summary.json"]);
    assert!(s.notes.iter().any(|n| n.contains("no vehicle states")));
    assert!(s.notes.iter().any(|n| n.contains("reward log is empty")));
    assert_eq!(s.headline.recommended_accel_in_0_2, None);
}

#[test]
fn kpi_records_cover_every_kind() {
    let recs = kpi_records(&full_fixture());
    for kind in [KpiKind::RttMs, KpiKind::InterVehicleDistanceM, KpiKind::AccelMps2, KpiKind::ManeuverLengthS, KpiKind::ManeuverLengthM] {
        assert!(recs.iter().any(|r| r.kind == kind), "{kind:?}");
    }
    assert!(recs.iter().all(|r| r.scenario_id == "fixture"));
    let len = recs.iter().find(|r| r.kind == KpiKind::ManeuverLengthS).unwrap();
    assert!((len.value - 0.98).abs() < 1e-12);
}
