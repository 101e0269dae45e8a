mod common;

use common::*;
use lmo_orchestrator::wire::{FeedbackStatus, ManeuverFeedback};
use lmo_orchestrator::*;
use std::sync::Arc;
use std::time::Duration;

fn orchestrator(model: StubModel, replan_ms: i64) -> Arc<Orchestrator> {
    let cfg = OrchestratorConfig { replan_interval_ms: replan_ms, ..OrchestratorConfig::new(scene()) };
    Arc::new(Orchestrator::new(cfg, Some(Arc::new(model))).unwrap())
}

fn recommendations(out: &[Outbound]) -> Vec<wire::RecommendationMsg> {
    out.iter()
        .filter_map(|o| match o {
            Outbound::Broadcast(Message::Recommendation(r)) => Some(r.clone()),
            _ => None,
        })
        .collect()
}

/// F at 100, M on the ramp at 110, P at 140, all at 10 m/s.
fn feed_scene(o: &Orchestrator, t: i64) -> Vec<Outbound> {
    let mut out = o.handle_line(&update_line(&vehicle("f", t, 0.0, 100.0, 10.0)));
    out.extend(o.handle_line(&update_line(&vehicle("p", t, 0.0, 140.0, 10.0))));
    out.extend(o.handle_line(&update_line(&vehicle("m", t, 3.7, 110.0, 10.0))));
    out
}

#[test]
fn no_scene_no_recommendation() {
    let o = orchestrator(StubModel::default(), 1000);
    let out = o.handle_line(&update_line(&vehicle("lonely", 0, 0.0, 50.0, 10.0)));
    assert!(out.is_empty());
    assert_eq!(o.kb().len(), 1);
    assert_eq!(o.stats().computations, 0);
}

#[test]
fn completing_scene_emits_pending_envelope() {
    let o = orchestrator(StubModel::default(), 1000);
    let recs = recommendations(&feed_scene(&o, 100));
    assert_eq!(recs.len(), 1);
    let r = &recs[0];
    assert_eq!(r.target_uuid, "m");
    assert_eq!(r.trigger.as_ref().unwrap().uuid, "m");
    assert_eq!(o.kb().envelope(&r.recommendation_id).unwrap().status, EnvelopeStatus::Pending);
    // the wire waypoint is the stub's waypoint after the round trip
    let wp = r.waypoints[0].to_waypoint(o.projection()).unwrap();
    assert!((wp.position.y - 130.0).abs() < 1e-6);
}

#[test]
fn replan_spacing_and_feedback() {
    let o = orchestrator(StubModel::default(), 1000);
    let first = recommendations(&feed_scene(&o, 100)).remove(0);
    // within the spacing nothing new is computed
    assert!(recommendations(&feed_scene(&o, 200)).is_empty());

    let accept = ManeuverFeedback { recommendation_id: first.recommendation_id.clone(), status: FeedbackStatus::Accept };
    assert!(o.handle_feedback(&accept).is_empty());
    assert_eq!(o.kb().envelope(&first.recommendation_id).unwrap().status, EnvelopeStatus::Accepted);
    // a second verdict on a final envelope changes nothing
    let reject = ManeuverFeedback { status: FeedbackStatus::Reject, ..accept.clone() };
    o.handle_feedback(&reject);
    assert_eq!(o.kb().envelope(&first.recommendation_id).unwrap().status, EnvelopeStatus::Accepted);

    // unknown id: no state change
    let before = o.kb().envelopes();
    let unknown = ManeuverFeedback { recommendation_id: "rec-999".into(), status: FeedbackStatus::Accept };
    assert!(o.handle_feedback(&unknown).is_empty());
    assert_eq!(o.kb().envelopes(), before);
    assert_eq!(o.stats().feedback_unknown, 1);

    // spacing elapsed: new recommendation
    let second = recommendations(&feed_scene(&o, 1200)).remove(0);
    // reject: final status plus exactly one recalculation, which runs as soon
    // as a newer snapshot exists even inside the spacing
    let reject = ManeuverFeedback { recommendation_id: second.recommendation_id.clone(), status: FeedbackStatus::Reject };
    assert!(o.handle_feedback(&reject).is_empty(), "snapshot unchanged, recalculation waits");
    assert_eq!(o.kb().envelope(&second.recommendation_id).unwrap().status, EnvelopeStatus::Rejected);
    let third = recommendations(&feed_scene(&o, 1300));
    assert_eq!(third.len(), 1);
    assert!(recommendations(&feed_scene(&o, 1400)).is_empty(), "only one recalculation");
    assert_eq!(o.kb().envelope(&third[0].recommendation_id).unwrap().status, EnvelopeStatus::Pending);
}

#[test]
fn abort_recalculates_immediately_when_newer_state_exists() {
    let o = orchestrator(StubModel::default(), 1000);
    let first = recommendations(&feed_scene(&o, 100)).remove(0);
    feed_scene(&o, 200);
    let abort = ManeuverFeedback { recommendation_id: first.recommendation_id.clone(), status: FeedbackStatus::Abort };
    assert_eq!(recommendations(&o.handle_feedback(&abort)).len(), 1);
    assert_eq!(o.kb().envelope(&first.recommendation_id).unwrap().status, EnvelopeStatus::Aborted);
}

#[test]
fn failing_check_is_not_emitted() {
    let o = orchestrator(StubModel { accel: 6.0, ..Default::default() }, 1000);
    assert!(recommendations(&feed_scene(&o, 100)).is_empty());
    assert_eq!(o.stats().check_failures, 1);
    let audit = o.audit();
    assert!(audit.iter().any(|e| matches!(e, AuditEvent::Checked { passed: false, reason: Some(r), .. } if r == "accel_bound")));
    assert!(!audit.iter().any(|e| matches!(e, AuditEvent::Emitted { .. })));
}

#[test]
fn coalesced_snapshots_are_strictly_increasing() {
    let o = orchestrator(StubModel { delay: Duration::from_millis(40), ..Default::default() }, 0);
    for id in ["f", "p"] {
        o.handle_line(&update_line(&vehicle(id, 0, 0.0, if id == "f" { 100.0 } else { 140.0 }, 10.0)));
    }
    let handles: Vec<_> = (1..=6)
        .map(|k| {
            let o = o.clone();
            std::thread::spawn(move || {
                std::thread::sleep(Duration::from_millis(5 * k as u64));
                o.handle_line(&update_line(&vehicle("m", 100 * k, 3.7, 110.0 + k as f64, 10.0)))
            })
        })
        .collect();
    let emitted: usize = handles.into_iter().map(|h| recommendations(&h.join().unwrap()).len()).sum();
    o.wait_idle();
    let snaps: Vec<i64> = o
        .audit()
        .iter()
        .filter_map(|e| match e {
            AuditEvent::Computed { target, snapshot_ms, .. } if target == "m" => Some(*snapshot_ms),
            _ => None,
        })
        .collect();
    assert!(!snaps.is_empty());
    assert!(snaps.windows(2).all(|w| w[0] < w[1]), "{snaps:?}");
    // queued triggers collapse: fewer computations than updates
    assert!(snaps.len() < 6, "{snaps:?}");
    assert_eq!(emitted, snaps.len());
}

#[test]
fn checked_and_emitted_are_a_bijection() {
    let o = orchestrator(StubModel::default(), 300);
    for k in 0..20 {
        feed_scene(&o, 100 * k);
    }
    let audit = o.audit();
    let passed: Vec<&String> = audit
        .iter()
        .filter_map(|e| match e {
            AuditEvent::Checked { recommendation_id, passed: true, .. } => Some(recommendation_id),
            _ => None,
        })
        .collect();
    let emitted: Vec<&String> = audit
        .iter()
        .filter_map(|e| match e {
            AuditEvent::Emitted { recommendation_id, .. } => Some(recommendation_id),
            _ => None,
        })
        .collect();
    assert!(passed.len() > 1);
    assert_eq!(passed, emitted);
}
