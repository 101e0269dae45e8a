//! Transport-independent core of the orchestrator: turns inbound lines into
//! knowledge-base updates, recommendation computations and outbound lines.

use lmo_core::scene::SceneConfig;
use lmo_core::{Projection, Recommendation, VehicleState};
use lmo_learn::dqn::TrajectoryModel;
use log::{debug, info, warn};
use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::sync::atomic::{AtomicI64, AtomicU64, Ordering};
use std::sync::Arc;

use crate::checker::{check_follower_advice, check_recommendation, find_merge_scenes};
use crate::kb::{EnvelopeStatus, KnowledgeBase, RecommendationEnvelope, DEFAULT_STALENESS_MS};
use crate::wire::{
    parse_line, FeedbackStatus, ManeuverFeedback, Message, RecommendationMsg, Reject, RejectKind, TriggerRef,
    WireWaypoint,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrchestratorConfig {
    pub scene: SceneConfig,
    #[serde(default = "default_staleness")]
    pub staleness_ms: i64,
    /// Minimum spacing between computations for one target, measured on
    /// snapshot time. A rejected or aborted recommendation bypasses it once.
    #[serde(default = "default_replan")]
    pub replan_interval_ms: i64,
}

fn default_staleness() -> i64 {
    DEFAULT_STALENESS_MS
}

fn default_replan() -> i64 {
    1000
}

impl OrchestratorConfig {
    pub fn new(scene: SceneConfig) -> Self {
        Self { scene, staleness_ms: default_staleness(), replan_interval_ms: default_replan() }
    }
}

/// Where a produced line goes.
#[derive(Debug, Clone, PartialEq)]
pub enum Outbound {
    /// To every connected peer.
    Broadcast(Message),
    /// Only back to the connection the input came from.
    Reply(Message),
}

/// One entry of the service's audit trail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum AuditEvent {
    Rejected { kind: RejectKind, detail: String },
    Computed { target: String, snapshot_ms: i64, trigger: TriggerRef },
    NoRecommendation { target: String, reason: String },
    Checked { recommendation_id: String, target: String, passed: bool, reason: Option<String> },
    Emitted { recommendation_id: String, target: String },
    Feedback { recommendation_id: String, status: FeedbackStatus, outcome: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub lines: u64,
    pub vehicle_updates: u64,
    pub out_of_order_dropped: u64,
    pub rejected: BTreeMap<String, u64>,
    pub evicted: u64,
    pub computations: u64,
    pub check_failures: u64,
    pub emitted: u64,
    pub feedback_unknown: u64,
    pub connection_errors: u64,
}

impl Stats {
    pub fn rejected_total(&self) -> u64 {
        self.rejected.values().sum()
    }
}

#[derive(Debug, Default)]
struct Flight {
    in_flight: bool,
    queued: Option<TriggerRef>,
    last_snapshot_ms: Option<i64>,
    /// Set by reject/abort feedback; the next computation skips the replan
    /// spacing.
    recalc: bool,
}

pub struct Orchestrator {
    cfg: OrchestratorConfig,
    proj: Projection,
    kb: KnowledgeBase,
    model: Option<Arc<dyn TrajectoryModel>>,
    flights: Mutex<BTreeMap<String, Flight>>,
    busy: Mutex<usize>,
    idle: Condvar,
    clock_ms: AtomicI64,
    next_id: AtomicU64,
    stats: Mutex<Stats>,
    audit: Mutex<Vec<AuditEvent>>,
    audit_sink: Option<Mutex<std::io::BufWriter<std::fs::File>>>,
}

impl Orchestrator {
    pub fn new(cfg: OrchestratorConfig, model: Option<Arc<dyn TrajectoryModel>>) -> Result<Self, lmo_core::GeoError> {
        let proj = Projection::new(cfg.scene.origin)?;
        Ok(Self {
            kb: KnowledgeBase::new(cfg.staleness_ms),
            cfg,
            proj,
            model,
            flights: Mutex::new(BTreeMap::new()),
            busy: Mutex::new(0),
            idle: Condvar::new(),
            clock_ms: AtomicI64::new(i64::MIN),
            next_id: AtomicU64::new(1),
            stats: Mutex::new(Stats::default()),
            audit: Mutex::new(Vec::new()),
            audit_sink: None,
        })
    }

    /// Also appends every audit event to `path` as NDJSON.
    pub fn with_audit_file(mut self, path: &std::path::Path) -> std::io::Result<Self> {
        self.audit_sink = Some(Mutex::new(std::io::BufWriter::new(std::fs::File::create(path)?)));
        Ok(self)
    }

    pub fn config(&self) -> &OrchestratorConfig {
        &self.cfg
    }

    pub fn projection(&self) -> &Projection {
        &self.proj
    }

    pub fn kb(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn stats(&self) -> Stats {
        self.stats.lock().clone()
    }

    pub fn audit(&self) -> Vec<AuditEvent> {
        self.audit.lock().clone()
    }

    pub fn subscription_request(&self) -> Message {
        Message::SubscriptionRequest { boundary: self.cfg.scene.boundary }
    }

    fn record(&self, ev: AuditEvent) {
        if let Some(sink) = &self.audit_sink {
            let mut w = sink.lock();
            let ok = serde_json::to_writer(&mut *w, &ev).is_ok() && w.write_all(b"\n").is_ok() && w.flush().is_ok();
            if !ok {
                warn!("audit log write failed");
            }
        }
        self.audit.lock().push(ev);
    }

    /// Counts a line that could not be read at all (e.g. invalid UTF-8).
    pub fn reject_raw(&self, kind: RejectKind, detail: String) {
        self.reject(Reject { kind, detail });
    }

    pub fn note_connection_error(&self, why: &str) {
        warn!("connection error: {why}");
        self.stats.lock().connection_errors += 1;
    }

    fn reject(&self, r: Reject) {
        debug!("rejected line ({}): {}", r.kind.name(), r.detail);
        *self.stats.lock().rejected.entry(r.kind.name().to_string()).or_insert(0) += 1;
        self.record(AuditEvent::Rejected { kind: r.kind, detail: r.detail });
    }

    /// Processes one inbound line. Never panics on bad input.
    pub fn handle_line(&self, line: &str) -> Vec<Outbound> {
        self.stats.lock().lines += 1;
        let msg = match parse_line(line) {
            Ok(m) => m,
            Err(r) => {
                self.reject(r);
                return Vec::new();
            }
        };
        match msg {
            Message::VehicleUpdate(u) => match u.to_state(&self.proj) {
                Ok(st) => self.ingest(st),
                Err(detail) => {
                    self.reject(Reject { kind: RejectKind::Validation, detail });
                    Vec::new()
                }
            },
            Message::ManeuverFeedback(fb) => self.handle_feedback(&fb),
            Message::Sync { token } => {
                self.wait_idle();
                vec![Outbound::Reply(Message::SyncAck { token })]
            }
            Message::SubscriptionAck { .. } => Vec::new(),
            other => {
                let ty = serde_json::to_value(&other).ok().and_then(|v| v["type"].as_str().map(String::from));
                self.reject(Reject { kind: RejectKind::Validation, detail: format!("{ty:?} is outbound only") });
                Vec::new()
            }
        }
    }

    /// Stores a validated state and runs mediation for it.
    pub fn ingest(&self, st: VehicleState) -> Vec<Outbound> {
        self.stats.lock().vehicle_updates += 1;
        let trigger = TriggerRef { uuid: st.vehicle_id.clone(), timestamp_ms: st.timestamp_ms };
        let now = self.clock_ms.fetch_max(st.timestamp_ms, Ordering::SeqCst).max(st.timestamp_ms);
        if !self.kb.upsert(st) {
            self.stats.lock().out_of_order_dropped += 1;
            return Vec::new();
        }
        let evicted = self.kb.sweep(now);
        if evicted > 0 {
            self.stats.lock().evicted += evicted as u64;
        }
        self.mediate(&trigger)
    }

    /// Requests a computation for every merge scene the triggering vehicle
    /// takes part in.
    pub fn mediate(&self, trigger: &TriggerRef) -> Vec<Outbound> {
        let snap = self.kb.snapshot(Some(&self.cfg.scene.boundary));
        let mut targets: Vec<String> = find_merge_scenes(&snap.states, &self.cfg.scene)
            .into_iter()
            .filter(|s| {
                let involved = |v: &Option<VehicleState>| v.as_ref().is_some_and(|v| v.vehicle_id == trigger.uuid);
                s.merging.vehicle_id == trigger.uuid || involved(&s.preceding) || involved(&s.following)
            })
            .map(|s| s.merging.vehicle_id)
            .collect();
        targets.dedup();
        targets.into_iter().flat_map(|t| self.request(&t, trigger.clone())).collect()
    }

    /// Single flight per target: a trigger arriving while the target is
    /// being computed replaces any queued one and is picked up by the
    /// computing thread when it finishes.
    fn request(&self, target: &str, trigger: TriggerRef) -> Vec<Outbound> {
        {
            let mut flights = self.flights.lock();
            let f = flights.entry(target.to_string()).or_default();
            if f.in_flight {
                f.queued = Some(trigger);
                return Vec::new();
            }
            f.in_flight = true;
            *self.busy.lock() += 1;
        }
        let mut out = Vec::new();
        let mut trigger = trigger;
        loop {
            out.extend(self.compute(target, &trigger));
            let mut flights = self.flights.lock();
            let f = flights.get_mut(target).expect("flight registered above");
            match f.queued.take() {
                Some(next) => trigger = next,
                None => {
                    f.in_flight = false;
                    break;
                }
            }
        }
        let mut busy = self.busy.lock();
        *busy -= 1;
        if *busy == 0 {
            self.idle.notify_all();
        }
        out
    }

    /// Blocks until no computation is running.
    pub fn wait_idle(&self) {
        let mut busy = self.busy.lock();
        while *busy > 0 {
            self.idle.wait(&mut busy);
        }
    }

    fn compute(&self, target: &str, trigger: &TriggerRef) -> Vec<Outbound> {
        let kb_snap = self.kb.snapshot(Some(&self.cfg.scene.boundary));
        let Some(snap) = find_merge_scenes(&kb_snap.states, &self.cfg.scene)
            .into_iter()
            .find(|s| s.merging.vehicle_id == target)
        else {
            return Vec::new();
        };
        let snapshot_ms = [Some(&snap.merging), snap.preceding.as_ref(), snap.following.as_ref()]
            .into_iter()
            .flatten()
            .map(|s| s.timestamp_ms)
            .max()
            .unwrap_or(snap.merging.timestamp_ms);
        {
            let mut flights = self.flights.lock();
            let f = flights.entry(target.to_string()).or_default();
            if f.last_snapshot_ms.is_some_and(|last| snapshot_ms <= last) {
                return Vec::new();
            }
            if !f.recalc {
                if let Some(prev) = self.kb.latest_envelope(target) {
                    if snapshot_ms - prev.created_at_ms < self.cfg.replan_interval_ms {
                        return Vec::new();
                    }
                }
            }
            f.recalc = false;
            f.last_snapshot_ms = Some(snapshot_ms);
        }
        let Some(model) = &self.model else {
            warn!("no trajectory model loaded; nothing computed for {target}");
            return Vec::new();
        };
        self.stats.lock().computations += 1;
        self.record(AuditEvent::Computed { target: target.to_string(), snapshot_ms, trigger: trigger.clone() });
        let set = match model.recommend(&snap, &self.cfg.scene, self.cfg.scene.horizon_ticks) {
            Ok(set) => set,
            Err(why) => {
                self.record(AuditEvent::NoRecommendation { target: target.to_string(), reason: why.reason() });
                return Vec::new();
            }
        };
        let mut out = Vec::new();
        let verdict = check_recommendation(&set.merging, &snap, &self.cfg.scene);
        if !self.checked_emit(&set.merging, verdict, snapshot_ms, trigger, &mut out) {
            return out;
        }
        if let Some(advice) = &set.following {
            self.checked_emit(advice, check_follower_advice(advice), snapshot_ms, trigger, &mut out);
        }
        out
    }

    fn checked_emit(
        &self,
        rec: &Recommendation,
        verdict: Result<(), crate::checker::CheckFailure>,
        created_at_ms: i64,
        trigger: &TriggerRef,
        out: &mut Vec<Outbound>,
    ) -> bool {
        let id = format!("rec-{}", self.next_id.fetch_add(1, Ordering::SeqCst));
        let passed = verdict.is_ok();
        self.record(AuditEvent::Checked {
            recommendation_id: id.clone(),
            target: rec.target_id.clone(),
            passed,
            reason: verdict.err().map(|f| f.name().to_string()),
        });
        if !passed {
            self.stats.lock().check_failures += 1;
            return false;
        }
        self.kb.insert_envelope(RecommendationEnvelope {
            recommendation_id: id.clone(),
            target_id: rec.target_id.clone(),
            waypoints: rec.waypoints.clone(),
            created_at_ms,
            status: EnvelopeStatus::Pending,
        });
        let msg = RecommendationMsg {
            recommendation_id: id.clone(),
            target_uuid: rec.target_id.clone(),
            waypoints: rec.waypoints.iter().map(|w| WireWaypoint::from_waypoint(w, &self.proj)).collect(),
            trigger: Some(trigger.clone()),
        };
        self.stats.lock().emitted += 1;
        self.record(AuditEvent::Emitted { recommendation_id: id, target: rec.target_id.clone() });
        out.push(Outbound::Broadcast(Message::Recommendation(msg)));
        true
    }

    /// Accept finalizes the envelope. Reject or abort finalizes it and lets
    /// the next computation for that target skip the replan spacing, once.
    pub fn handle_feedback(&self, fb: &ManeuverFeedback) -> Vec<Outbound> {
        let to = match fb.status {
            FeedbackStatus::Accept => EnvelopeStatus::Accepted,
            FeedbackStatus::Reject => EnvelopeStatus::Rejected,
            FeedbackStatus::Abort => EnvelopeStatus::Aborted,
        };
        let audit = |outcome: &str| AuditEvent::Feedback {
            recommendation_id: fb.recommendation_id.clone(),
            status: fb.status,
            outcome: outcome.to_string(),
        };
        match self.kb.transition(&fb.recommendation_id, to) {
            None => {
                info!("feedback for unknown recommendation {}", fb.recommendation_id);
                self.stats.lock().feedback_unknown += 1;
                self.record(audit("unknown_id"));
                Vec::new()
            }
            Some(Err(why)) => {
                debug!("ignored feedback: {why}");
                self.record(audit("invalid_transition"));
                Vec::new()
            }
            Some(Ok(env)) => {
                self.record(audit("applied"));
                if to == EnvelopeStatus::Accepted {
                    return Vec::new();
                }
                self.flights.lock().entry(env.target_id.clone()).or_default().recalc = true;
                let trigger = match self.kb.get(&env.target_id) {
                    Some(st) => TriggerRef { uuid: st.vehicle_id, timestamp_ms: st.timestamp_ms },
                    None => return Vec::new(),
                };
                self.request(&env.target_id, trigger)
            }
        }
    }
}
