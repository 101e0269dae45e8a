//! Knowledge base: the freshest state per vehicle and the recommendations
//! issued so far.

use lmo_core::scene::Boundary;
use lmo_core::{VehicleState, Waypoint};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const DEFAULT_STALENESS_MS: i64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeStatus {
    Pending,
    Accepted,
    Rejected,
    Aborted,
    Superseded,
}

impl EnvelopeStatus {
    pub fn is_terminal(self) -> bool {
        self != EnvelopeStatus::Pending
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationEnvelope {
    pub recommendation_id: String,
    pub target_id: String,
    pub waypoints: Vec<Waypoint>,
    pub created_at_ms: i64,
    pub status: EnvelopeStatus,
}

impl RecommendationEnvelope {
    /// Moves out of `Pending`; every other status is final.
    pub fn transition(&mut self, to: EnvelopeStatus) -> Result<(), String> {
        if self.status.is_terminal() || to == EnvelopeStatus::Pending {
            return Err(format!("{} cannot go from {:?} to {:?}", self.recommendation_id, self.status, to));
        }
        self.status = to;
        Ok(())
    }
}

/// Atomic copy of the stored states.
#[derive(Debug, Clone, PartialEq)]
pub struct KbSnapshot {
    /// Write counter at the time of the copy.
    pub version: u64,
    pub states: Vec<VehicleState>,
}

impl KbSnapshot {
    pub fn get(&self, id: &str) -> Option<&VehicleState> {
        self.states.iter().find(|s| s.vehicle_id == id)
    }
}

#[derive(Debug, Default)]
struct Inner {
    version: u64,
    states: BTreeMap<String, VehicleState>,
    envelopes: BTreeMap<String, RecommendationEnvelope>,
    /// Latest envelope id per target vehicle.
    latest: BTreeMap<String, String>,
}

/// Concurrent readers, serialized writers. Every mutation bumps a version
/// counter, which lets tests line snapshots up against a sequential replay.
#[derive(Debug)]
pub struct KnowledgeBase {
    inner: RwLock<Inner>,
    staleness_ms: i64,
}

impl Default for KnowledgeBase {
    fn default() -> Self {
        Self::new(DEFAULT_STALENESS_MS)
    }
}

impl KnowledgeBase {
    pub fn new(staleness_ms: i64) -> Self {
        Self { inner: RwLock::new(Inner::default()), staleness_ms }
    }

    pub fn staleness_ms(&self) -> i64 {
        self.staleness_ms
    }

    /// Stores `state` unless an equal or newer one is already there.
    pub fn upsert(&self, state: VehicleState) -> bool {
        self.upsert_versioned(state).0
    }

    /// As `upsert`, also returning the version after the call.
    pub fn upsert_versioned(&self, state: VehicleState) -> (bool, u64) {
        let mut inner = self.inner.write();
        let newer = inner.states.get(&state.vehicle_id).is_none_or(|old| state.timestamp_ms > old.timestamp_ms);
        if newer {
            inner.version += 1;
            inner.states.insert(state.vehicle_id.clone(), state);
        }
        (newer, inner.version)
    }

    /// Drops states older than the staleness horizon relative to `now_ms`.
    pub fn sweep(&self, now_ms: i64) -> usize {
        self.sweep_versioned(now_ms).0
    }

    pub fn sweep_versioned(&self, now_ms: i64) -> (usize, u64) {
        let mut inner = self.inner.write();
        let before = inner.states.len();
        let horizon = self.staleness_ms;
        inner.states.retain(|_, s| now_ms - s.timestamp_ms <= horizon);
        let evicted = before - inner.states.len();
        if evicted > 0 {
            inner.version += 1;
        }
        (evicted, inner.version)
    }

    /// States inside `boundary` (all states when `None`), ordered by id.
    pub fn snapshot(&self, boundary: Option<&Boundary>) -> KbSnapshot {
        let inner = self.inner.read();
        let states = inner
            .states
            .values()
            .filter(|s| match (boundary, s.latlon) {
                (Some(b), Some(ll)) => b.contains(ll),
                (Some(_), None) => false,
                (None, _) => true,
            })
            .cloned()
            .collect();
        KbSnapshot { version: inner.version, states }
    }

    pub fn get(&self, id: &str) -> Option<VehicleState> {
        self.inner.read().states.get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.inner.read().states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Registers a new pending envelope; the target's previous pending one
    /// becomes superseded.
    pub fn insert_envelope(&self, env: RecommendationEnvelope) {
        let mut inner = self.inner.write();
        if let Some(prev) = inner.latest.insert(env.target_id.clone(), env.recommendation_id.clone()) {
            if let Some(old) = inner.envelopes.get_mut(&prev) {
                if old.status == EnvelopeStatus::Pending {
                    old.status = EnvelopeStatus::Superseded;
                }
            }
        }
        inner.envelopes.insert(env.recommendation_id.clone(), env);
    }

    pub fn envelope(&self, id: &str) -> Option<RecommendationEnvelope> {
        self.inner.read().envelopes.get(id).cloned()
    }

    /// The newest envelope issued for `target`, whatever its status.
    pub fn latest_envelope(&self, target: &str) -> Option<RecommendationEnvelope> {
        let inner = self.inner.read();
        inner.latest.get(target).and_then(|id| inner.envelopes.get(id)).cloned()
    }

    pub fn envelopes(&self) -> Vec<RecommendationEnvelope> {
        self.inner.read().envelopes.values().cloned().collect()
    }

    /// Applies a status change; `None` when the id is unknown.
    pub fn transition(&self, id: &str, to: EnvelopeStatus) -> Option<Result<RecommendationEnvelope, String>> {
        let mut inner = self.inner.write();
        let env = inner.envelopes.get_mut(id)?;
        Some(env.transition(to).map(|_| env.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(id: &str, t: i64) -> VehicleState {
        VehicleState::builder(id, t).speed(1.0).build()
    }

    #[test]
    fn freshest_wins() {
        let kb = KnowledgeBase::default();
        assert!(kb.upsert(st("a", 100)));
        assert!(!kb.upsert(st("a", 50)));
        assert!(!kb.upsert(st("a", 100)));
        assert_eq!(kb.get("a").unwrap().timestamp_ms, 100);
        assert_eq!(kb.len(), 1);
    }

    #[test]
    fn sweep_evicts_stale_entries() {
        let kb = KnowledgeBase::new(1000);
        kb.upsert(st("old", 0));
        kb.upsert(st("new", 1200));
        assert_eq!(kb.sweep(1500), 1);
        assert!(kb.get("old").is_none());
        assert!(kb.get("new").is_some());
        assert_eq!(kb.sweep(1500), 0);
    }

    #[test]
    fn envelope_state_machine() {
        let mut e = RecommendationEnvelope {
            recommendation_id: "r".into(),
            target_id: "m".into(),
            waypoints: vec![],
            created_at_ms: 0,
            status: EnvelopeStatus::Pending,
        };
        assert!(e.transition(EnvelopeStatus::Pending).is_err());
        e.transition(EnvelopeStatus::Accepted).unwrap();
        for to in [EnvelopeStatus::Rejected, EnvelopeStatus::Aborted, EnvelopeStatus::Superseded, EnvelopeStatus::Accepted] {
            assert!(e.transition(to).is_err());
        }
        assert_eq!(e.status, EnvelopeStatus::Accepted);
    }

    #[test]
    fn newer_envelope_supersedes_pending_only() {
        let kb = KnowledgeBase::default();
        let env = |id: &str| RecommendationEnvelope {
            recommendation_id: id.into(),
            target_id: "m".into(),
            waypoints: vec![],
            created_at_ms: 0,
            status: EnvelopeStatus::Pending,
        };
        kb.insert_envelope(env("r1"));
        kb.insert_envelope(env("r2"));
        assert_eq!(kb.envelope("r1").unwrap().status, EnvelopeStatus::Superseded);
        kb.transition("r2", EnvelopeStatus::Accepted).unwrap().unwrap();
        kb.insert_envelope(env("r3"));
        assert_eq!(kb.envelope("r2").unwrap().status, EnvelopeStatus::Accepted);
        assert_eq!(kb.latest_envelope("m").unwrap().recommendation_id, "r3");
        assert!(kb.transition("nope", EnvelopeStatus::Accepted).is_none());
    }
}
