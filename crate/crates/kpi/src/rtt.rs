//! Recommendation round-trip time: from the moment the orchestrator received
//! the vehicle update that triggered a computation, to the moment it received
//! the target vehicle's feedback. Two network hops are inside that span
//! (recommendation down, feedback up) plus the orchestrator's processing.

use lmo_orchestrator::wire::Message;
use lmo_sim::log::LogEvent;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RttSample {
    pub recommendation_id: String,
    pub target: String,
    pub trigger_uuid: String,
    pub trigger_sent_ms: i64,
    pub trigger_received_ms: i64,
    pub feedback_received_ms: i64,
    pub rtt_ms: i64,
    /// Sum of the network delays drawn for the two hops.
    pub injected_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RttReport {
    /// Ordered by recommendation id as first emitted.
    pub samples: Vec<RttSample>,
    /// Recommendations with no feedback received, or no trigger on record.
    pub unmatched: Vec<String>,
}

struct Rec {
    target: String,
    trigger: Option<(String, i64)>,
    down_delay: Option<i64>,
}

pub fn compute_rtt(events: &[LogEvent]) -> RttReport {
    // (uuid, timestamp) -> (send time, seq) of the update copy to the orchestrator
    let mut updates: BTreeMap<(String, i64), (i64, u64)> = BTreeMap::new();
    let mut update_seq: BTreeMap<u64, i64> = BTreeMap::new();
    let mut recs: Vec<(String, Rec)> = Vec::new();
    // feedback seq -> (recommendation id, delay)
    let mut feedback_seq: BTreeMap<u64, (String, i64)> = BTreeMap::new();
    let mut received: BTreeMap<String, (i64, i64)> = BTreeMap::new();

    for e in events {
        match e {
            LogEvent::Sent { t_ms, to, seq, delay_ms, message, .. } => match message {
                Message::VehicleUpdate(u) if to == "orchestrator" => {
                    if let Some(s) = seq {
                        updates.entry((u.uuid.clone(), u.timestamp_ms)).or_insert((*t_ms, *s));
                    }
                }
                Message::Recommendation(r) => {
                    let idx = match recs.iter().position(|(id, _)| id == &r.recommendation_id) {
                        Some(i) => i,
                        None => {
                            let trigger = r.trigger.as_ref().map(|t| (t.uuid.clone(), t.timestamp_ms));
                            recs.push((r.recommendation_id.clone(), Rec { target: r.target_uuid.clone(), trigger, down_delay: None }));
                            recs.len() - 1
                        }
                    };
                    if to == &format!("vehicle:{}", r.target_uuid) && recs[idx].1.down_delay.is_none() {
                        recs[idx].1.down_delay = *delay_ms;
                    }
                }
                Message::ManeuverFeedback(fb) if to == "orchestrator" => {
                    if let (Some(s), Some(d)) = (seq, delay_ms) {
                        feedback_seq.insert(*s, (fb.recommendation_id.clone(), *d));
                    }
                }
                _ => {}
            },
            LogEvent::Delivered { t_ms, seq, to } if to == "orchestrator" => {
                if let Some((id, d)) = feedback_seq.remove(seq) {
                    received.entry(id).or_insert((*t_ms, d));
                } else {
                    update_seq.entry(*seq).or_insert(*t_ms);
                }
            }
            _ => {}
        }
    }

    let mut report = RttReport::default();
    for (id, rec) in recs {
        let trig = rec
            .trigger
            .as_ref()
            .and_then(|k| updates.get(k).and_then(|&(sent, seq)| Some((k.0.clone(), sent, *update_seq.get(&seq)?))));
        match (trig, received.get(&id), rec.down_delay) {
            (Some((uuid, sent, arrived)), Some(&(got, back)), Some(down)) => report.samples.push(RttSample {
                recommendation_id: id,
                target: rec.target,
                trigger_uuid: uuid,
                trigger_sent_ms: sent,
                trigger_received_ms: arrived,
                feedback_received_ms: got,
                rtt_ms: got - arrived,
                injected_ms: down + back,
            }),
            _ => report.unmatched.push(id),
        }
    }
    report
}
