//! Manoeuvre span, travelled distance and gaps for one merging vehicle.

use lmo_orchestrator::wire::Message;
use lmo_sim::log::{LogEvent, TruthRecord};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Maneuver {
    pub vehicle: String,
    /// First time a recommendation for the vehicle left the orchestrator.
    pub start_ms: i64,
    /// Merge completion, or the last logged tick when it never completed.
    pub end_ms: i64,
    pub completed: bool,
    pub length_s: f64,
    pub length_m: f64,
    /// Target-lane neighbours at the start of the span.
    pub preceding: Option<String>,
    pub following: Option<String>,
    /// Smallest bumper gaps to those neighbours over the span.
    pub min_gap_preceding_m: Option<f64>,
    pub min_gap_following_m: Option<f64>,
}

fn gap(a: &TruthRecord, b: &TruthRecord) -> f64 {
    (a.station - b.station).abs() - 0.5 * (a.length + b.length)
}

/// `None` when no recommendation for `vehicle` was ever emitted.
pub fn compute_maneuver(events: &[LogEvent], vehicle: &str) -> Option<Maneuver> {
    let start_ms = events.iter().find_map(|e| match e {
        LogEvent::Sent { t_ms, from, message: Message::Recommendation(r), .. } if from == "orchestrator" && r.target_uuid == vehicle => Some(*t_ms),
        _ => None,
    })?;
    let completed_at = events.iter().find_map(|e| match e {
        LogEvent::MergeCompleted { t_ms, vehicle: v } if v == vehicle => Some(*t_ms),
        _ => None,
    });
    let ticks: Vec<(i64, &Vec<TruthRecord>)> = events
        .iter()
        .filter_map(|e| match e {
            LogEvent::VehicleStates { t_ms, states } if states.iter().any(|s| s.id == vehicle) => Some((*t_ms, states)),
            _ => None,
        })
        .collect();
    let last_tick = ticks.last().map_or(start_ms, |t| t.0);
    let end_ms = completed_at.unwrap_or(last_tick).max(start_ms);
    // anchor on the last tick at or before the start
    let first = ticks.iter().rposition(|t| t.0 <= start_ms).unwrap_or(0);
    let span: Vec<&(i64, &Vec<TruthRecord>)> = ticks[first..].iter().take_while(|t| t.0 <= end_ms).collect();

    let me = |states: &Vec<TruthRecord>| states.iter().find(|s| s.id == vehicle).cloned();
    let mut length_m = 0.0;
    for w in span.windows(2) {
        if let (Some(a), Some(b)) = (me(w[0].1), me(w[1].1)) {
            length_m += (b.x - a.x).hypot(b.y - a.y);
        }
    }

    let (mut preceding, mut following) = (None, None);
    if let Some((_, states)) = span.first() {
        if let Some(m) = me(states) {
            let target: Vec<&TruthRecord> = states.iter().filter(|s| s.id != vehicle && s.lane == "target").collect();
            preceding = target.iter().filter(|s| s.station > m.station).min_by(|a, b| a.station.total_cmp(&b.station)).map(|s| s.id.clone());
            following = target.iter().filter(|s| s.station <= m.station).max_by(|a, b| a.station.total_cmp(&b.station)).map(|s| s.id.clone());
        }
    }
    let min_gap = |other: &Option<String>| {
        let other = other.as_ref()?;
        span.iter()
            .filter_map(|(_, states)| Some(gap(&me(states)?, states.iter().find(|s| &s.id == other)?)))
            .min_by(f64::total_cmp)
    };
    Some(Maneuver {
        vehicle: vehicle.to_string(),
        start_ms,
        end_ms,
        completed: completed_at.is_some(),
        length_s: (end_ms - start_ms) as f64 / 1000.0,
        length_m,
        min_gap_preceding_m: min_gap(&preceding),
        min_gap_following_m: min_gap(&following),
        preceding,
        following,
    })
}
