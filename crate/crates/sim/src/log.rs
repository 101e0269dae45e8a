//! The simulation log: one JSON event per line, in simulation order.

use lmo_core::LatLon;
use lmo_orchestrator::wire::Message;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

use crate::fusion::Ambiguity;
use crate::SimError;

/// Ground truth for one vehicle at one tick, in target-lane coordinates as
/// well as the local plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    pub accel: f64,
    pub heading: f64,
    /// `target` or `merge`, by lateral offset.
    pub lane: String,
    pub station: f64,
    pub offset: f64,
    pub length: f64,
    pub connected: bool,
    /// Recommendation being tracked, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    ScenarioStart {
        scenario: String,
        seed: u64,
        /// Projection origin of the local plane.
        origin: LatLon,
        merging: Vec<String>,
    },
    VehicleStates {
        t_ms: i64,
        states: Vec<TruthRecord>,
    },
    FusedTracks {
        t_ms: i64,
        ids: Vec<String>,
    },
    Ambiguity {
        t_ms: i64,
        #[serde(flatten)]
        detail: Ambiguity,
    },
    Sent {
        t_ms: i64,
        from: String,
        to: String,
        /// Absent when the copy was lost.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delay_ms: Option<i64>,
        message: Message,
    },
    Delivered {
        t_ms: i64,
        seq: u64,
        to: String,
    },
    NoSubscriber {
        t_ms: i64,
        from: String,
        message_type: String,
    },
    Violation {
        t_ms: i64,
        kind: String,
        vehicles: Vec<String>,
    },
    MergeCompleted {
        t_ms: i64,
        vehicle: String,
    },
    ScenarioEnd {
        t_ms: i64,
        reason: String,
    },
}

impl LogEvent {
    pub fn t_ms(&self) -> Option<i64> {
        match self {
            LogEvent::ScenarioStart { .. } => None,
            LogEvent::VehicleStates { t_ms, .. }
            | LogEvent::FusedTracks { t_ms, .. }
            | LogEvent::Ambiguity { t_ms, .. }
            | LogEvent::Sent { t_ms, .. }
            | LogEvent::Delivered { t_ms, .. }
            | LogEvent::NoSubscriber { t_ms, .. }
            | LogEvent::Violation { t_ms, .. }
            | LogEvent::MergeCompleted { t_ms, .. }
            | LogEvent::ScenarioEnd { t_ms, .. } => Some(*t_ms),
        }
    }
}

pub fn write_log(w: &mut impl Write, events: &[LogEvent]) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut *w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Reads a log, skipping blank lines.
pub fn read_log(r: impl BufRead) -> Result<Vec<LogEvent>, SimError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| SimError::Io("log".into(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| SimError::Log { line: i + 1, detail: e.to_string() })?);
    }
    Ok(out)
}
