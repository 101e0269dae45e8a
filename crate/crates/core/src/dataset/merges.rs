//! Lane-change detection and extraction of 70-frame merge instances.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::HashMap;

use super::ingest::TrajectoryFrame;
use crate::geo::{LaneAxis, Vec2};
use crate::state::{cmp_vehicle_ids, VehicleState};

pub const FRAMES_BEFORE: usize = 40;
pub const FRAMES_AFTER: usize = 30;
pub const INSTANCE_FRAMES: usize = FRAMES_BEFORE + FRAMES_AFTER;
pub const SAMPLE_PERIOD_MS: i64 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneChangeEvent {
    pub vehicle_id: String,
    pub merge_timestamp_ms: i64,
    pub from_lane: i32,
    pub to_lane: i32,
    /// Index of the change frame within the vehicle's track.
    pub track_index: usize,
}

/// Emits an event at every frame whose lane differs from the lane the
/// vehicle was last known to be in.
pub fn detect_lane_merges(track: &[TrajectoryFrame]) -> Vec<LaneChangeEvent> {
    let Some(first) = track.first() else {
        return Vec::new();
    };
    let mut current = first.state.lane_id;
    let mut events = Vec::new();
    for (i, f) in track.iter().enumerate().skip(1) {
        if f.state.lane_id != current {
            events.push(LaneChangeEvent {
                vehicle_id: f.state.vehicle_id.clone(),
                merge_timestamp_ms: f.state.timestamp_ms,
                from_lane: current,
                to_lane: f.state.lane_id,
                track_index: i,
            });
            current = f.state.lane_id;
        }
    }
    events
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeTriple {
    pub merging: String,
    pub preceding: String,
    pub following: String,
    pub target_lane: i32,
    pub merge_point: Vec2,
    pub merge_frame_index: usize,
}

/// M, P and F at one time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFrame {
    pub m: VehicleState,
    pub p: VehicleState,
    pub f: VehicleState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeInstance {
    pub instance_id: u64,
    pub triple: MergeTriple,
    pub frames: Vec<SceneFrame>,
    pub lane_axis: LaneAxis,
    /// Lateral position of the target-lane centerline relative to the merge
    /// point, estimated from P and F at the change frame.
    pub target_center_offset: f64,
}

impl MergeInstance {
    pub fn merge_frame(&self) -> &SceneFrame {
        &self.frames[self.triple.merge_frame_index]
    }

    /// Longitudinal coordinate relative to the merge point.
    pub fn station(&self, p: Vec2) -> f64 {
        self.lane_axis.along(p - self.triple.merge_point)
    }

    /// Lateral offset from the target-lane centerline, positive right.
    pub fn lateral(&self, p: Vec2) -> f64 {
        self.lane_axis.across(p - self.triple.merge_point) - self.target_center_offset
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    TruncatedWindow,
    NoPreceding,
    NoFollowing,
    /// P or F lacks a state at one of the 70 time steps.
    IncompleteNeighborTrack,
}

/// Random access to all tracks by vehicle and by timestamp.
pub struct TrajectoryIndex<'a> {
    tracks: HashMap<&'a str, &'a [TrajectoryFrame]>,
    by_time: HashMap<i64, Vec<&'a VehicleState>>,
}

impl<'a> TrajectoryIndex<'a> {
    pub fn new(tracks: &[&'a [TrajectoryFrame]]) -> Self {
        let mut by_time: HashMap<i64, Vec<&VehicleState>> = HashMap::new();
        let mut map = HashMap::new();
        for t in tracks {
            if let Some(first) = t.first() {
                map.insert(first.state.vehicle_id.as_str(), *t);
            }
            for f in t.iter() {
                by_time.entry(f.state.timestamp_ms).or_default().push(&f.state);
            }
        }
        Self { tracks: map, by_time }
    }

    pub fn track(&self, vehicle_id: &str) -> Option<&'a [TrajectoryFrame]> {
        self.tracks.get(vehicle_id).copied()
    }

    pub fn state_at(&self, vehicle_id: &str, timestamp_ms: i64) -> Option<&'a VehicleState> {
        let track = self.track(vehicle_id)?;
        let i = track.binary_search_by_key(&timestamp_ms, |f| f.state.timestamp_ms).ok()?;
        Some(&track[i].state)
    }

    pub fn at_time(&self, timestamp_ms: i64) -> &[&'a VehicleState] {
        self.by_time.get(&timestamp_ms).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Nearest vehicle on `lane` ahead of (`ahead = true`) or behind `m`; equal
/// distances go to the lower vehicle id.
fn nearest_on_lane<'a>(
    candidates: &[&'a VehicleState],
    m: &VehicleState,
    lane: i32,
    axis: LaneAxis,
    ahead: bool,
) -> Option<&'a VehicleState> {
    candidates
        .iter()
        .filter(|s| s.lane_id == lane && s.vehicle_id != m.vehicle_id)
        .filter_map(|s| {
            let d = axis.along(s.position - m.position);
            let d = if ahead { d } else { -d };
            (d > 0.0).then_some((d, *s))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| cmp_vehicle_ids(&a.1.vehicle_id, &b.1.vehicle_id)))
        .map(|(_, s)| s)
}

/// Cuts 40 frames before and 30 from the change frame and attaches P and F
/// as identified at the change frame.
pub fn extract_merge_instance(
    event: &LaneChangeEvent,
    index: &TrajectoryIndex<'_>,
    axis: LaneAxis,
) -> Result<MergeInstance, Rejection> {
    let track = index.track(&event.vehicle_id).ok_or(Rejection::TruncatedWindow)?;
    let k = event.track_index;
    if k < FRAMES_BEFORE || k + FRAMES_AFTER > track.len() {
        return Err(Rejection::TruncatedWindow);
    }
    let window = &track[k - FRAMES_BEFORE..k + FRAMES_AFTER];
    let contiguous = window
        .windows(2)
        .all(|w| w[1].state.timestamp_ms - w[0].state.timestamp_ms == SAMPLE_PERIOD_MS);
    if !contiguous {
        return Err(Rejection::TruncatedWindow);
    }
    let m_change = &track[k].state;
    let peers = index.at_time(m_change.timestamp_ms);
    let p0 = nearest_on_lane(peers, m_change, event.to_lane, axis, true).ok_or(Rejection::NoPreceding)?;
    let f0 = nearest_on_lane(peers, m_change, event.to_lane, axis, false).ok_or(Rejection::NoFollowing)?;

    let mut frames = Vec::with_capacity(INSTANCE_FRAMES);
    for w in window {
        let t = w.state.timestamp_ms;
        let p = index.state_at(&p0.vehicle_id, t).ok_or(Rejection::IncompleteNeighborTrack)?;
        let f = index.state_at(&f0.vehicle_id, t).ok_or(Rejection::IncompleteNeighborTrack)?;
        frames.push(SceneFrame { m: w.state.clone(), p: p.clone(), f: f.clone() });
    }
    let merge_point = m_change.position;
    let center = 0.5 * (axis.across(p0.position - merge_point) + axis.across(f0.position - merge_point));
    Ok(MergeInstance {
        instance_id: 0,
        triple: MergeTriple {
            merging: event.vehicle_id.clone(),
            preceding: p0.vehicle_id.clone(),
            following: f0.vehicle_id.clone(),
            target_lane: event.to_lane,
            merge_point,
            merge_frame_index: FRAMES_BEFORE,
        },
        frames,
        lane_axis: axis,
        target_center_offset: center,
    })
}

/// Canonical instance order: merging vehicle id, then change time.
pub fn cmp_instances(a: &MergeInstance, b: &MergeInstance) -> Ordering {
    cmp_vehicle_ids(&a.triple.merging, &b.triple.merging)
        .then(a.merge_frame().m.timestamp_ms.cmp(&b.merge_frame().m.timestamp_ms))
}
