//! Roadside fusion of onboard reports and camera detections.
//!
//! Camera detections are associated to onboard reports by global greedy
//! nearest neighbour: all gated pairs sorted by distance, taken while both
//! sides are free. Onboard kinematics always win for an associated pair.
//! Detections left over become anonymous camera tracks.

use lmo_core::scene::SceneConfig;
use lmo_core::{Source, Vec2, VehicleState};
use serde::{Deserialize, Serialize};

use crate::camera::CameraReport;

pub const ASSOC_GATE_M: f64 = 2.0;
pub const ASSOC_GATE_MS: i64 = 100;
pub const TRACK_GATE_M: f64 = 5.0;
pub const TRACK_TIMEOUT_MS: i64 = 1000;

/// A detection that had more than one onboard candidate inside the gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ambiguity {
    pub camera_index: usize,
    pub candidates: Vec<String>,
    pub chosen: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FusionOutput {
    /// Onboard-backed states sorted by id, then camera tracks by id.
    pub tracks: Vec<VehicleState>,
    pub ambiguities: Vec<Ambiguity>,
}

/// Greedy assignment over `(distance, left, right)` candidates. Returns
/// `right` index per `left` index.
pub fn greedy_assign(mut pairs: Vec<(f64, usize, usize)>, n_left: usize, n_right: usize) -> Vec<Option<usize>> {
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut left = vec![None; n_left];
    let mut right_used = vec![false; n_right];
    for (_, i, j) in pairs {
        if left[i].is_none() && !right_used[j] {
            left[i] = Some(j);
            right_used[j] = true;
        }
    }
    left
}

#[derive(Debug, Clone)]
struct CamTrack {
    id: String,
    state: VehicleState,
}

pub struct Fusion {
    scene: SceneConfig,
    tracks: Vec<CamTrack>,
    next_id: u64,
}

impl Fusion {
    pub fn new(scene: SceneConfig) -> Self {
        Self { scene, tracks: Vec::new(), next_id: 1 }
    }

    pub fn fuse(&mut self, t_ms: i64, onboard: &[VehicleState], camera: &[CameraReport]) -> FusionOutput {
        let mut pairs = Vec::new();
        let mut candidates: Vec<Vec<usize>> = vec![Vec::new(); camera.len()];
        for (i, c) in camera.iter().enumerate() {
            for (j, o) in onboard.iter().enumerate() {
                let d = c.position.distance(o.position);
                if d < ASSOC_GATE_M && (c.timestamp_ms - o.timestamp_ms).abs() < ASSOC_GATE_MS {
                    pairs.push((d, i, j));
                    candidates[i].push(j);
                }
            }
        }
        let assign = greedy_assign(pairs, camera.len(), onboard.len());
        let ambiguities = candidates
            .iter()
            .enumerate()
            .filter(|(_, c)| c.len() >= 2)
            .map(|(i, c)| Ambiguity {
                camera_index: i,
                candidates: c.iter().map(|&j| onboard[j].vehicle_id.clone()).collect(),
                chosen: assign[i].map(|j| onboard[j].vehicle_id.clone()),
            })
            .collect();

        let mut matched = vec![false; onboard.len()];
        assign.iter().flatten().for_each(|&j| matched[j] = true);
        let mut tracks: Vec<VehicleState> = onboard
            .iter()
            .zip(&matched)
            .map(|(o, &m)| {
                let mut s = o.clone();
                s.source = if m { Source::Fused } else { Source::Onboard };
                s
            })
            .collect();
        tracks.sort_by(|a, b| lmo_core::state::cmp_vehicle_ids(&a.vehicle_id, &b.vehicle_id));

        let leftovers: Vec<&CameraReport> = camera.iter().zip(&assign).filter(|(_, a)| a.is_none()).map(|(c, _)| c).collect();
        self.update_tracks(t_ms, &leftovers);
        tracks.extend(self.tracks.iter().filter(|k| k.state.timestamp_ms == t_ms).map(|k| k.state.clone()));
        FusionOutput { tracks, ambiguities }
    }

    /// Continues camera tracks by nearest constant-velocity prediction.
    fn update_tracks(&mut self, t_ms: i64, reports: &[&CameraReport]) {
        self.tracks.retain(|k| t_ms - k.state.timestamp_ms <= TRACK_TIMEOUT_MS);
        let predicted: Vec<Vec2> = self
            .tracks
            .iter()
            .map(|k| {
                let dt = (t_ms - k.state.timestamp_ms) as f64 / 1000.0;
                k.state.position + Vec2::from_heading_deg(k.state.heading_deg) * (k.state.speed * dt)
            })
            .collect();
        let mut pairs = Vec::new();
        for (i, r) in reports.iter().enumerate() {
            for (j, p) in predicted.iter().enumerate() {
                let d = r.position.distance(*p);
                if d < TRACK_GATE_M {
                    pairs.push((d, i, j));
                }
            }
        }
        let assign = greedy_assign(pairs, reports.len(), self.tracks.len());
        for (r, a) in reports.iter().zip(assign) {
            let id = match a {
                Some(j) => self.tracks[j].id.clone(),
                None => {
                    let id = format!("cam-{}", self.next_id);
                    self.next_id += 1;
                    id
                }
            };
            let state = self.camera_state(&id, r);
            match a {
                Some(j) => self.tracks[j].state = state,
                None => self.tracks.push(CamTrack { id, state }),
            }
        }
        self.tracks.sort_by(|a, b| lmo_core::state::cmp_vehicle_ids(&a.id, &b.id));
    }

    fn camera_state(&self, id: &str, r: &CameraReport) -> VehicleState {
        let offset = self.scene.target_lane.locate(r.position).offset;
        VehicleState::builder(id, r.timestamp_ms)
            .position(r.position)
            .speed(r.speed)
            .heading(r.heading_deg)
            .lane(self.scene.lane_for_offset(offset))
            .size(r.length, r.width)
            .connected(false)
            .source(Source::Camera)
            .build()
    }
}
