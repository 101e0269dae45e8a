//! Static description of one merge area: projection origin, subscription
//! boundary and the target-lane geometry shared by the orchestrator and the
//! simulator.

use serde::{Deserialize, Serialize};

use crate::geo::{heading_difference, LatLon, Polyline, SafetyParams};
use crate::state::VehicleState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl Boundary {
    pub fn contains(&self, p: LatLon) -> bool {
        (self.min_lat..=self.max_lat).contains(&p.lat) && (self.min_lon..=self.max_lon).contains(&p.lon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub origin: LatLon,
    pub boundary: Boundary,
    pub target_lane_id: i32,
    pub merge_lane_id: i32,
    /// Target-lane centerline in local meters.
    pub target_lane: Polyline,
    pub lane_width_m: f64,
    /// Station along the target lane where the merge lane ends.
    pub merge_zone_end_station_m: f64,
    #[serde(default)]
    pub safety: SafetyParams,
    #[serde(default = "default_horizon")]
    pub horizon_ticks: usize,
}

fn default_horizon() -> usize {
    70
}

/// A vehicle expressed in target-lane coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneCoords {
    pub station: f64,
    /// Positive to the right of the target-lane centerline.
    pub offset: f64,
    /// Heading relative to the lane direction, positive clockwise.
    pub heading_rel_deg: f64,
}

impl SceneConfig {
    pub fn lane_coords(&self, state: &VehicleState) -> LaneCoords {
        let lp = self.target_lane.locate(state.position);
        LaneCoords {
            station: lp.station,
            offset: lp.offset,
            heading_rel_deg: heading_difference(state.heading_deg, lp.axis.heading_deg()),
        }
    }

    /// Lane membership by lateral offset: the target lane when the centroid is
    /// within half a lane width of the centerline, the merge lane otherwise.
    pub fn lane_for_offset(&self, offset: f64) -> i32 {
        if offset.abs() < 0.5 * self.lane_width_m {
            self.target_lane_id
        } else {
            self.merge_lane_id
        }
    }
}
