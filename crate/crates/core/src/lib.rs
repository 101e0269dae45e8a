//! Shared domain types, lane geometry and the offline data pipeline.

pub mod dataset;
pub mod error;
pub mod geo;
pub mod scene;
pub mod state;
pub mod trajectory;

pub use error::{DatasetError, GeoError};
pub use geo::{is_safe_slot, longitudinal_gap, LaneAxis, LatLon, Projection, SafetyParams, Vec2};
pub use state::{Source, VehicleState};
pub use trajectory::{Recommendation, RolloutOutcome, Waypoint};
