//! Trajectory CSV ingestion (NGSIM I-80 / US-101 layout by default).

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use crate::error::DatasetError;
use crate::geo::{LaneAxis, Vec2};
use crate::state::{cmp_vehicle_ids, Source, VehicleState};

/// Which point of the vehicle body the CSV position columns describe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionReference {
    /// Front bumper center, as in NGSIM `Local_Y`.
    #[default]
    Front,
    Center,
}

/// Maps CSV header names onto `VehicleState` fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMapping {
    pub vehicle_id: String,
    pub frame: String,
    /// Lateral coordinate column.
    pub x: String,
    /// Longitudinal coordinate column.
    pub y: String,
    pub speed: String,
    pub acceleration: String,
    pub length: String,
    pub width: String,
    pub lane: String,
    pub heading: Option<String>,
    /// Multiplier converting file units into meters (0.3048 for feet).
    pub distance_scale: f64,
    pub frame_period_ms: i64,
    pub position_reference: PositionReference,
    /// Direction of travel in the projected plane.
    pub lane_axis: LaneAxis,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self::ngsim()
    }
}

impl ColumnMapping {
    pub fn ngsim() -> Self {
        Self {
            vehicle_id: "Vehicle_ID".into(),
            frame: "Frame_ID".into(),
            x: "Local_X".into(),
            y: "Local_Y".into(),
            speed: "v_Vel".into(),
            acceleration: "v_Acc".into(),
            length: "v_Length".into(),
            width: "v_Width".into(),
            lane: "Lane_ID".into(),
            heading: None,
            distance_scale: 0.3048,
            frame_period_ms: 100,
            position_reference: PositionReference::Front,
            lane_axis: LaneAxis::NORTH,
        }
    }
}

/// One parsed CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFrame {
    pub frame: i64,
    pub state: VehicleState,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedTrajectories {
    /// Sorted by (vehicle id, timestamp).
    pub frames: Vec<TrajectoryFrame>,
    pub rows_read: usize,
    pub skipped: usize,
}

struct Columns {
    vehicle_id: usize,
    frame: usize,
    x: usize,
    y: usize,
    speed: usize,
    acceleration: usize,
    length: usize,
    width: usize,
    lane: usize,
    heading: Option<usize>,
}

impl Columns {
    fn resolve(headers: &csv::StringRecord, m: &ColumnMapping) -> Result<Self, DatasetError> {
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
        };
        Ok(Self {
            vehicle_id: find(&m.vehicle_id)?,
            frame: find(&m.frame)?,
            x: find(&m.x)?,
            y: find(&m.y)?,
            speed: find(&m.speed)?,
            acceleration: find(&m.acceleration)?,
            length: find(&m.length)?,
            width: find(&m.width)?,
            lane: find(&m.lane)?,
            heading: m.heading.as_deref().map(find).transpose()?,
        })
    }
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Option<T> {
    rec.get(i)?.trim().parse().ok()
}

fn parse_row(rec: &csv::StringRecord, c: &Columns, m: &ColumnMapping) -> Option<TrajectoryFrame> {
    let id = rec.get(c.vehicle_id)?.trim();
    if id.is_empty() {
        return None;
    }
    let frame: i64 = field(rec, c.frame)?;
    let s = m.distance_scale;
    let lateral: f64 = field::<f64>(rec, c.x)? * s;
    let longitudinal: f64 = field::<f64>(rec, c.y)? * s;
    let length: f64 = field::<f64>(rec, c.length)? * s;
    let width: f64 = field::<f64>(rec, c.width)? * s;
    let axis = m.lane_axis;
    let mut position = axis.right() * lateral + axis.unit() * longitudinal;
    if m.position_reference == PositionReference::Front {
        position = position - axis.unit() * (0.5 * length);
    }
    let heading = match c.heading {
        Some(i) => field::<f64>(rec, i)?,
        None => axis.heading_deg(),
    };
    let state = VehicleState {
        vehicle_id: id.to_string(),
        timestamp_ms: frame.checked_mul(m.frame_period_ms)?,
        position,
        latlon: None,
        speed: field::<f64>(rec, c.speed)? * s,
        acceleration: field::<f64>(rec, c.acceleration)? * s,
        heading_deg: heading,
        lane_id: field(rec, c.lane)?,
        length,
        width,
        connected: false,
        source: Source::Camera,
    };
    state.validate().ok()?;
    Some(TrajectoryFrame { frame, state })
}

/// Parses a trajectory CSV from any reader. Malformed rows are skipped and
/// counted; a missing required column is fatal.
pub fn parse_trajectory_reader<R: Read>(
    reader: R,
    mapping: &ColumnMapping,
) -> Result<ParsedTrajectories, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = Columns::resolve(&headers, mapping)?;
    let mut out = ParsedTrajectories::default();
    for rec in rdr.records() {
        out.rows_read += 1;
        let parsed = rec.ok().filter(|r| r.len() == headers.len()).and_then(|r| parse_row(&r, &cols, mapping));
        match parsed {
            Some(f) => out.frames.push(f),
            None => out.skipped += 1,
        }
    }
    out.frames.sort_by(|a, b| {
        cmp_vehicle_ids(&a.state.vehicle_id, &b.state.vehicle_id).then(a.state.timestamp_ms.cmp(&b.state.timestamp_ms))
    });
    // one row per (vehicle, timestamp): keep the first occurrence
    let before = out.frames.len();
    let mut seen = HashSet::new();
    out.frames.retain(|f| seen.insert((f.state.vehicle_id.clone(), f.state.timestamp_ms)));
    out.skipped += before - out.frames.len();
    if out.skipped > 0 {
        log::warn!("skipped {} malformed trajectory rows of {}", out.skipped, out.rows_read);
    }
    Ok(out)
}

pub fn parse_trajectory_csv(
    path: impl AsRef<Path>,
    mapping: &ColumnMapping,
) -> Result<ParsedTrajectories, DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| DatasetError::io(path, e))?;
    parse_trajectory_reader(std::io::BufReader::new(file), mapping)
}

/// Groups sorted frames into per-vehicle tracks, preserving order.
pub fn group_by_vehicle(frames: &[TrajectoryFrame]) -> Vec<&[TrajectoryFrame]> {
    frames.chunk_by(|a, b| a.state.vehicle_id == b.state.vehicle_id).collect()
}

/// Centroid position helper for tests and fixtures: the inverse of the row
/// mapping for a front-referenced position.
pub fn front_reference(position: Vec2, length: f64, axis: LaneAxis) -> Vec2 {
    position + axis.unit() * (0.5 * length)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "Vehicle_ID,Frame_ID,Local_X,Local_Y,v_Length,v_Width,v_Vel,v_Acc,Lane_ID\n";

    fn meters() -> ColumnMapping {
        ColumnMapping { distance_scale: 1.0, position_reference: PositionReference::Center, ..ColumnMapping::ngsim() }
    }

    #[test]
    fn malformed_row_is_counted_and_skipped() {
        let csv = format!("{HEADER}1,10,1.0,5.0,4,2,10,0,2\n1,11,1.0,6.0,4,2,oops,0,2\n1,12,1.0,7.0,4,2,10,0,2\n");
        let out = parse_trajectory_reader(csv.as_bytes(), &meters()).unwrap();
        assert_eq!(out.frames.len(), 2);
        assert_eq!(out.skipped, 1);
        assert_eq!(out.frames[1].state.timestamp_ms, 1200);
    }

    #[test]
    fn header_only_file_yields_nothing() {
        let out = parse_trajectory_reader(HEADER.as_bytes(), &meters()).unwrap();
        assert!(out.frames.is_empty());
        assert_eq!(out.skipped, 0);
    }

    #[test]
    fn missing_column_is_fatal() {
        let csv = "Vehicle_ID,Frame_ID\n1,2\n";
        let err = parse_trajectory_reader(csv.as_bytes(), &meters()).unwrap_err();
        assert!(matches!(err, DatasetError::MissingColumn(c) if c == "Local_X"));
    }

    #[test]
    fn short_rows_and_invariant_violations_are_skipped() {
        let csv = format!("{HEADER}1,10,1.0,5.0,4,2,10,0\n1,11,1.0,5.0,4,2,-3,0,2\n1,12,1.0,5.0,0,2,3,0,2\n");
        let out = parse_trajectory_reader(csv.as_bytes(), &meters()).unwrap();
        assert_eq!(out.frames.len(), 0);
        assert_eq!(out.skipped, 3);
    }

    #[test]
    fn feet_and_front_reference_are_converted() {
        let csv = format!("{HEADER}7,1,10.0,100.0,15.0,6.0,30.0,2.0,3\n");
        let out = parse_trajectory_reader(csv.as_bytes(), &ColumnMapping::ngsim()).unwrap();
        let s = &out.frames[0].state;
        assert!((s.position.x - 3.048).abs() < 1e-12);
        assert!((s.position.y - (30.48 - 0.5 * 4.572)).abs() < 1e-12);
        assert!((s.speed - 9.144).abs() < 1e-12);
        assert_eq!(s.lane_id, 3);
        assert_eq!(s.timestamp_ms, 100);
    }

    #[test]
    fn output_sorted_and_deduplicated() {
        let csv = format!("{HEADER}10,2,0,0,4,2,1,0,1\n9,3,0,0,4,2,1,0,1\n9,1,0,0,4,2,1,0,1\n9,1,0,9,4,2,1,0,1\n");
        let out = parse_trajectory_reader(csv.as_bytes(), &meters()).unwrap();
        let keys: Vec<_> = out.frames.iter().map(|f| (f.state.vehicle_id.as_str(), f.frame)).collect();
        assert_eq!(keys, vec![("9", 1), ("9", 3), ("10", 2)]);
        assert_eq!(out.skipped, 1);
        assert_eq!(group_by_vehicle(&out.frames).len(), 2);
    }

    #[test]
    fn seven_hundred_rows_span_seventy_seconds() {
        let mut csv = String::from(HEADER);
        for k in 0..700 {
            csv.push_str(&format!("4,{},1.0,{}.0,4,2,10,0,2\n", 1000 + k, k));
        }
        // line-count oracle: data lines in the text
        let expected = csv.lines().count() - 1;
        let out = parse_trajectory_reader(csv.as_bytes(), &meters()).unwrap();
        assert_eq!(out.frames.len(), expected);
        let span = out.frames.last().unwrap().state.timestamp_ms - out.frames[0].state.timestamp_ms;
        assert_eq!(span + 100, 70_000);
    }
}
