//! Local-plane geometry: coordinate projection, lane axes and polylines,
//! bumper-to-bumper gaps and the safe-slot predicate.
//!
//! All positions are meters in a local east/north plane. Headings are degrees
//! clockwise from north, so a heading `h` points along `(sin h, cos h)`.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::GeoError;
use crate::state::VehicleState;

/// Mean Earth radius used by the equirectangular projection.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Two states closer than this in time are considered simultaneous.
pub const TIME_ALIGNMENT_MS: i64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    /// Unit vector for a heading in degrees clockwise from north.
    pub fn from_heading_deg(heading_deg: f64) -> Self {
        let h = heading_deg.to_radians();
        Self::new(h.sin(), h.cos())
    }

    /// Heading of this vector in degrees clockwise from north, in `[0, 360)`.
    pub fn heading_deg(self) -> f64 {
        wrap_heading(self.x.atan2(self.y).to_degrees())
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps any angle in degrees into `[0, 360)`.
pub fn wrap_heading(deg: f64) -> f64 {
    let w = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Signed difference `a - b` folded into `(-180, 180]`.
pub fn heading_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn validate(self) -> Result<Self, GeoError> {
        if !(self.lat.is_finite() && self.lat.abs() <= 90.0) {
            return Err(GeoError::OutOfRange { what: "latitude", value: self.lat });
        }
        if !(self.lon.is_finite() && self.lon.abs() <= 180.0) {
            return Err(GeoError::OutOfRange { what: "longitude", value: self.lon });
        }
        Ok(self)
    }
}

/// Equirectangular projection about a fixed origin.
///
/// Adequate for scenes up to a few kilometers across: at 2 km from the origin
/// the east/north distortion against a great-circle distance stays below a
/// few centimeters at mid latitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    origin: LatLon,
    cos_lat0: f64,
}

impl Projection {
    pub fn new(origin: LatLon) -> Result<Self, GeoError> {
        let origin = origin.validate()?;
        let cos_lat0 = origin.lat.to_radians().cos();
        if cos_lat0 <= 1e-9 {
            return Err(GeoError::OutOfRange { what: "origin latitude", value: origin.lat });
        }
        Ok(Self { origin, cos_lat0 })
    }

    pub fn origin(&self) -> LatLon {
        self.origin
    }

    pub fn project(&self, p: LatLon) -> Result<Vec2, GeoError> {
        let p = p.validate()?;
        let dlat = (p.lat - self.origin.lat).to_radians();
        let dlon = (p.lon - self.origin.lon).to_radians();
        Ok(Vec2::new(EARTH_RADIUS_M * dlon * self.cos_lat0, EARTH_RADIUS_M * dlat))
    }

    pub fn unproject(&self, v: Vec2) -> LatLon {
        let lat = self.origin.lat + (v.y / EARTH_RADIUS_M).to_degrees();
        let lon = self.origin.lon + (v.x / (EARTH_RADIUS_M * self.cos_lat0)).to_degrees();
        LatLon::new(lat, lon)
    }
}

/// Projects `(lat, lon)` into meters east/north of `origin`.
pub fn project_coordinates(lat: f64, lon: f64, origin: LatLon) -> Result<Vec2, GeoError> {
    Projection::new(origin)?.project(LatLon::new(lat, lon))
}

/// Unit vector giving the direction of travel along a lane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec2", into = "Vec2")]
pub struct LaneAxis(Vec2);

impl LaneAxis {
    pub const NORTH: LaneAxis = LaneAxis(Vec2 { x: 0.0, y: 1.0 });

    pub fn new(direction: Vec2) -> Result<Self, GeoError> {
        let n = direction.norm();
        if !n.is_finite() || n < 1e-12 {
            return Err(GeoError::DegenerateAxis);
        }
        Ok(Self(direction * (1.0 / n)))
    }

    pub fn from_heading_deg(heading_deg: f64) -> Self {
        Self(Vec2::from_heading_deg(heading_deg))
    }

    pub fn unit(self) -> Vec2 {
        self.0
    }

    /// Unit normal pointing to the right of the direction of travel.
    pub fn right(self) -> Vec2 {
        Vec2::new(self.0.y, -self.0.x)
    }

    pub fn reversed(self) -> Self {
        Self(-self.0)
    }

    pub fn heading_deg(self) -> f64 {
        self.0.heading_deg()
    }

    /// Signed longitudinal component of `v`.
    pub fn along(self, v: Vec2) -> f64 {
        v.dot(self.0)
    }

    /// Signed lateral component of `v`, positive to the right.
    pub fn across(self, v: Vec2) -> f64 {
        v.dot(self.right())
    }
}

impl TryFrom<Vec2> for LaneAxis {
    type Error = GeoError;
    fn try_from(v: Vec2) -> Result<Self, GeoError> {
        LaneAxis::new(v)
    }
}

impl From<LaneAxis> for Vec2 {
    fn from(a: LaneAxis) -> Vec2 {
        a.0
    }
}

/// Minimum bumper gap the safe-slot predicate demands: `s0 + tau * v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyParams {
    pub standstill_gap_m: f64,
    pub time_headway_s: f64,
}

impl Default for SafetyParams {
    fn default() -> Self {
        Self { standstill_gap_m: 1.0, time_headway_s: 0.5 }
    }
}

impl SafetyParams {
    pub fn new(standstill_gap_m: f64, time_headway_s: f64) -> Result<Self, GeoError> {
        Self { standstill_gap_m, time_headway_s }.validated()
    }

    pub fn validated(self) -> Result<Self, GeoError> {
        if !(self.standstill_gap_m.is_finite() && self.standstill_gap_m > 0.0) {
            return Err(GeoError::OutOfRange { what: "standstill gap", value: self.standstill_gap_m });
        }
        if !(self.time_headway_s.is_finite() && self.time_headway_s >= 0.0) {
            return Err(GeoError::OutOfRange { what: "time headway", value: self.time_headway_s });
        }
        Ok(self)
    }

    pub fn required_gap(&self, speed: f64) -> f64 {
        self.standstill_gap_m + self.time_headway_s * speed
    }
}

fn check_aligned(a: &VehicleState, b: &VehicleState) -> Result<(), GeoError> {
    let delta_ms = (a.timestamp_ms - b.timestamp_ms).abs();
    if delta_ms > TIME_ALIGNMENT_MS {
        return Err(GeoError::Stale { delta_ms });
    }
    Ok(())
}

/// Bumper-to-bumper distance from `rear` to `front` along `axis`.
///
/// Negative when the two bodies overlap longitudinally.
pub fn longitudinal_gap(
    rear: &VehicleState,
    front: &VehicleState,
    axis: LaneAxis,
) -> Result<f64, GeoError> {
    check_aligned(rear, front)?;
    Ok(axis.along(front.position - rear.position) - 0.5 * (front.length + rear.length))
}

/// True when `m` sits strictly between `f` and `p` with at least the required
/// headway gap to both.
pub fn is_safe_slot(
    m: &VehicleState,
    p: &VehicleState,
    f: &VehicleState,
    params: &SafetyParams,
    axis: LaneAxis,
) -> Result<bool, GeoError> {
    check_aligned(m, f)?;
    let front_gap = longitudinal_gap(m, p, axis)?;
    let rear_gap = longitudinal_gap(f, m, axis)?;
    let sm = axis.along(m.position);
    let between = axis.along(f.position) < sm && sm < axis.along(p.position);
    Ok(between
        && front_gap >= params.required_gap(m.speed)
        && rear_gap >= params.required_gap(f.speed))
}

/// Position on a polyline expressed as arc length plus signed lateral offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanePoint {
    pub station: f64,
    /// Positive to the right of the direction of travel.
    pub offset: f64,
    pub axis: LaneAxis,
}

/// Lane centerline as an ordered list of vertices in the local plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec2>", into = "Vec<Vec2>")]
pub struct Polyline {
    points: Vec<Vec2>,
    cumulative: Vec<f64>,
}

impl Polyline {
    pub fn new(points: Vec<Vec2>) -> Result<Self, GeoError> {
        if points.len() < 2 {
            return Err(GeoError::DegeneratePolyline);
        }
        let mut cumulative = Vec::with_capacity(points.len());
        cumulative.push(0.0);
        for w in points.windows(2) {
            let len = w[0].distance(w[1]);
            if len < 1e-9 || !len.is_finite() {
                return Err(GeoError::DegeneratePolyline);
            }
            cumulative.push(cumulative.last().unwrap() + len);
        }
        Ok(Self { points, cumulative })
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn segment_axis(&self, i: usize) -> LaneAxis {
        LaneAxis(
            (self.points[i + 1] - self.points[i]) * (1.0 / (self.cumulative[i + 1] - self.cumulative[i])),
        )
    }

    /// Projects `p` onto the nearest segment. Stations before the first or
    /// after the last vertex extrapolate the end segments.
    pub fn locate(&self, p: Vec2) -> LanePoint {
        let last = self.points.len() - 2;
        let mut best: Option<(f64, LanePoint)> = None;
        for i in 0..=last {
            let axis = self.segment_axis(i);
            let seg_len = self.cumulative[i + 1] - self.cumulative[i];
            let rel = p - self.points[i];
            let mut t = axis.along(rel);
            if i > 0 {
                t = t.max(0.0);
            }
            if i < last {
                t = t.min(seg_len);
            }
            let foot = self.points[i] + axis.unit() * t;
            let dist = p.distance(foot);
            let candidate = LanePoint { station: self.cumulative[i] + t, offset: axis.across(rel), axis };
            if best.as_ref().is_none_or(|(d, _)| dist < *d) {
                best = Some((dist, candidate));
            }
        }
        best.unwrap().1
    }

    /// Direction of travel at a station.
    pub fn axis_at(&self, station: f64) -> LaneAxis {
        self.segment_axis(self.segment_for(station))
    }

    /// Point at `station` shifted `offset` meters to the right.
    pub fn point_at(&self, station: f64, offset: f64) -> Vec2 {
        let i = self.segment_for(station);
        let axis = self.segment_axis(i);
        self.points[i] + axis.unit() * (station - self.cumulative[i]) + axis.right() * offset
    }

    fn segment_for(&self, station: f64) -> usize {
        let last = self.points.len() - 2;
        (0..=last).find(|&i| station <= self.cumulative[i + 1]).unwrap_or(last)
    }
}

impl TryFrom<Vec<Vec2>> for Polyline {
    type Error = GeoError;
    fn try_from(points: Vec<Vec2>) -> Result<Self, GeoError> {
        Polyline::new(points)
    }
}

impl From<Polyline> for Vec<Vec2> {
    fn from(p: Polyline) -> Vec<Vec2> {
        p.points
    }
}

/// One constant-acceleration step. Speed never goes negative; a vehicle that
/// stops inside the step travels only its stopping distance.
pub fn advance_speed(speed: f64, accel: f64, dt_s: f64) -> (f64, f64) {
    let next = speed + accel * dt_s;
    if next >= 0.0 {
        (speed * dt_s + 0.5 * accel * dt_s * dt_s, next)
    } else {
        (speed * speed / (2.0 * -accel), 0.0)
    }
}
