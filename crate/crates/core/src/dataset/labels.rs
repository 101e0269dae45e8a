//! Per-frame targets: merge feasibility, target acceleration class and
//! target heading class.

use serde::{Deserialize, Serialize};

use super::merges::MergeInstance;
use crate::geo::{is_safe_slot, SafetyParams, Vec2};

const DT_S: f64 = 0.1;

/// Uniform bins with edges at `low + k * width`. Values are clipped to
/// `[low, high]`; `high` itself falls in the last class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub low: f64,
    pub high: f64,
    pub width: f64,
}

impl Binning {
    pub const ACCELERATION: Binning = Binning { low: -4.5, high: 4.5, width: 0.5 };
    pub const HEADING: Binning = Binning { low: -30.0, high: 30.0, width: 5.0 };

    pub fn n_classes(&self) -> usize {
        ((self.high - self.low) / self.width).round() as usize + 1
    }

    pub fn clip(&self, v: f64) -> f64 {
        v.clamp(self.low, self.high)
    }

    pub fn class_of(&self, v: f64) -> usize {
        let k = ((self.clip(v) - self.low) / self.width).floor() as usize;
        k.min(self.n_classes() - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelConfig {
    pub safety: SafetyParams,
    pub acceleration_bins: Binning,
    pub heading_bins: Binning,
    /// Time-to-merge-point feature cap in seconds.
    pub time_to_merge_cap_s: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            safety: SafetyParams::default(),
            acceleration_bins: Binning::ACCELERATION,
            heading_bins: Binning::HEADING,
            time_to_merge_cap_s: 30.0,
        }
    }
}

/// Whether a merge into the P/F slot is feasible at `frame`.
pub fn label_feasibility(inst: &MergeInstance, frame: usize, params: &SafetyParams) -> bool {
    let sf = &inst.frames[frame];
    let axis = inst.lane_axis;
    if axis.along(sf.m.position - sf.f.position) <= 0.0 {
        // M at or behind F: not a relevant merge
        return false;
    }
    let mut m = sf.m.clone();
    m.position = m.position - axis.right() * inst.lateral(m.position);
    is_safe_slot(&m, &sf.p, &sf.f, params, axis).unwrap_or(false)
}

pub fn feasibility_labels(inst: &MergeInstance, params: &SafetyParams) -> Vec<bool> {
    (0..inst.frames.len()).map(|i| label_feasibility(inst, i, params)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccelRule {
    /// Infeasible frame: speed change needed to reach the next feasible frame.
    TowardFeasible,
    /// Mean recorded acceleration from the frame up to the merge frame.
    BeforeMerge,
    /// Mean recorded acceleration from the merge frame up to the frame.
    AfterMerge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccelTarget {
    pub value: f64,
    pub rule: AccelRule,
    pub class: usize,
}

fn first_feasible_after(labels: &[bool], frame: usize) -> Option<usize> {
    (frame + 1..labels.len()).find(|&i| labels[i])
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Which rule applies to `frame`. Frames at or after the merge frame use the
/// after-merge rule; earlier infeasible frames with a later feasible frame
/// use the toward-feasible rule; everything else uses the before-merge rule.
pub fn accel_rule(inst: &MergeInstance, frame: usize, labels: &[bool]) -> (AccelRule, Option<usize>) {
    let tm = inst.triple.merge_frame_index;
    if frame >= tm {
        return (AccelRule::AfterMerge, None);
    }
    if !labels[frame] {
        if let Some(t_star) = first_feasible_after(labels, frame) {
            return (AccelRule::TowardFeasible, Some(t_star));
        }
    }
    (AccelRule::BeforeMerge, None)
}

pub fn derive_target_acceleration(
    inst: &MergeInstance,
    frame: usize,
    labels: &[bool],
    bins: &Binning,
) -> AccelTarget {
    let tm = inst.triple.merge_frame_index;
    let m = |i: usize| &inst.frames[i].m;
    let (rule, t_star) = accel_rule(inst, frame, labels);
    let value = match (rule, t_star) {
        (AccelRule::TowardFeasible, Some(ts)) => {
            let v_bar = mean((frame..=ts).map(|i| m(i).speed));
            (v_bar - m(frame).speed) / ((ts - frame) as f64 * DT_S)
        }
        (AccelRule::AfterMerge, _) => mean((tm..=frame).map(|i| m(i).acceleration)),
        _ => mean((frame..=tm).map(|i| m(i).acceleration)),
    };
    let value = bins.clip(value);
    AccelTarget { value, rule, class: bins.class_of(value) }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadingTarget {
    /// Bearing to the target point relative to the lane direction, positive
    /// clockwise, clipped to the bin range.
    pub relative_deg: f64,
    pub class: usize,
}

/// Bearing of `target` seen from `from`, relative to the lane direction.
/// A target at or behind the current position (along the lane) gives 0.
pub fn relative_bearing(inst: &MergeInstance, from: Vec2, target: Vec2) -> f64 {
    let d = target - from;
    let along = inst.lane_axis.along(d);
    if d.norm() < 1e-9 || along <= 0.0 {
        return 0.0;
    }
    inst.lane_axis.across(d).atan2(along).to_degrees()
}

pub fn derive_target_heading(inst: &MergeInstance, frame: usize, labels: &[bool], bins: &Binning) -> HeadingTarget {
    let from = inst.frames[frame].m.position;
    let target = if labels[frame] {
        inst.triple.merge_point
    } else {
        first_feasible_after(labels, frame)
            .map(|ts| inst.frames[ts].m.position)
            .unwrap_or(inst.triple.merge_point)
    };
    let rel = bins.clip(relative_bearing(inst, from, target));
    HeadingTarget { relative_deg: rel, class: bins.class_of(rel) }
}
