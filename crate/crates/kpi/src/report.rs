//! Writes the evaluation artifacts as CSV files plus a JSON summary.
//!
//! Files, all with a header row whose column names carry units:
//! `accel_ecdf.csv` (executed, per vehicle), `recommended_accel_ecdf.csv`,
//! `rtt.csv`, `maneuver.csv`, `trajectory_overlay.csv`, `kpi_records.csv`,
//! `reward_histogram.csv` and `summary.json`. An artifact whose input is
//! missing is skipped and the reason goes into the summary notes.

use lmo_core::Projection;
use lmo_learn::dqn::{reward_histogram, top_quartile_mass, RewardRecord, RewardVariant, HISTOGRAM_BINS};
use lmo_orchestrator::wire::{Message, RecommendationMsg};
use lmo_sim::log::{LogEvent, TruthRecord};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

use crate::ecdf::{compute_ecdf, fraction_in};
use crate::maneuver::{compute_maneuver, Maneuver};
use crate::rtt::compute_rtt;
use crate::{KpiError, KpiKind, KpiRecord};

#[derive(Debug, Clone, Default)]
pub struct ReportInputs {
    pub log: Option<Vec<LogEvent>>,
    pub rewards: Option<Vec<RewardRecord>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Headline {
    /// Share of recommended waypoint accelerations for merging vehicles in
    /// [0, 2] m/s^2.
    pub recommended_accel_in_0_2: Option<f64>,
    /// Same with |accel|.
    pub recommended_abs_accel_in_0_2: Option<f64>,
    /// Share of executed |accel| of merging vehicles over their manoeuvre.
    pub executed_abs_accel_in_0_2: Option<f64>,
    pub rtt_mean_ms: Option<f64>,
    pub rtt_samples: usize,
    pub rtt_unmatched: usize,
    pub merges_completed: usize,
    pub violations: usize,
    /// Per variant, share of reward mass in the top quarter of bins.
    pub reward_top_quartile: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportSummary {
    pub scenario: Option<String>,
    pub headline: Headline,
    pub files: Vec<String>,
    pub notes: Vec<String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> KpiError + '_ {
    move |e| KpiError::Io(path.display().to_string(), e)
}

/// Reads the reward CSV written by DQN training.
pub fn read_reward_log(path: &Path) -> Result<Vec<RewardRecord>, KpiError> {
    let mut rdr = csv::Reader::from_path(path)?;
    Ok(rdr.deserialize().collect::<Result<_, _>>()?)
}

fn merging_vehicles(events: &[LogEvent]) -> Vec<String> {
    events
        .iter()
        .find_map(|e| match e {
            LogEvent::ScenarioStart { merging, .. } => Some(merging.clone()),
            _ => None,
        })
        .unwrap_or_default()
}

fn scenario_id(events: &[LogEvent]) -> Option<String> {
    events.iter().find_map(|e| match e {
        LogEvent::ScenarioStart { scenario, .. } => Some(scenario.clone()),
        _ => None,
    })
}

/// Every distinct recommendation emitted by the orchestrator, in order.
fn emitted_recommendations(events: &[LogEvent]) -> Vec<&RecommendationMsg> {
    let mut out: Vec<&RecommendationMsg> = Vec::new();
    for e in events {
        if let LogEvent::Sent { from, message: Message::Recommendation(r), .. } = e {
            if from == "orchestrator" && !out.iter().any(|o| o.recommendation_id == r.recommendation_id) {
                out.push(r);
            }
        }
    }
    out
}

fn ticks(events: &[LogEvent]) -> impl Iterator<Item = (i64, &Vec<TruthRecord>)> {
    events.iter().filter_map(|e| match e {
        LogEvent::VehicleStates { t_ms, states } => Some((*t_ms, states)),
        _ => None,
    })
}

/// Bumper gaps from the merging vehicle to its neighbours at each tick of
/// the manoeuvre, as (time, neighbour, gap).
fn gap_series(events: &[LogEvent], m: &Maneuver) -> Vec<(i64, String, f64)> {
    let mut out = Vec::new();
    for (t, states) in ticks(events).filter(|(t, _)| (m.start_ms - 100..=m.end_ms).contains(t)) {
        let Some(me) = states.iter().find(|s| s.id == m.vehicle) else { continue };
        for other in [&m.preceding, &m.following].into_iter().flatten() {
            if let Some(o) = states.iter().find(|s| &s.id == other) {
                out.push((t, other.clone(), (me.station - o.station).abs() - 0.5 * (me.length + o.length)));
            }
        }
    }
    out
}

/// Flat KPI records for one log.
pub fn kpi_records(events: &[LogEvent]) -> Vec<KpiRecord> {
    let scenario = scenario_id(events).unwrap_or_default();
    let rec = |kind, value, timestamp_ms, vehicle_id: &str| KpiRecord { kind, value, timestamp_ms, vehicle_id: vehicle_id.to_string(), scenario_id: scenario.clone() };
    let mut out = Vec::new();
    for (t, states) in ticks(events) {
        out.extend(states.iter().map(|s| rec(KpiKind::AccelMps2, s.accel, t, &s.id)));
    }
    for s in compute_rtt(events).samples {
        out.push(rec(KpiKind::RttMs, s.rtt_ms as f64, s.trigger_received_ms, &s.target));
    }
    for v in merging_vehicles(events) {
        let Some(m) = compute_maneuver(events, &v) else { continue };
        out.push(rec(KpiKind::ManeuverLengthS, m.length_s, m.end_ms, &v));
        out.push(rec(KpiKind::ManeuverLengthM, m.length_m, m.end_ms, &v));
        for (t, other, g) in gap_series(events, &m) {
            out.push(rec(KpiKind::InterVehicleDistanceM, g, t, &other));
        }
    }
    out.retain(|r| r.value.is_finite());
    out
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Writer<'_> {
    fn csv(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), KpiError> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush().map_err(io_err(&path))?;
        self.files.push(name.to_string());
        Ok(())
    }
}

fn ecdf_rows(by_vehicle: &BTreeMap<String, Vec<f64>>) -> Result<Vec<Vec<String>>, KpiError> {
    let mut rows = Vec::new();
    for (v, values) in by_vehicle {
        if values.is_empty() {
            continue;
        }
        for (x, f) in compute_ecdf(values)? {
            rows.push(vec![v.clone(), x.to_string(), f.to_string()]);
        }
    }
    Ok(rows)
}

fn log_artifacts(events: &[LogEvent], w: &mut Writer<'_>, summary: &mut ReportSummary) -> Result<(), KpiError> {
    let merging = merging_vehicles(events);
    let h = &mut summary.headline;
    h.violations = events.iter().filter(|e| matches!(e, LogEvent::Violation { .. })).count();

    let mut executed: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (_, states) in ticks(events) {
        for s in states {
            executed.entry(s.id.clone()).or_default().push(s.accel);
        }
    }
    if executed.is_empty() {
        summary.notes.push("log has no vehicle states; nothing to report".into());
        return Ok(());
    }
    w.csv("accel_ecdf.csv", &["vehicle", "accel_mps2", "ecdf"], ecdf_rows(&executed)?)?;

    let recs = emitted_recommendations(events);
    let mut recommended: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in &recs {
        recommended.entry(r.target_uuid.clone()).or_default().extend(r.waypoints.iter().map(|wp| wp.acceleration_mps2));
    }
    let merging_recommended: Vec<f64> = merging.iter().flat_map(|m| recommended.get(m).cloned().unwrap_or_default()).collect();
    if merging_recommended.is_empty() {
        summary.notes.push("no recommendations for a merging vehicle; recommended acceleration ECDF skipped".into());
    } else {
        h.recommended_accel_in_0_2 = Some(fraction_in(&merging_recommended, 0.0, 2.0));
        let abs: Vec<f64> = merging_recommended.iter().map(|a| a.abs()).collect();
        h.recommended_abs_accel_in_0_2 = Some(fraction_in(&abs, 0.0, 2.0));
        w.csv("recommended_accel_ecdf.csv", &["vehicle", "accel_mps2", "ecdf"], ecdf_rows(&recommended)?)?;
    }

    let rtt = compute_rtt(events);
    h.rtt_samples = rtt.samples.len();
    h.rtt_unmatched = rtt.unmatched.len();
    if !rtt.samples.is_empty() {
        h.rtt_mean_ms = Some(rtt.samples.iter().map(|s| s.rtt_ms as f64).sum::<f64>() / rtt.samples.len() as f64);
    }
    let mut rows: Vec<Vec<String>> = rtt
        .samples
        .iter()
        .map(|s| {
            vec![
                s.recommendation_id.clone(),
                s.target.clone(),
                s.trigger_uuid.clone(),
                s.trigger_sent_ms.to_string(),
                s.trigger_received_ms.to_string(),
                s.feedback_received_ms.to_string(),
                s.rtt_ms.to_string(),
                s.injected_ms.to_string(),
                "matched".into(),
            ]
        })
        .collect();
    rows.extend(rtt.unmatched.iter().map(|id| {
        let mut row = vec![String::new(); 9];
        row[0] = id.clone();
        row[8] = "unmatched".into();
        row
    }));
    w.csv(
        "rtt.csv",
        &["recommendation_id", "target", "trigger_uuid", "trigger_sent_ms", "trigger_received_ms", "feedback_received_ms", "rtt_ms", "injected_delay_ms", "status"],
        rows,
    )?;

    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let maneuvers: Vec<Maneuver> = merging.iter().filter_map(|m| compute_maneuver(events, m)).collect();
    h.merges_completed = maneuvers.iter().filter(|m| m.completed).count();
    let mut exec_abs = Vec::new();
    for m in &maneuvers {
        for (t, states) in ticks(events) {
            if (m.start_ms..=m.end_ms).contains(&t) {
                exec_abs.extend(states.iter().filter(|s| s.id == m.vehicle).map(|s| s.accel.abs()));
            }
        }
    }
    if !exec_abs.is_empty() {
        h.executed_abs_accel_in_0_2 = Some(fraction_in(&exec_abs, 0.0, 2.0));
    }
    w.csv(
        "maneuver.csv",
        &["vehicle", "start_ms", "end_ms", "completed", "length_s", "length_m", "preceding", "following", "min_gap_preceding_m", "min_gap_following_m"],
        maneuvers
            .iter()
            .map(|m| {
                vec![
                    m.vehicle.clone(),
                    m.start_ms.to_string(),
                    m.end_ms.to_string(),
                    m.completed.to_string(),
                    m.length_s.to_string(),
                    m.length_m.to_string(),
                    m.preceding.clone().unwrap_or_default(),
                    m.following.clone().unwrap_or_default(),
                    opt(m.min_gap_preceding_m),
                    opt(m.min_gap_following_m),
                ]
            })
            .collect(),
    )?;

    let origin = events.iter().find_map(|e| match e {
        LogEvent::ScenarioStart { origin, .. } => Some(*origin),
        _ => None,
    });
    match origin.map(Projection::new) {
        Some(Ok(proj)) => {
            let mut rows = Vec::new();
            for (t, states) in ticks(events) {
                for s in states.iter().filter(|s| merging.contains(&s.id)) {
                    let ll = proj.unproject(lmo_core::Vec2::new(s.x, s.y));
                    rows.push(vec!["executed".into(), s.id.clone(), s.plan.clone().unwrap_or_default(), t.to_string(), ll.lat.to_string(), ll.lon.to_string()]);
                }
            }
            for r in recs.iter().filter(|r| merging.contains(&r.target_uuid)) {
                for wp in &r.waypoints {
                    rows.push(vec![
                        "recommended".into(),
                        r.target_uuid.clone(),
                        r.recommendation_id.clone(),
                        wp.timestamp_ms.to_string(),
                        wp.lat.to_string(),
                        wp.lon.to_string(),
                    ]);
                }
            }
            w.csv("trajectory_overlay.csv", &["role", "vehicle", "recommendation_id", "t_ms", "lat_deg", "lon_deg"], rows)?;
        }
        _ => summary.notes.push("log has no usable projection origin; trajectory overlay skipped".into()),
    }

    let records = kpi_records(events);
    w.csv(
        "kpi_records.csv",
        &["kind", "value", "unit", "timestamp_ms", "vehicle_id", "scenario_id"],
        records
            .iter()
            .map(|r| vec![r.kind.name().into(), r.value.to_string(), r.kind.unit().into(), r.timestamp_ms.to_string(), r.vehicle_id.clone(), r.scenario_id.clone()])
            .collect(),
    )?;
    Ok(())
}

/// Writes every artifact the inputs allow into `out_dir` and returns the
/// summary, which is also written as `summary.json`.
pub fn report(inputs: &ReportInputs, out_dir: &Path) -> Result<ReportSummary, KpiError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut w = Writer { dir: out_dir, files: Vec::new() };
    let mut summary = ReportSummary::default();

    match &inputs.log {
        Some(events) => {
            summary.scenario = scenario_id(events);
            log_artifacts(events, &mut w, &mut summary)?;
        }
        None => summary.notes.push("no simulation log given; log artifacts skipped".into()),
    }

    match &inputs.rewards {
        Some(rewards) if !rewards.is_empty() => {
            let mut rows = Vec::new();
            for variant in [RewardVariant::Positive, RewardVariant::Negative] {
                let values: Vec<f64> = rewards.iter().filter(|r| r.variant == variant).map(|r| r.reward).collect();
                if values.is_empty() {
                    continue;
                }
                let hist = reward_histogram(&values, variant, HISTOGRAM_BINS);
                summary.headline.reward_top_quartile.insert(variant.name().into(), top_quartile_mass(&hist));
                rows.extend(hist.iter().map(|b| vec![variant.name().into(), b.bin_low.to_string(), b.bin_high.to_string(), b.count.to_string()]));
            }
            w.csv("reward_histogram.csv", &["variant", "reward_low", "reward_high", "count"], rows)?;
        }
        Some(_) => summary.notes.push("reward log is empty; reward histogram skipped".into()),
        None => summary.notes.push("no reward log given; reward histogram skipped".into()),
    }

    summary.files = w.files;
    summary.files.push("summary.json".into());
    let path = out_dir.join("summary.json");
    std::fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n").map_err(io_err(&path))?;
    Ok(summary)
}
