//! End-to-end extraction: CSV → merge instances → labeled samples + split.

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use super::features::build_feature_vector;
use super::ingest::{group_by_vehicle, parse_trajectory_csv, ColumnMapping, ParsedTrajectories};
use super::labels::{derive_target_acceleration, derive_target_heading, feasibility_labels, LabelConfig};
use super::merges::{cmp_instances, detect_lane_merges, extract_merge_instance, MergeInstance, Rejection, TrajectoryIndex};
use super::split::{split_instances, DatasetSplit};
use crate::error::DatasetError;

pub const SAMPLES_FILE: &str = "samples.jsonl";
pub const INSTANCES_FILE: &str = "instances.jsonl";
pub const SPLIT_FILE: &str = "splits.json";
pub const REPORT_FILE: &str = "extract_report.json";

/// Share of retained instances that must be safe at their own merge frame
/// before the extraction is flagged as suspicious.
pub const MERGE_FRAME_SAFE_MIN: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractConfig {
    pub columns: ColumnMapping,
    pub labels: LabelConfig,
}

impl ExtractConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub instance_id: u64,
    pub frame_index: usize,
    pub features: Vec<f64>,
    pub merge_feasible: bool,
    pub accel_class: usize,
    pub heading_class: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExtractReport {
    pub rows_read: usize,
    pub rows_skipped: usize,
    pub vehicles: usize,
    pub lane_changes: usize,
    pub retained: usize,
    pub rejections: BTreeMap<String, usize>,
    pub samples: usize,
    pub merge_frame_safe_fraction: f64,
    pub flagged: bool,
    pub split: Option<SplitCounts>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub test: usize,
    pub validation: usize,
}

pub struct Extraction {
    pub instances: Vec<MergeInstance>,
    pub samples: Vec<LabeledSample>,
    pub report: ExtractReport,
}

/// Labels every frame of one instance.
pub fn label_instance(inst: &MergeInstance, labels: &LabelConfig) -> Vec<LabeledSample> {
    let feasible = feasibility_labels(inst, &labels.safety);
    (0..inst.frames.len())
        .map(|i| LabeledSample {
            instance_id: inst.instance_id,
            frame_index: i,
            features: build_feature_vector(inst, i, labels.time_to_merge_cap_s).to_vec(),
            merge_feasible: feasible[i],
            accel_class: derive_target_acceleration(inst, i, &feasible, &labels.acceleration_bins).class,
            heading_class: derive_target_heading(inst, i, &feasible, &labels.heading_bins).class,
        })
        .collect()
}

/// Runs detection, extraction and labeling over already-parsed frames.
/// Instance ids are assigned after sorting, so the result does not depend
/// on thread scheduling.
pub fn extract_from_frames(parsed: &ParsedTrajectories, cfg: &ExtractConfig) -> Extraction {
    let tracks = group_by_vehicle(&parsed.frames);
    let index = TrajectoryIndex::new(&tracks);
    let axis = cfg.columns.lane_axis;
    let per_vehicle: Vec<(usize, Vec<Result<MergeInstance, Rejection>>)> = tracks
        .par_iter()
        .map(|t| {
            let events = detect_lane_merges(t);
            let n = events.len();
            (n, events.iter().map(|e| extract_merge_instance(e, &index, axis)).collect())
        })
        .collect();

    let mut report = ExtractReport {
        rows_read: parsed.rows_read,
        rows_skipped: parsed.skipped,
        vehicles: tracks.len(),
        ..Default::default()
    };
    let mut rejections: BTreeMap<Rejection, usize> = BTreeMap::new();
    let mut instances = Vec::new();
    for (n, results) in per_vehicle {
        report.lane_changes += n;
        for r in results {
            match r {
                Ok(inst) => instances.push(inst),
                Err(why) => *rejections.entry(why).or_default() += 1,
            }
        }
    }
    instances.sort_by(cmp_instances);
    for (i, inst) in instances.iter_mut().enumerate() {
        inst.instance_id = i as u64;
    }
    report.rejections = rejections
        .into_iter()
        .map(|(k, v)| (serde_json::to_value(k).ok().and_then(|s| s.as_str().map(String::from)).unwrap_or_default(), v))
        .collect();
    report.retained = instances.len();

    let samples: Vec<LabeledSample> =
        instances.par_iter().flat_map_iter(|inst| label_instance(inst, &cfg.labels)).collect();
    report.samples = samples.len();

    let safe_at_merge = samples
        .iter()
        .filter(|s| s.frame_index == super::merges::FRAMES_BEFORE && s.merge_feasible)
        .count();
    report.merge_frame_safe_fraction =
        if instances.is_empty() { 0.0 } else { safe_at_merge as f64 / instances.len() as f64 };
    report.flagged = !instances.is_empty() && report.merge_frame_safe_fraction < MERGE_FRAME_SAFE_MIN;
    if report.flagged {
        log::warn!(
            "only {:.1}% of retained instances are safe at their merge frame",
            100.0 * report.merge_frame_safe_fraction
        );
    }
    Extraction { instances, samples, report }
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| DatasetError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| DatasetError::io(path, e))?;
    }
    w.flush().map_err(|e| DatasetError::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| DatasetError::io(path, e))?;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(|e| DatasetError::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| DatasetError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T, DatasetError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Parses `input`, extracts and labels instances, splits them with `seed`
/// and writes samples, instances, split and report into `out_dir`.
/// With fewer than ten instances the outputs are still written, without a
/// split, and the split error is returned.
pub fn run_extract(
    input: impl AsRef<Path>,
    cfg: &ExtractConfig,
    out_dir: impl AsRef<Path>,
    seed: u64,
) -> Result<ExtractReport, DatasetError> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| DatasetError::io(out_dir, e))?;
    let parsed = parse_trajectory_csv(input, &cfg.columns)?;
    let Extraction { instances, samples, mut report } = extract_from_frames(&parsed, cfg);
    let ids: Vec<u64> = instances.iter().map(|i| i.instance_id).collect();
    let split = split_instances(&ids, seed);
    if let Ok(s) = &split {
        report.split = Some(SplitCounts { train: s.train.len(), test: s.test.len(), validation: s.validation.len() });
        write_json(out_dir.join(SPLIT_FILE), s)?;
    }
    write_jsonl(out_dir.join(SAMPLES_FILE), &samples)?;
    write_jsonl(out_dir.join(INSTANCES_FILE), &instances)?;
    write_json(out_dir.join(REPORT_FILE), &report)?;
    split.map(|_| report)
}

/// Extracted data set as read back from an output directory.
pub struct LoadedDataset {
    pub samples: Vec<LabeledSample>,
    pub instances: Vec<MergeInstance>,
    pub split: DatasetSplit,
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<LoadedDataset, DatasetError> {
    let dir = dir.as_ref();
    Ok(LoadedDataset {
        samples: read_jsonl(dir.join(SAMPLES_FILE))?,
        instances: read_jsonl(dir.join(INSTANCES_FILE))?,
        split: read_json(dir.join(SPLIT_FILE))?,
    })
}
