use serde::{Deserialize, Serialize};

use lmo_core::dataset::{LabeledSample, Subset};
use lmo_core::dataset::{Binning, DatasetSplit};

use super::ClassifyError;

/// The three prediction targets carried by every labeled sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Merge,
    Accel,
    Heading,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Merge, Task::Accel, Task::Heading];

    pub fn n_classes(self) -> usize {
        match self {
            Task::Merge => 2,
            Task::Accel => Binning::ACCELERATION.n_classes(),
            Task::Heading => Binning::HEADING.n_classes(),
        }
    }

    pub fn label(self, s: &LabeledSample) -> usize {
        match self {
            Task::Merge => s.merge_feasible as usize,
            Task::Accel => s.accel_class,
            Task::Heading => s.heading_class,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Merge => "merge",
            Task::Accel => "accel",
            Task::Heading => "heading",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "merge" => Ok(Task::Merge),
            "accel" | "acceleration" => Ok(Task::Accel),
            "heading" => Ok(Task::Heading),
            _ => Err(format!("unknown task {s:?}")),
        }
    }
}

/// Dense row-major feature matrix with class labels and a group id per row
/// (the merge instance the row came from).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Vec<f64>,
    n_features: usize,
    pub y: Vec<usize>,
    pub groups: Vec<u64>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(x: Vec<f64>, n_features: usize, y: Vec<usize>, n_classes: usize) -> Result<Self, ClassifyError> {
        if n_features == 0 || x.len() != y.len() * n_features {
            return Err(ClassifyError::Shape(format!(
                "{} values do not form {} rows of {} features",
                x.len(),
                y.len(),
                n_features
            )));
        }
        if let Some(&c) = y.iter().find(|&&c| c >= n_classes) {
            return Err(ClassifyError::Shape(format!("label {c} outside {n_classes} classes")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ClassifyError::Shape("non-finite feature value".into()));
        }
        let groups = (0..y.len() as u64).collect();
        Ok(Self { x, n_features, y, groups, n_classes })
    }

    pub fn from_rows(rows: &[Vec<f64>], y: Vec<usize>, n_classes: usize) -> Result<Self, ClassifyError> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(ClassifyError::Shape("ragged rows".into()));
        }
        Self::new(rows.concat(), d, y, n_classes)
    }

    pub fn with_groups(mut self, groups: Vec<u64>) -> Result<Self, ClassifyError> {
        if groups.len() != self.len() {
            return Err(ClassifyError::Shape("group vector length differs from row count".into()));
        }
        self.groups = groups;
        Ok(self)
    }

    /// Rows of `samples` whose instance belongs to `subset`.
    pub fn from_samples(
        samples: &[LabeledSample],
        split: &DatasetSplit,
        subset: Subset,
        task: Task,
    ) -> Result<Self, ClassifyError> {
        let rows: Vec<&LabeledSample> =
            samples.iter().filter(|s| split.subset_of(s.instance_id) == Some(subset)).collect();
        Self::from_sample_refs(&rows, task)
    }

    pub fn from_sample_refs(rows: &[&LabeledSample], task: Task) -> Result<Self, ClassifyError> {
        let d = rows.first().map_or(lmo_core::dataset::FEATURE_DIM, |s| s.features.len());
        let mut x = Vec::with_capacity(rows.len() * d);
        for s in rows {
            if s.features.len() != d {
                return Err(ClassifyError::Shape("ragged feature vectors".into()));
            }
            x.extend_from_slice(&s.features);
        }
        let y = rows.iter().map(|s| task.label(s)).collect();
        let groups = rows.iter().map(|s| s.instance_id).collect();
        Self::new(x, d, y, task.n_classes())?.with_groups(groups)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.x[i * self.n_features + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.x.chunks_exact(self.n_features)
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(idx.len() * self.n_features);
        for &i in idx {
            x.extend_from_slice(self.row(i));
        }
        Dataset {
            x,
            n_features: self.n_features,
            y: idx.iter().map(|&i| self.y[i]).collect(),
            groups: idx.iter().map(|&i| self.groups[i]).collect(),
            n_classes: self.n_classes,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &y in &self.y {
            c[y] += 1;
        }
        c
    }
}

/// Index of the largest count; ties go to the lowest class.
pub fn argmax_lowest<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
