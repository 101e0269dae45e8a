use serde::{Deserialize, Serialize};
use std::path::Path;

use super::data::Dataset;
use super::forest::{ForestParams, RandomForest};
use super::gbm::{GbmParams, GradientBoosting};
use super::knn::Knn;
use super::tree::{ClassificationTree, TreeParams};
use super::{check_trainable, ClassifyError, Task};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Dt,
    Rf,
    Knn,
    Gbm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Rf, Algorithm::Dt, Algorithm::Knn, Algorithm::Gbm];

    pub fn display_name(self) -> &'static str {
        match self {
            Algorithm::Dt => "Decision Tree",
            Algorithm::Rf => "Random Forest",
            Algorithm::Knn => "K-Nearest Neighbours",
            Algorithm::Gbm => "Gradient Boosting",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "dt" => Ok(Algorithm::Dt),
            "rf" => Ok(Algorithm::Rf),
            "knn" => Ok(Algorithm::Knn),
            "gbm" => Ok(Algorithm::Gbm),
            _ => Err(format!("unknown algorithm {s:?}")),
        }
    }
}

/// Algorithm plus hyperparameters; everything needed to train a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum ModelSpec {
    DecisionTree { max_depth: Option<usize> },
    RandomForest { n_estimators: usize, max_depth: Option<usize> },
    Knn { k: usize },
    GradientBoosting { n_estimators: usize, max_depth: usize, learning_rate: f64 },
}

impl ModelSpec {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            ModelSpec::DecisionTree { .. } => Algorithm::Dt,
            ModelSpec::RandomForest { .. } => Algorithm::Rf,
            ModelSpec::Knn { .. } => Algorithm::Knn,
            ModelSpec::GradientBoosting { .. } => Algorithm::Gbm,
        }
    }

    pub fn fit(&self, data: &Dataset, seed: u64) -> Result<Model, ClassifyError> {
        Ok(match *self {
            ModelSpec::DecisionTree { max_depth } => {
                check_trainable(data)?;
                Model::DecisionTree(ClassificationTree::fit(data, None, TreeParams { max_depth, max_features: None, seed }))
            }
            ModelSpec::RandomForest { n_estimators, max_depth } => {
                Model::RandomForest(RandomForest::fit(data, ForestParams::new(n_estimators, max_depth), seed)?)
            }
            ModelSpec::Knn { k } => Model::Knn(Knn::fit(data, k)?),
            ModelSpec::GradientBoosting { n_estimators, max_depth, learning_rate } => Model::GradientBoosting(
                GradientBoosting::fit(data, GbmParams { n_estimators, max_depth, learning_rate })?,
            ),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    DecisionTree(ClassificationTree),
    RandomForest(RandomForest),
    Knn(Knn),
    GradientBoosting(GradientBoosting),
}

impl Model {
    pub fn predict_row(&self, x: &[f64]) -> usize {
        match self {
            Model::DecisionTree(m) => m.predict_row(x),
            Model::RandomForest(m) => m.predict_row(x),
            Model::Knn(m) => m.predict_row(x),
            Model::GradientBoosting(m) => m.predict_row(x),
        }
    }

    pub fn predict(&self, data: &Dataset) -> Vec<usize> {
        match self {
            Model::DecisionTree(m) => m.predict(data),
            Model::RandomForest(m) => m.predict(data),
            Model::Knn(m) => m.predict(data),
            Model::GradientBoosting(m) => m.predict(data),
        }
    }
}

/// Versioned on-disk model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub algorithm: Algorithm,
    pub task: Task,
    pub hyperparameters: ModelSpec,
    pub seed: u64,
    pub n_features: usize,
    pub model: Model,
}

impl ModelFile {
    pub fn new(task: Task, spec: ModelSpec, seed: u64, n_features: usize, model: Model) -> Self {
        Self {
            schema_version: MODEL_SCHEMA_VERSION,
            algorithm: spec.algorithm(),
            task,
            hyperparameters: spec,
            seed,
            n_features,
            model,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClassifyError> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| ClassifyError::Io(path.display().to_string(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClassifyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ClassifyError::Io(path.display().to_string(), e))?;
        let file: ModelFile = serde_json::from_str(&text)?;
        if file.schema_version != MODEL_SCHEMA_VERSION {
            return Err(ClassifyError::Param(format!("unsupported model schema {}", file.schema_version)));
        }
        Ok(file)
    }
}
