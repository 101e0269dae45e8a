//! Decision tree, random forest, k-nearest-neighbour and gradient boosting
//! classifiers, with the sweep and scoring helpers used to compare them.

pub mod data;
pub mod forest;
pub mod gbm;
pub mod knn;
pub mod metrics;
pub mod model;
pub mod reference;
pub mod sweep;
pub mod tree;

pub use data::{Dataset, Task};
pub use forest::{ForestParams, RandomForest};
pub use gbm::{GbmParams, GradientBoosting};
pub use knn::Knn;
pub use metrics::{accuracy_score, cross_val_score};
pub use model::{Algorithm, Model, ModelFile, ModelSpec};
pub use sweep::{sweep, SweepGrids, SweepPoint, SweepReport};
pub use tree::{ClassificationTree, RegressionTree, TreeParams};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("i/o error on {0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_trainable(data: &Dataset) -> Result<(), ClassifyError> {
    if data.len() < 2 {
        return Err(ClassifyError::Param(format!("need at least 2 samples, got {}", data.len())));
    }
    Ok(())
}
