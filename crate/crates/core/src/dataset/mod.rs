//! NGSIM-style trajectory ingestion, merge extraction, labeling and splits.

pub mod features;
pub mod ingest;
pub mod labels;
pub mod merges;
pub mod pipeline;
pub mod split;
pub mod synth;

pub use features::{build_feature_vector, FEATURE_DIM, FEATURE_NAMES};
pub use ingest::{parse_trajectory_csv, parse_trajectory_reader, ColumnMapping, ParsedTrajectories, TrajectoryFrame};
pub use labels::{Binning, LabelConfig};
pub use merges::{MergeInstance, MergeTriple, Rejection, SceneFrame};
pub use pipeline::{load_dataset, run_extract, ExtractConfig, ExtractReport, LabeledSample, LoadedDataset};
pub use split::{split_instances, DatasetSplit, Subset};
