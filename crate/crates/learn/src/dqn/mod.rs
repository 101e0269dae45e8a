//! Dueling DQN merge agent: environment, network, training and rollout.

pub mod env;
pub mod eval;
pub mod network;
pub mod optim;
pub mod recommend;
pub mod train;

pub use env::{
    action_components, dataset_episode, distance_reward, reward_negative, reward_positive, synthetic_episode,
    EpisodeOutcome, EpisodeSpec, LaneVehicle, MergeEnv, RewardVariant, RlState, SynthEpisodeConfig, Violation,
    N_ACTIONS, STATE_DIM,
};
pub use eval::{evaluate, EpisodePool, EvalReport};
pub use network::{DuelingNetwork, NetShape};
pub use optim::{Optimizer, OptimizerKind};
pub use recommend::{recommend_trajectory, MergeSnapshot, NoRecommendation, RecommendationSet, TrajectoryModel};
pub use train::{
    reward_histogram, run_training, synthetic_stream, top_quartile_mass, train_step, DqnConfig, HistogramBin, HISTOGRAM_BINS,
    ReplayBuffer, RewardRecord, TrainingResult, Transition,
};

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DqnError {
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("degenerate episode: {0}")]
    DegenerateEpisode(String),
    #[error("step called on a finished episode")]
    EpisodeOver,
    #[error("model error: {0}")]
    Model(String),
    #[error("i/o error on {0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub const DQN_SCHEMA_VERSION: u32 = 1;

/// Versioned on-disk form of a trained agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqnModelFile {
    pub schema_version: u32,
    pub variant: RewardVariant,
    pub seed: u64,
    pub config: DqnConfig,
    pub network: DuelingNetwork,
}

impl DqnModelFile {
    pub fn new(variant: RewardVariant, seed: u64, config: DqnConfig, network: DuelingNetwork) -> Self {
        Self { schema_version: DQN_SCHEMA_VERSION, variant, seed, config, network }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DqnError> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| DqnError::Io(path.display().to_string(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DqnError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| DqnError::Io(path.display().to_string(), e))?;
        let file: DqnModelFile = serde_json::from_str(&text)?;
        if file.schema_version != DQN_SCHEMA_VERSION {
            return Err(DqnError::Model(format!("unsupported schema {}", file.schema_version)));
        }
        // re-validate the layout through the network's own loader
        let network = DuelingNetwork::from_json(&serde_json::to_string(&file.network)?)?;
        Ok(Self { network, ..file })
    }
}
