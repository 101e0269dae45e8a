//! Instance-atomic 70/20/10 train/test/validation split.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::error::DatasetError;

pub const MIN_INSTANCES: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub seed: u64,
    pub train: Vec<u64>,
    pub test: Vec<u64>,
    pub validation: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    Train,
    Test,
    Validation,
}

impl DatasetSplit {
    pub fn subset_of(&self, instance_id: u64) -> Option<Subset> {
        if self.train.binary_search(&instance_id).is_ok() {
            Some(Subset::Train)
        } else if self.test.binary_search(&instance_id).is_ok() {
            Some(Subset::Test)
        } else if self.validation.binary_search(&instance_id).is_ok() {
            Some(Subset::Validation)
        } else {
            None
        }
    }

    pub fn ids(&self, subset: Subset) -> &[u64] {
        match subset {
            Subset::Train => &self.train,
            Subset::Test => &self.test,
            Subset::Validation => &self.validation,
        }
    }
}

/// Shuffles the distinct instance ids with a seeded RNG and cuts them
/// 70/20/10 (train/test/validation), rounding the first two cuts to the
/// nearest instance.
pub fn split_instances(instance_ids: &[u64], seed: u64) -> Result<DatasetSplit, DatasetError> {
    let mut ids: Vec<u64> = instance_ids.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let n = ids.len();
    if n < MIN_INSTANCES {
        return Err(DatasetError::TooFewInstances { needed: MIN_INSTANCES, got: n });
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (0.7 * n as f64).round() as usize;
    let n_test = ((0.2 * n as f64).round() as usize).min(n - n_train);
    let mut train = ids[..n_train].to_vec();
    let mut test = ids[n_train..n_train + n_test].to_vec();
    let mut validation = ids[n_train + n_test..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    validation.sort_unstable();
    Ok(DatasetSplit { seed, train, test, validation })
}
