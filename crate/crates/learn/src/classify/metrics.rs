use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeSet, HashMap};

use super::data::Dataset;
use super::model::ModelSpec;
use super::ClassifyError;

/// Exact-match fraction.
pub fn accuracy_score(predictions: &[usize], labels: &[usize]) -> Result<f64, ClassifyError> {
    if predictions.len() != labels.len() {
        return Err(ClassifyError::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(ClassifyError::Shape("no labels to score".into()));
    }
    let hits = predictions.iter().zip(labels).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Assigns each group (merge instance) to one of `folds` folds: groups are
/// shuffled with `seed` and dealt round-robin.
pub fn group_folds(groups: &[u64], folds: usize, seed: u64) -> Vec<usize> {
    let mut unique: Vec<u64> = groups.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    unique.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let fold_of: HashMap<u64, usize> = unique.iter().enumerate().map(|(i, &g)| (g, i % folds)).collect();
    groups.iter().map(|g| fold_of[g]).collect()
}

/// Per-fold held-out accuracy with instance-atomic folds.
pub fn cross_val_score(spec: &ModelSpec, data: &Dataset, folds: usize, seed: u64) -> Result<Vec<f64>, ClassifyError> {
    if folds < 2 {
        return Err(ClassifyError::Param("cross-validation needs at least 2 folds".into()));
    }
    let n_groups = data.groups.iter().collect::<BTreeSet<_>>().len();
    if n_groups < folds {
        return Err(ClassifyError::Param(format!("{n_groups} groups cannot fill {folds} folds")));
    }
    let assignment = group_folds(&data.groups, folds, seed);
    (0..folds)
        .map(|f| {
            let train: Vec<usize> = (0..data.len()).filter(|&i| assignment[i] != f).collect();
            let test: Vec<usize> = (0..data.len()).filter(|&i| assignment[i] == f).collect();
            let model = spec.fit(&data.subset(&train), seed)?;
            let held = data.subset(&test);
            accuracy_score(&model.predict(&held), &held.y)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy_score(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy_score(&[0, 0], &[1, 1]).unwrap(), 0.0);
        let p = [1, 1, 1, 1, 1, 1, 1, 1, 1, 0];
        assert!((accuracy_score(&p, &[1; 10]).unwrap() - 0.9).abs() < 1e-15);
        assert!(accuracy_score(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn folds_keep_groups_together() {
        let groups: Vec<u64> = (0..50).map(|i| i / 5).collect();
        let f = group_folds(&groups, 3, 11);
        for i in 0..50 {
            for j in 0..50 {
                if groups[i] == groups[j] {
                    assert_eq!(f[i], f[j]);
                }
            }
        }
        assert_eq!(f, group_folds(&groups, 3, 11));
    }

    #[test]
    fn cross_validation_runs_each_fold() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
        let y = (0..40).map(|i| (i >= 20) as usize).collect();
        let d = Dataset::from_rows(&rows, y, 2).unwrap().with_groups((0..40).map(|i| i / 4).collect()).unwrap();
        let scores = cross_val_score(&ModelSpec::DecisionTree { max_depth: Some(2) }, &d, 5, 1).unwrap();
        assert_eq!(scores.len(), 5);
        assert!(scores.iter().all(|&s| s >= 0.75));
    }
}
