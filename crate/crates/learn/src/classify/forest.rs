use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{argmax_lowest, Dataset};
use super::tree::{mix, ClassificationTree, TreeParams};
use super::ClassifyError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    /// Off only for tests: every tree then sees the full training set.
    #[serde(default = "yes")]
    pub bootstrap: bool,
    /// Features per split; `None` means floor(sqrt(d)).
    #[serde(default)]
    pub max_features: Option<usize>,
}

fn yes() -> bool {
    true
}

impl ForestParams {
    pub fn new(n_estimators: usize, max_depth: Option<usize>) -> Self {
        Self { n_estimators, max_depth, bootstrap: true, max_features: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub n_classes: usize,
    pub trees: Vec<ClassificationTree>,
}

impl RandomForest {
    pub fn fit(data: &Dataset, params: ForestParams, seed: u64) -> Result<Self, ClassifyError> {
        if params.n_estimators == 0 {
            return Err(ClassifyError::Param("n_estimators must be at least 1".into()));
        }
        super::check_trainable(data)?;
        let d = data.n_features();
        let max_features = params.max_features.unwrap_or_else(|| ((d as f64).sqrt().floor() as usize).max(1));
        let n = data.len();
        let trees = (0..params.n_estimators)
            .into_par_iter()
            .map(|t| {
                let tree_seed = mix(seed, t as u64);
                let rows: Option<Vec<usize>> = params.bootstrap.then(|| {
                    let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
                    let mut r: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                    r.sort_unstable();
                    r
                });
                let tp = TreeParams { max_depth: params.max_depth, max_features: Some(max_features), seed: tree_seed };
                ClassificationTree::fit(data, rows.as_deref(), tp)
            })
            .collect();
        Ok(Self { n_classes: data.n_classes, trees })
    }

    /// Majority vote; ties go to the lower class.
    pub fn predict_row(&self, x: &[f64]) -> usize {
        let mut votes = vec![0usize; self.n_classes];
        for t in &self.trees {
            votes[t.predict_row(x)] += 1;
        }
        argmax_lowest(&votes)
    }

    pub fn predict(&self, data: &Dataset) -> Vec<usize> {
        data.rows().collect::<Vec<_>>().par_iter().map(|r| self.predict_row(r)).collect()
    }

    /// Accuracy of every (first-k-trees, depth) combination at once.
    /// `acc[e][d]` uses the first `estimators[e]` trees cut at depth `depths[d]`.
    pub fn staged_accuracy(&self, data: &Dataset, estimators: &[usize], depths: &[usize]) -> Vec<Vec<f64>> {
        let max_d = depths.iter().copied().max().unwrap_or(0);
        let k = self.n_classes;
        let correct: Vec<Vec<usize>> = data
            .rows()
            .zip(&data.y)
            .collect::<Vec<_>>()
            .par_iter()
            .map(|(x, &y)| {
                let mut hits = vec![0usize; estimators.len() * depths.len()];
                let mut votes = vec![0usize; (max_d + 1) * k];
                let mut path = vec![0usize; max_d + 1];
                let mut next = 0;
                for (t, tree) in self.trees.iter().enumerate() {
                    tree.path_classes(x, &mut path);
                    for (dd, &c) in path.iter().enumerate() {
                        votes[dd * k + c] += 1;
                    }
                    while next < estimators.len() && estimators[next] == t + 1 {
                        for (di, &depth) in depths.iter().enumerate() {
                            let v = &votes[depth * k..(depth + 1) * k];
                            if argmax_lowest(v) == y {
                                hits[next * depths.len() + di] += 1;
                            }
                        }
                        next += 1;
                    }
                }
                hits
            })
            .collect();
        let n = data.len().max(1) as f64;
        (0..estimators.len())
            .map(|e| {
                (0..depths.len())
                    .map(|di| correct.iter().map(|h| h[e * depths.len() + di]).sum::<usize>() as f64 / n)
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> Dataset {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![(i % 7) as f64, (i % 5) as f64, (i % 3) as f64]).collect();
        let y = (0..60).map(|i| usize::from(i % 7 > 3) + usize::from(i % 5 == 0)).collect();
        Dataset::from_rows(&rows, y, 3).unwrap()
    }

    #[test]
    fn one_tree_without_subsampling_is_the_plain_tree() {
        let d = data();
        let params = ForestParams { n_estimators: 1, max_depth: Some(4), bootstrap: false, max_features: Some(3) };
        let rf = RandomForest::fit(&d, params, 9).unwrap();
        let dt = ClassificationTree::fit(&d, None, TreeParams { max_depth: Some(4), ..Default::default() });
        assert_eq!(rf.predict(&d), dt.predict(&d));
    }

    #[test]
    fn vote_ties_go_to_lower_class() {
        let d = data();
        let mut rf = RandomForest::fit(&d, ForestParams::new(3, Some(0)), 1).unwrap();
        for (t, c) in rf.trees.iter_mut().zip([1, 1, 2]) {
            t.nodes[0].payload.class = c;
        }
        assert_eq!(rf.predict_row(&[0.0, 0.0, 0.0]), 1);
        rf.trees.pop();
        rf.trees[0].nodes[0].payload.class = 2;
        assert_eq!(rf.predict_row(&[0.0, 0.0, 0.0]), 1);
    }

    #[test]
    fn training_is_deterministic_and_staged_accuracy_matches() {
        let d = data();
        let a = RandomForest::fit(&d, ForestParams::new(5, None), 4).unwrap();
        let b = RandomForest::fit(&d, ForestParams::new(5, None), 4).unwrap();
        assert_eq!(a, b);
        let staged = a.staged_accuracy(&d, &[2, 5], &[1, 3]);
        for (e, &ne) in [2usize, 5].iter().enumerate() {
            for (di, &depth) in [1usize, 3].iter().enumerate() {
                let sub = RandomForest { n_classes: 3, trees: a.trees[..ne].to_vec() };
                let hits = d
                    .rows()
                    .zip(&d.y)
                    .filter(|(x, &y)| {
                        let mut votes = [0usize; 3];
                        for t in &sub.trees {
                            votes[t.predict_row_at_depth(x, depth)] += 1;
                        }
                        argmax_lowest(&votes) == y
                    })
                    .count();
                assert_eq!(staged[e][di], hits as f64 / d.len() as f64);
            }
        }
    }
}
