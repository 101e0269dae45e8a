use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::data::{argmax_lowest, Dataset};
use super::ClassifyError;

/// k-nearest-neighbour classifier on standardized features. The training
/// set is stored already standardized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub n_classes: usize,
    pub n_features: usize,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub points: Vec<f64>,
    pub labels: Vec<usize>,
}

#[derive(PartialEq)]
struct Candidate(f64, usize);

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl Knn {
    pub fn fit(data: &Dataset, k: usize) -> Result<Self, ClassifyError> {
        if k == 0 || k > data.len() {
            return Err(ClassifyError::Param(format!("k = {k} with {} training rows", data.len())));
        }
        let d = data.n_features();
        let n = data.len() as f64;
        let mut mean = vec![0.0; d];
        for r in data.rows() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in data.rows() {
            for j in 0..d {
                var[j] += (r[j] - mean[j]).powi(2);
            }
        }
        let scale: Vec<f64> = var.iter().map(|v| (v / n).sqrt()).map(|s| if s > 0.0 { s } else { 1.0 }).collect();
        let mut points = Vec::with_capacity(data.len() * d);
        for r in data.rows() {
            points.extend(r.iter().enumerate().map(|(j, v)| (v - mean[j]) / scale[j]));
        }
        Ok(Self { k, n_classes: data.n_classes, n_features: d, mean, scale, points, labels: data.y.clone() })
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().enumerate().map(|(j, v)| (v - self.mean[j]) / self.scale[j]).collect()
    }

    /// Indices of the `k` nearest training rows, nearest first; equal
    /// distances go to the lower index.
    pub fn neighbors(&self, x: &[f64], k: usize) -> Vec<usize> {
        let q = self.standardize(x);
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        for (i, p) in self.points.chunks_exact(self.n_features).enumerate() {
            let dist: f64 = p.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
            let c = Candidate(dist, i);
            if heap.len() < k {
                heap.push(c);
            } else if c < *heap.peek().unwrap() {
                heap.pop();
                heap.push(c);
            }
        }
        heap.into_sorted_vec().into_iter().map(|c| c.1).collect()
    }

    fn vote(&self, neighbors: &[usize]) -> usize {
        let mut votes = vec![0usize; self.n_classes];
        for &i in neighbors {
            votes[self.labels[i]] += 1;
        }
        argmax_lowest(&votes)
    }

    pub fn predict_row(&self, x: &[f64]) -> usize {
        self.vote(&self.neighbors(x, self.k))
    }

    pub fn predict(&self, data: &Dataset) -> Vec<usize> {
        data.rows().collect::<Vec<_>>().par_iter().map(|r| self.predict_row(r)).collect()
    }

    /// Accuracy for every k in `ks` from one neighbour search per row.
    pub fn accuracy_for_ks(&self, data: &Dataset, ks: &[usize]) -> Vec<f64> {
        let k_max = ks.iter().copied().max().unwrap_or(1).min(self.labels.len());
        let hits: Vec<Vec<bool>> = data
            .rows()
            .zip(&data.y)
            .collect::<Vec<_>>()
            .par_iter()
            .map(|(x, &y)| {
                let nb = self.neighbors(x, k_max);
                ks.iter().map(|&k| self.vote(&nb[..k.min(nb.len())]) == y).collect()
            })
            .collect();
        let n = data.len().max(1) as f64;
        (0..ks.len()).map(|i| hits.iter().filter(|h| h[i]).count() as f64 / n).collect()
    }
}
