//! Slow, direct implementations used to cross-check the fast learners.

use super::data::{argmax_lowest, Dataset};
use super::tree::{is_better, Split};

fn weighted_gini(data: &Dataset, rows: &[usize]) -> f64 {
    let n = rows.len() as f64;
    if n == 0.0 {
        return 0.0;
    }
    let mut counts = vec![0.0; data.n_classes];
    for &r in rows {
        counts[data.y[r]] += 1.0;
    }
    n * (1.0 - counts.iter().map(|c| (c / n) * (c / n)).sum::<f64>())
}

/// Splits of the exhaustively searched CART tree in preorder, as
/// (depth, split) with `None` for leaves. Every (feature, threshold) pair is
/// scored from scratch.
pub fn exhaustive_tree(data: &Dataset, max_depth: usize) -> Vec<(u32, Option<Split>)> {
    let mut out = Vec::new();
    let rows: Vec<usize> = (0..data.len()).collect();
    grow(data, &rows, 0, max_depth, &mut out);
    out
}

fn grow(data: &Dataset, rows: &[usize], depth: usize, max_depth: usize, out: &mut Vec<(u32, Option<Split>)>) {
    let id = out.len();
    out.push((depth as u32, None));
    let first = data.y[rows[0]];
    if depth >= max_depth || rows.len() < 2 || rows.iter().all(|&r| data.y[r] == first) {
        return;
    }
    let mut best: Option<(f64, Split)> = None;
    for j in 0..data.n_features() {
        let mut values: Vec<f64> = rows.iter().map(|&r| data.value(r, j)).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let t = if mid < w[1] { mid } else { w[0] };
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| data.value(i, j) <= t);
            let score = weighted_gini(data, &l) + weighted_gini(data, &r);
            if best.as_ref().is_none_or(|(s, _)| is_better(score, *s)) {
                best = Some((score, Split { feature: j, threshold: t }));
            }
        }
    }
    let Some((_, split)) = best else { return };
    out[id].1 = Some(split);
    let (l, r): (Vec<usize>, Vec<usize>) =
        rows.iter().partition(|&&i| data.value(i, split.feature) <= split.threshold);
    grow(data, &l, depth + 1, max_depth, out);
    grow(data, &r, depth + 1, max_depth, out);
}

/// k-NN by standardizing, computing every distance, and sorting all of them.
pub fn brute_force_knn(train: &Dataset, query: &[f64], k: usize) -> usize {
    let d = train.n_features();
    let n = train.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| (0..train.len()).map(|i| train.value(i, j)).sum::<f64>() / n).collect();
    let sd: Vec<f64> = (0..d)
        .map(|j| {
            let v = (0..train.len()).map(|i| (train.value(i, j) - mean[j]).powi(2)).sum::<f64>() / n;
            if v > 0.0 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let z = |x: &[f64]| -> Vec<f64> { (0..d).map(|j| (x[j] - mean[j]) / sd[j]).collect() };
    let q = z(query);
    let mut all: Vec<(f64, usize)> = (0..train.len())
        .map(|i| {
            let p = z(train.row(i));
            (p.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum(), i)
        })
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut votes = vec![0usize; train.n_classes];
    for &(_, i) in &all[..k] {
        votes[train.y[i]] += 1;
    }
    argmax_lowest(&votes)
}
