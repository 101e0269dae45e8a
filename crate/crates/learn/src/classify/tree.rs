//! Greedy CART trees over presorted feature columns.
//!
//! The same builder grows classification trees (Gini) and the regression
//! trees used by gradient boosting (squared error). Every node remembers
//! its own prediction, so a tree grown to depth D also answers for any
//! shallower depth by stopping early; since no split decision depends on
//! the depth limit, that truncation equals a tree trained with the smaller
//! limit.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{argmax_lowest, Dataset};

/// Scores closer than this are treated as ties.
const TIE_EPS: f64 = 1e-9;

pub(crate) fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn mix(a: u64, b: u64) -> u64 {
    splitmix(a ^ splitmix(b))
}

pub(crate) fn is_better(score: f64, best: f64) -> bool {
    score < best - TIE_EPS * best.abs().max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node<P> {
    pub split: Option<Split>,
    pub left: u32,
    pub right: u32,
    pub depth: u32,
    pub payload: P,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPayload {
    /// Majority class of the node's training rows.
    pub class: usize,
    /// Sparse (class, fraction) pairs, only on leaves.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub distribution: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or unsplittable.
    pub max_depth: Option<usize>,
    /// Features examined per split; `None` examines all of them.
    pub max_features: Option<usize>,
    pub seed: u64,
}

/// Where the threshold goes: rows with `x <= threshold` go left.
fn threshold_between(a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    if mid < b {
        mid
    } else {
        a
    }
}

trait Criterion {
    type Stats: Clone;
    fn stats(&self, positions: &[u32]) -> Self::Stats;
    fn is_pure(&self, s: &Self::Stats) -> bool;
    /// Lower is better; `left`/`right` are cumulative stats of the two sides.
    fn score(&self, left: &Self::Stats, right: &Self::Stats) -> f64;
    fn move_left(&self, pos: u32, left: &mut Self::Stats, right: &mut Self::Stats);
    fn empty(&self) -> Self::Stats;
}

struct Gini<'a> {
    y: &'a [usize],
    n_classes: usize,
}

#[derive(Clone)]
struct Counts {
    counts: Vec<f64>,
    n: f64,
    sum_sq: f64,
}

impl Criterion for Gini<'_> {
    type Stats = Counts;
    fn empty(&self) -> Counts {
        Counts { counts: vec![0.0; self.n_classes], n: 0.0, sum_sq: 0.0 }
    }
    fn stats(&self, positions: &[u32]) -> Counts {
        let mut c = self.empty();
        for &p in positions {
            c.counts[self.y[p as usize]] += 1.0;
        }
        c.n = positions.len() as f64;
        c.sum_sq = c.counts.iter().map(|v| v * v).sum();
        c
    }
    fn is_pure(&self, s: &Counts) -> bool {
        s.counts.iter().filter(|&&c| c > 0.0).count() <= 1
    }
    fn score(&self, l: &Counts, r: &Counts) -> f64 {
        // n_l * gini_l + n_r * gini_r
        (l.n - l.sum_sq / l.n) + (r.n - r.sum_sq / r.n)
    }
    fn move_left(&self, pos: u32, l: &mut Counts, r: &mut Counts) {
        let c = self.y[pos as usize];
        l.sum_sq += 2.0 * l.counts[c] + 1.0;
        l.counts[c] += 1.0;
        l.n += 1.0;
        r.sum_sq -= 2.0 * r.counts[c] - 1.0;
        r.counts[c] -= 1.0;
        r.n -= 1.0;
    }
}

struct SquaredError<'a> {
    y: &'a [f64],
}

#[derive(Clone)]
struct Sums {
    n: f64,
    sum: f64,
    min: f64,
    max: f64,
}

impl Criterion for SquaredError<'_> {
    type Stats = Sums;
    fn empty(&self) -> Sums {
        Sums { n: 0.0, sum: 0.0, min: f64::INFINITY, max: f64::NEG_INFINITY }
    }
    fn stats(&self, positions: &[u32]) -> Sums {
        let mut s = self.empty();
        for &p in positions {
            let v = self.y[p as usize];
            s.n += 1.0;
            s.sum += v;
            s.min = s.min.min(v);
            s.max = s.max.max(v);
        }
        s
    }
    fn is_pure(&self, s: &Sums) -> bool {
        s.max - s.min <= 0.0
    }
    fn score(&self, l: &Sums, r: &Sums) -> f64 {
        // SSE_l + SSE_r up to the constant sum of squares
        -(l.sum * l.sum / l.n + r.sum * r.sum / r.n)
    }
    fn move_left(&self, pos: u32, l: &mut Sums, r: &mut Sums) {
        let v = self.y[pos as usize];
        l.n += 1.0;
        l.sum += v;
        r.n -= 1.0;
        r.sum -= v;
    }
}

fn sort_columns(data: &Dataset, rows: &[usize]) -> Vec<Vec<u32>> {
    (0..data.n_features())
        .map(|j| {
            let mut idx: Vec<u32> = (0..rows.len() as u32).collect();
            idx.sort_by(|&a, &b| {
                data.value(rows[a as usize], j).total_cmp(&data.value(rows[b as usize], j)).then(a.cmp(&b))
            });
            idx
        })
        .collect()
}

/// Column orderings of a whole dataset, computed once and shared by the
/// many regression trees of a boosting run.
pub struct Presorted {
    rows: Vec<usize>,
    sorted: Vec<Vec<u32>>,
}

impl Presorted {
    pub fn new(data: &Dataset) -> Self {
        let rows: Vec<usize> = (0..data.len()).collect();
        let sorted = sort_columns(data, &rows);
        Self { rows, sorted }
    }
}

/// Grows one tree. `rows[p]` is the dataset row at position `p`; positions
/// may repeat a row (bootstrap).
struct Builder<'a, C: Criterion> {
    data: &'a Dataset,
    rows: &'a [usize],
    criterion: C,
    params: TreeParams,
    sorted: Vec<Vec<u32>>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
}

struct Grown<S> {
    split: Option<Split>,
    depth: u32,
    stats: S,
    children: Option<(usize, usize)>,
}

impl<'a, C: Criterion> Builder<'a, C> {
    fn new(data: &'a Dataset, rows: &'a [usize], criterion: C, params: TreeParams) -> Self {
        Self::with_sorted(data, rows, criterion, params, sort_columns(data, rows))
    }

    fn with_sorted(data: &'a Dataset, rows: &'a [usize], criterion: C, params: TreeParams, sorted: Vec<Vec<u32>>) -> Self {
        let n = rows.len();
        Self { data, rows, criterion, params, sorted, goes_left: vec![false; n], scratch: Vec::with_capacity(n) }
    }

    fn x(&self, pos: u32, j: usize) -> f64 {
        self.data.value(self.rows[pos as usize], j)
    }

    fn features_for(&self, node_key: u64) -> Vec<usize> {
        let d = self.data.n_features();
        match self.params.max_features {
            Some(k) if k < d => {
                let mut rng = ChaCha8Rng::seed_from_u64(mix(self.params.seed, node_key));
                let mut f = sample(&mut rng, d, k.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        }
    }

    fn best_split(&self, lo: usize, hi: usize, stats: &C::Stats, node_key: u64) -> Option<Split> {
        let mut best: Option<(f64, Split)> = None;
        for j in self.features_for(node_key) {
            let order = &self.sorted[j][lo..hi];
            let mut left = self.criterion.empty();
            let mut right = stats.clone();
            for w in 0..order.len() - 1 {
                self.criterion.move_left(order[w], &mut left, &mut right);
                let a = self.x(order[w], j);
                let b = self.x(order[w + 1], j);
                if a >= b {
                    continue;
                }
                let score = self.criterion.score(&left, &right);
                if best.as_ref().is_none_or(|(s, _)| is_better(score, *s)) {
                    best = Some((score, Split { feature: j, threshold: threshold_between(a, b) }));
                }
            }
        }
        best.map(|(_, s)| s)
    }

    /// Stable partition of every feature column inside [lo, hi).
    fn partition(&mut self, lo: usize, hi: usize, split: Split) -> usize {
        let key = &self.sorted[split.feature][lo..hi];
        for &p in key {
            self.goes_left[p as usize] = self.data.value(self.rows[p as usize], split.feature) <= split.threshold;
        }
        let mut mid = lo;
        for j in 0..self.sorted.len() {
            self.scratch.clear();
            let col = &mut self.sorted[j];
            let mut w = lo;
            for r in lo..hi {
                let p = col[r];
                if self.goes_left[p as usize] {
                    col[w] = p;
                    w += 1;
                } else {
                    self.scratch.push(p);
                }
            }
            col[w..hi].copy_from_slice(&self.scratch);
            mid = w;
        }
        mid
    }

    /// Depth-first growth; nodes are returned in preorder.
    fn grow(&mut self) -> Vec<Grown<C::Stats>> {
        let mut out = Vec::new();
        let n = self.rows.len();
        self.grow_node(0, n, 0, 1, &mut out);
        out
    }

    fn grow_node(&mut self, lo: usize, hi: usize, depth: u32, key: u64, out: &mut Vec<Grown<C::Stats>>) -> usize {
        let stats = self.criterion.stats(&self.sorted[0][lo..hi]);
        let id = out.len();
        out.push(Grown { split: None, depth, stats: stats.clone(), children: None });
        let depth_ok = self.params.max_depth.is_none_or(|m| (depth as usize) < m);
        if !depth_ok || hi - lo < 2 || self.criterion.is_pure(&stats) {
            return id;
        }
        let Some(split) = self.best_split(lo, hi, &stats, key) else {
            return id;
        };
        let mid = self.partition(lo, hi, split);
        let l = self.grow_node(lo, mid, depth + 1, mix(key, 2), out);
        let r = self.grow_node(mid, hi, depth + 1, mix(key, 3), out);
        out[id].split = Some(split);
        out[id].children = Some((l, r));
        id
    }
}

fn assemble<S, P>(grown: Vec<Grown<S>>, mut payload: impl FnMut(&Grown<S>) -> P) -> Vec<Node<P>> {
    grown
        .iter()
        .map(|g| {
            let (l, r) = g.children.unwrap_or((0, 0));
            Node { split: g.split, left: l as u32, right: r as u32, depth: g.depth, payload: payload(g) }
        })
        .collect()
}

fn walk<'a, P>(nodes: &'a [Node<P>], x: &[f64], max_depth: Option<usize>) -> &'a Node<P> {
    let mut i = 0usize;
    loop {
        let node = &nodes[i];
        let stop = max_depth.is_some_and(|m| node.depth as usize >= m);
        match node.split {
            Some(s) if !stop => i = if x[s.feature] <= s.threshold { node.left } else { node.right } as usize,
            _ => return node,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationTree {
    pub n_classes: usize,
    pub nodes: Vec<Node<ClassPayload>>,
}

impl ClassificationTree {
    /// Fits on `rows` (defaults to every row once).
    pub fn fit(data: &Dataset, rows: Option<&[usize]>, params: TreeParams) -> Self {
        let all: Vec<usize>;
        let rows = match rows {
            Some(r) => r,
            None => {
                all = (0..data.len()).collect();
                &all
            }
        };
        // the criterion reads labels by position, so remap through `rows`
        let y_pos: Vec<usize> = rows.iter().map(|&r| data.y[r]).collect();
        let crit = Gini { y: &y_pos, n_classes: data.n_classes };
        let grown = Builder::new(data, rows, crit, params).grow();
        let nodes = assemble(grown, |g| {
            let class = argmax_lowest(&g.stats.counts);
            let distribution = if g.split.is_none() {
                g.stats
                    .counts
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0.0)
                    .map(|(k, &c)| (k, c / g.stats.n))
                    .collect()
            } else {
                Vec::new()
            };
            ClassPayload { class, distribution }
        });
        Self { n_classes: data.n_classes, nodes }
    }

    pub fn predict_row(&self, x: &[f64]) -> usize {
        walk(&self.nodes, x, None).payload.class
    }

    /// Prediction of the same tree cut at `depth`.
    pub fn predict_row_at_depth(&self, x: &[f64], depth: usize) -> usize {
        walk(&self.nodes, x, Some(depth)).payload.class
    }

    /// Class reached at every depth 0..=max_depth for one row; after a leaf
    /// the leaf's class repeats.
    pub fn path_classes(&self, x: &[f64], out: &mut [usize]) {
        let mut i = 0usize;
        for slot in out.iter_mut() {
            let node = &self.nodes[i];
            *slot = node.payload.class;
            if let Some(s) = node.split {
                i = if x[s.feature] <= s.threshold { node.left } else { node.right } as usize;
            }
        }
    }

    pub fn predict(&self, data: &Dataset) -> Vec<usize> {
        data.rows().map(|r| self.predict_row(r)).collect()
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth as usize).max().unwrap_or(0)
    }

    /// Leaf class distribution reached by `x`.
    pub fn distribution(&self, x: &[f64]) -> &[(usize, f64)] {
        &walk(&self.nodes, x, None).payload.distribution
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node<f64>>,
}

impl RegressionTree {
    /// Least-squares tree; each node predicts the mean target of its rows.
    pub fn fit(data: &Dataset, targets: &[f64], params: TreeParams) -> Self {
        Self::fit_presorted(data, &Presorted::new(data), targets, params)
    }

    pub fn fit_presorted(data: &Dataset, pre: &Presorted, targets: &[f64], params: TreeParams) -> Self {
        let crit = SquaredError { y: targets };
        let grown = Builder::with_sorted(data, &pre.rows, crit, params, pre.sorted.clone()).grow();
        let nodes = assemble(grown, |g| if g.stats.n > 0.0 { g.stats.sum / g.stats.n } else { 0.0 });
        Self { nodes }
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        walk(&self.nodes, x, None).payload
    }
}
