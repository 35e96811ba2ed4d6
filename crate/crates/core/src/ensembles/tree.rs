//! CART regression trees (MSE criterion) stored as flat node arrays.

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Scan midpoints between consecutive distinct sorted values.
    Exhaustive,
    /// One uniform threshold in `(min, max)` per candidate feature.
    RandomThreshold,
}

/// How many features are examined at each node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    /// `ceil(d / 3)`, at least one.
    Third,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        match self {
            MaxFeatures::All => d,
            MaxFeatures::Third => d.div_ceil(3).max(1),
            MaxFeatures::Count(k) => k.clamp(1, d.max(1)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub split_mode: SplitMode,
    pub max_features: MaxFeatures,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_split: 2,
            split_mode: SplitMode::Exhaustive,
            max_features: MaxFeatures::All,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Decrease in summed squared error achieved by the split.
        gain: f64,
        n_samples: usize,
    },
    Leaf {
        value: f64,
        n_samples: usize,
    },
}

impl TreeNode {
    pub fn n_samples(&self) -> usize {
        match *self {
            TreeNode::Split { n_samples, .. } | TreeNode::Leaf { n_samples, .. } => n_samples,
        }
    }
}

/// Fitted tree; node 0 is the root. `x <= threshold` goes left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
    pub n_features: usize,
}

impl RegressionTree {
    /// Grows a tree on the rows listed in `indices` (repeats allowed).
    pub fn fit(
        x: ArrayView2<f64>,
        y: ArrayView1<f64>,
        indices: &[usize],
        params: &TreeParams,
        rng: &mut SplitMix64,
    ) -> Self {
        assert!(!indices.is_empty(), "tree needs at least one sample");
        let mut builder = Builder {
            x,
            y,
            params,
            rng,
            k_features: params.max_features.resolve(x.ncols()),
            nodes: Vec::new(),
            order: Vec::new(),
        };
        let mut idx = indices.to_vec();
        builder.grow(&mut idx, 0);
        Self { nodes: builder.nodes, n_features: x.ncols() }
    }

    /// A single leaf.
    pub fn constant(value: f64, n_samples: usize, n_features: usize) -> Self {
        Self { nodes: vec![TreeNode::Leaf { value, n_samples }], n_features }
    }

    /// Index of the leaf reached by `row`.
    pub fn leaf_index(&self, row: ArrayView1<f64>) -> usize {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                TreeNode::Leaf { .. } => return k,
                TreeNode::Split { feature, threshold, left, right, .. } => {
                    k = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        match self.nodes[self.leaf_index(row)] {
            TreeNode::Leaf { value, .. } => value,
            TreeNode::Split { .. } => unreachable!(),
        }
    }

    pub fn depth(&self) -> usize {
        fn rec(nodes: &[TreeNode], k: usize) -> usize {
            match nodes[k] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + rec(nodes, left).max(rec(nodes, right)),
            }
        }
        rec(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }

    /// Overwrites leaf values (used by boosting line searches).
    pub fn set_leaf_value(&mut self, leaf: usize, new_value: f64) {
        if let TreeNode::Leaf { value, .. } = &mut self.nodes[leaf] {
            *value = new_value;
        }
    }

    /// Impurity-decrease importances normalized to sum 1 (all zero for a stump-free tree).
    pub fn feature_importance(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.n_features];
        let root = self.nodes[0].n_samples() as f64;
        for node in &self.nodes {
            if let TreeNode::Split { feature, gain, .. } = *node {
                imp[feature] += gain.max(0.0) / root;
            }
        }
        let total: f64 = imp.iter().sum();
        if total > 0.0 {
            imp.iter_mut().for_each(|v| *v /= total);
        }
        imp
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Candidate {
    /// Higher gain wins; exact ties go to the lower feature, then lower threshold.
    fn beats(&self, other: &Option<Candidate>) -> bool {
        match other {
            None => true,
            Some(o) => {
                self.gain > o.gain
                    || (self.gain == o.gain
                        && (self.feature < o.feature
                            || (self.feature == o.feature && self.threshold < o.threshold)))
            }
        }
    }
}

struct Builder<'a, 'r> {
    x: ArrayView2<'a, f64>,
    y: ArrayView1<'a, f64>,
    params: &'a TreeParams,
    rng: &'r mut SplitMix64,
    k_features: usize,
    nodes: Vec<TreeNode>,
    order: Vec<(f64, f64)>,
}

impl Builder<'_, '_> {
    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let n = idx.len();
        let first = self.y[idx[0]];
        let pure = idx.iter().all(|&i| self.y[i] == first);
        // a pure node stores its value exactly rather than a rounded mean
        let mean = if pure { first } else { idx.iter().map(|&i| self.y[i]).sum::<f64>() / n as f64 };
        let node_id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { value: mean, n_samples: n });

        let depth_ok = self.params.max_depth.is_none_or(|m| depth < m);
        if !depth_ok || n < self.params.min_samples_split || pure {
            return node_id;
        }
        let Some(best) = self.best_split(idx, mean) else {
            return node_id;
        };
        if !(best.gain > 0.0) {
            return node_id;
        }

        // partition in place: left block holds x <= threshold
        let (f, thr) = (best.feature, best.threshold);
        let mut split = 0;
        for k in 0..n {
            if self.x[[idx[k], f]] <= thr {
                idx.swap(k, split);
                split += 1;
            }
        }
        debug_assert!(split > 0 && split < n);
        let (l, r) = idx.split_at_mut(split);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[node_id] = TreeNode::Split {
            feature: f,
            threshold: thr,
            left,
            right,
            gain: best.gain,
            n_samples: n,
        };
        node_id
    }

    /// Visits features in random order until `k_features` non-constant ones were tried.
    fn best_split(&mut self, idx: &[usize], mean: f64) -> Option<Candidate> {
        let d = self.x.ncols();
        let mut features: Vec<usize> = (0..d).collect();
        let mut best: Option<Candidate> = None;
        let mut tried = 0;
        let mut drawn = 0;
        while tried < self.k_features && drawn < d {
            let pick = if self.k_features == d {
                drawn
            } else {
                let j = drawn + self.rng.below(d - drawn);
                features.swap(drawn, j);
                drawn
            };
            let f = features[pick];
            drawn += 1;

            let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = self.x[[i, f]];
                (lo.min(v), hi.max(v))
            });
            if hi <= lo {
                continue;
            }
            tried += 1;
            let cand = match self.params.split_mode {
                SplitMode::Exhaustive => self.scan_feature(idx, f, mean),
                SplitMode::RandomThreshold => {
                    let mut thr = lo + self.rng.next_f64() * (hi - lo);
                    if thr >= hi {
                        thr = lo;
                    }
                    Some(self.threshold_gain(idx, f, thr, mean))
                }
            };
            if let Some(c) = cand {
                if c.beats(&best) {
                    best = Some(c);
                }
            }
        }
        best
    }

    fn threshold_gain(&self, idx: &[usize], f: usize, thr: f64, mean: f64) -> Candidate {
        let (mut s_all, mut s_left, mut n_left) = (0.0, 0.0, 0usize);
        for &i in idx {
            let yc = self.y[i] - mean;
            s_all += yc;
            if self.x[[i, f]] <= thr {
                s_left += yc;
                n_left += 1;
            }
        }
        let n = idx.len();
        Candidate { feature: f, threshold: thr, gain: split_gain(s_all, s_left, n, n_left) }
    }

    fn scan_feature(&mut self, idx: &[usize], f: usize, mean: f64) -> Option<Candidate> {
        self.order.clear();
        self.order.extend(idx.iter().map(|&i| (self.x[[i, f]], self.y[i] - mean)));
        self.order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = idx.len();
        let s_all: f64 = self.order.iter().map(|p| p.1).sum();
        let mut s_left = 0.0;
        let mut best: Option<Candidate> = None;
        for k in 0..n - 1 {
            s_left += self.order[k].1;
            let (a, b) = (self.order[k].0, self.order[k + 1].0);
            if b <= a {
                continue;
            }
            let mut thr = a + (b - a) / 2.0;
            if thr >= b {
                thr = a;
            }
            let c = Candidate { feature: f, threshold: thr, gain: split_gain(s_all, s_left, n, k + 1) };
            if c.beats(&best) {
                best = Some(c);
            }
        }
        best
    }
}

/// SSE(parent) - SSE(left) - SSE(right) from sums of centered targets.
#[inline]
fn split_gain(s_all: f64, s_left: f64, n: usize, n_left: usize) -> f64 {
    let s_right = s_all - s_left;
    let n_right = n - n_left;
    s_left * s_left / n_left as f64 + s_right * s_right / n_right as f64 - s_all * s_all / n as f64
}
