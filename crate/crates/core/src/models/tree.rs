//! Exact greedy CART on presorted columns.
//!
//! One builder serves both the Gini classification trees (single trees and
//! forests) and the second-order regression trees of gradient boosting; they
//! differ only in the [`Criterion`] that scores a candidate split.

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::matrix::Matrix;
use crate::N_CLASSES;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 12,
            min_samples_split: 2,
            min_samples_leaf: 1,
            seed: 0,
        }
    }
}

impl TreeParams {
    pub(crate) fn validate(&self) -> Result<(), ModelError> {
        if self.max_depth == 0 || self.min_samples_split < 2 || self.min_samples_leaf == 0 {
            return Err(ModelError::InvalidHyperparams(
                "tree needs max_depth >= 1, min_samples_split >= 2, min_samples_leaf >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        gain: f64,
    },
    Leaf { value: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub n_features: usize,
}

impl Tree {
    pub fn leaf_value(&self, row: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { value } => return value,
            }
        }
    }

    pub fn predict_into(&self, row: &[f64], out: &mut [f64]) {
        out.copy_from_slice(self.leaf_value(row));
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    /// The root split, if the tree is not a single leaf.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match &self.nodes[0] {
            Node::Split {
                feature, threshold, ..
            } => Some((*feature, *threshold)),
            Node::Leaf { .. } => None,
        }
    }

    /// Summed split gain per feature (unnormalized).
    pub fn impurity_importance(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.n_features];
        for n in &self.nodes {
            if let Node::Split { feature, gain, .. } = n {
                imp[*feature] += gain.max(0.0);
            }
        }
        imp
    }
}

/// Scores candidate splits. `score(left) + score(right) - score(parent)` is
/// the gain of a split.
pub(crate) trait Criterion {
    type Stats: Copy;
    fn empty(&self) -> Self::Stats;
    fn add(&self, s: &mut Self::Stats, row: usize);
    fn diff(&self, total: &Self::Stats, part: &Self::Stats) -> Self::Stats;
    /// Row count (or bootstrap multiplicity) behind `s`.
    fn count(&self, s: &Self::Stats) -> f64;
    fn score(&self, s: &Self::Stats) -> f64;
    fn admissible_child(&self, _s: &Self::Stats) -> bool {
        true
    }
    fn accept(&self, gain: f64, scale: f64) -> bool;
    fn is_pure(&self, s: &Self::Stats) -> bool;
    fn leaf(&self, s: &Self::Stats) -> Vec<f64>;
}

/// Gini impurity on (optionally weighted) class counts.
pub(crate) struct Gini<'a> {
    pub y: &'a [usize],
    pub weights: Option<&'a [f64]>,
}

impl Criterion for Gini<'_> {
    type Stats = [f64; N_CLASSES];

    fn empty(&self) -> Self::Stats {
        [0.0; N_CLASSES]
    }

    fn add(&self, s: &mut Self::Stats, row: usize) {
        s[self.y[row]] += self.weights.map_or(1.0, |w| w[row]);
    }

    fn diff(&self, total: &Self::Stats, part: &Self::Stats) -> Self::Stats {
        let mut d = *total;
        for c in 0..N_CLASSES {
            d[c] -= part[c];
        }
        d
    }

    fn count(&self, s: &Self::Stats) -> f64 {
        s.iter().sum()
    }

    /// `-N * gini(node)`, so the gain is the weighted impurity decrease.
    fn score(&self, s: &Self::Stats) -> f64 {
        let n: f64 = s.iter().sum();
        if n <= 0.0 {
            return 0.0;
        }
        s.iter().map(|c| c * c).sum::<f64>() / n - n
    }

    fn accept(&self, gain: f64, scale: f64) -> bool {
        gain >= -1e-9 * scale
    }

    fn is_pure(&self, s: &Self::Stats) -> bool {
        s.iter().filter(|&&c| c > 0.0).count() <= 1
    }

    fn leaf(&self, s: &Self::Stats) -> Vec<f64> {
        let n: f64 = s.iter().sum();
        s.iter().map(|c| c / n).collect()
    }
}

pub(crate) struct GrowConfig {
    pub max_depth: usize,
    pub min_samples_split: f64,
    pub min_samples_leaf: f64,
    /// Features tried per split; all when `>= n_features`.
    pub mtry: usize,
}

/// Row indices sorted by each column (ties by index).
pub(crate) fn presort(x: &Matrix) -> Vec<Vec<u32>> {
    (0..x.cols())
        .map(|f| {
            let mut idx: Vec<u32> = (0..x.rows() as u32).collect();
            idx.sort_by(|&a, &b| {
                x.get(a as usize, f)
                    .total_cmp(&x.get(b as usize, f))
                    .then(a.cmp(&b))
            });
            idx
        })
        .collect()
}

/// Restricts presorted lists to the rows for which `keep` holds.
pub(crate) fn filter_lists(order: &[Vec<u32>], keep: &[bool]) -> Vec<Vec<u32>> {
    order
        .iter()
        .map(|l| l.iter().copied().filter(|&r| keep[r as usize]).collect())
        .collect()
}

struct Builder<'a, C: Criterion> {
    x: &'a Matrix,
    crit: &'a C,
    cfg: &'a GrowConfig,
    rng: Option<&'a mut ChaCha8Rng>,
    go_left: Vec<bool>,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl<C: Criterion> Builder<'_, C> {
    fn candidate_features(&mut self) -> Vec<usize> {
        let f = self.x.cols();
        match self.rng.as_deref_mut() {
            Some(rng) if self.cfg.mtry < f => {
                let mut v = sample(rng, f, self.cfg.mtry.max(1)).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..f).collect(),
        }
    }

    fn find_split(&mut self, lists: &[Vec<u32>], total: &C::Stats) -> Option<BestSplit> {
        let parent = self.crit.score(total);
        let scale = parent.abs().max(1.0);
        let mut best: Option<BestSplit> = None;
        for f in self.candidate_features() {
            let list = &lists[f];
            let mut left = self.crit.empty();
            for pos in 0..list.len().saturating_sub(1) {
                let r = list[pos] as usize;
                self.crit.add(&mut left, r);
                let a = self.x.get(r, f);
                let b = self.x.get(list[pos + 1] as usize, f);
                if a == b {
                    continue;
                }
                let right = self.crit.diff(total, &left);
                if self.crit.count(&left) < self.cfg.min_samples_leaf
                    || self.crit.count(&right) < self.cfg.min_samples_leaf
                    || !self.crit.admissible_child(&left)
                    || !self.crit.admissible_child(&right)
                {
                    continue;
                }
                let gain = self.crit.score(&left) + self.crit.score(&right) - parent;
                let better = match &best {
                    None => true,
                    Some(bs) => gain > bs.gain + 1e-12 * scale,
                };
                if better {
                    let mid = 0.5 * (a + b);
                    // Keep a <= t < b even when the midpoint rounds up to b.
                    let threshold = if mid >= a && mid < b { mid } else { a };
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best.filter(|b| self.crit.accept(b.gain, scale))
    }

    fn grow(&mut self, lists: Vec<Vec<u32>>, depth: usize) -> usize {
        let id = self.nodes.len();
        let mut total = self.crit.empty();
        for &r in &lists[0] {
            self.crit.add(&mut total, r as usize);
        }
        let n = self.crit.count(&total);
        let leaf = |crit: &C, nodes: &mut Vec<Node>| {
            nodes.push(Node::Leaf {
                value: crit.leaf(&total),
            });
            id
        };
        if depth >= self.cfg.max_depth || n < self.cfg.min_samples_split || self.crit.is_pure(&total) {
            return leaf(self.crit, &mut self.nodes);
        }
        let Some(split) = self.find_split(&lists, &total) else {
            return leaf(self.crit, &mut self.nodes);
        };
        for &r in &lists[split.feature] {
            self.go_left[r as usize] = self.x.get(r as usize, split.feature) <= split.threshold;
        }
        let (mut ls, mut rs) = (Vec::with_capacity(lists.len()), Vec::with_capacity(lists.len()));
        for l in lists {
            let (a, b): (Vec<u32>, Vec<u32>) = l.into_iter().partition(|&r| self.go_left[r as usize]);
            ls.push(a);
            rs.push(b);
        }
        self.nodes.push(Node::Leaf { value: Vec::new() });
        let left = self.grow(ls, depth + 1);
        let right = self.grow(rs, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
            gain: split.gain,
        };
        id
    }
}

/// Grows one tree over the rows present in `lists` (one sorted list per column).
pub(crate) fn grow_tree<C: Criterion>(
    x: &Matrix,
    lists: Vec<Vec<u32>>,
    crit: &C,
    cfg: &GrowConfig,
    rng: Option<&mut ChaCha8Rng>,
) -> Tree {
    let mut b = Builder {
        x,
        crit,
        cfg,
        rng,
        go_left: vec![false; x.rows()],
        nodes: Vec::new(),
    };
    if lists.first().is_none_or(|l| l.is_empty()) {
        b.nodes.push(Node::Leaf {
            value: vec![1.0 / N_CLASSES as f64; N_CLASSES],
        });
    } else {
        b.grow(lists, 0);
    }
    Tree {
        nodes: b.nodes,
        n_features: x.cols(),
    }
}

pub(crate) fn train_decision_tree(x: &Matrix, y: &[usize], p: &TreeParams) -> Tree {
    let lists = presort(x);
    let cfg = GrowConfig {
        max_depth: p.max_depth,
        min_samples_split: p.min_samples_split as f64,
        min_samples_leaf: p.min_samples_leaf as f64,
        mtry: x.cols(),
    };
    grow_tree(x, lists, &Gini { y, weights: None }, &cfg, None)
}
