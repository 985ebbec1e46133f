use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{filter_lists, grow_tree, presort, Criterion, GrowConfig, Tree};
use super::{softmax_in_place, ModelError};
use crate::matrix::Matrix;
use crate::{seeded_rng, N_CLASSES};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// L1 penalty on leaf weights.
    pub alpha: f64,
    /// Minimum gain for a split.
    pub gamma: f64,
    pub min_child_weight: f64,
    /// Row fraction sampled without replacement each round.
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams {
            rounds: 40,
            learning_rate: 0.3,
            max_depth: 6,
            lambda: 1.0,
            alpha: 0.0,
            gamma: 0.0,
            min_child_weight: 1e-3,
            subsample: 0.8,
            seed: 0,
        }
    }
}

/// `trees[round][class]`; the raw score of class `c` is the sum of its tree
/// outputs scaled by the learning rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub learning_rate: f64,
    pub trees: Vec<Vec<Tree>>,
}

struct SecondOrder<'a> {
    g: &'a [f64],
    h: &'a [f64],
    lambda: f64,
    alpha: f64,
    gamma: f64,
    min_child_weight: f64,
}

fn soft_threshold(g: f64, alpha: f64) -> f64 {
    g.signum() * (g.abs() - alpha).max(0.0)
}

impl Criterion for SecondOrder<'_> {
    /// (sum g, sum h, rows)
    type Stats = (f64, f64, f64);

    fn empty(&self) -> Self::Stats {
        (0.0, 0.0, 0.0)
    }

    fn add(&self, s: &mut Self::Stats, row: usize) {
        s.0 += self.g[row];
        s.1 += self.h[row];
        s.2 += 1.0;
    }

    fn diff(&self, t: &Self::Stats, p: &Self::Stats) -> Self::Stats {
        (t.0 - p.0, t.1 - p.1, t.2 - p.2)
    }

    fn count(&self, s: &Self::Stats) -> f64 {
        s.2
    }

    fn score(&self, s: &Self::Stats) -> f64 {
        let t = soft_threshold(s.0, self.alpha);
        0.5 * t * t / (s.1 + self.lambda)
    }

    fn admissible_child(&self, s: &Self::Stats) -> bool {
        s.1 >= self.min_child_weight
    }

    fn accept(&self, gain: f64, scale: f64) -> bool {
        gain - self.gamma > 1e-12 * scale
    }

    fn is_pure(&self, _s: &Self::Stats) -> bool {
        false
    }

    fn leaf(&self, s: &Self::Stats) -> Vec<f64> {
        vec![-soft_threshold(s.0, self.alpha) / (s.1 + self.lambda)]
    }
}

fn mean_log_loss(raw: &[[f64; N_CLASSES]], y: &[usize]) -> f64 {
    let mut total = 0.0;
    for (r, &c) in raw.iter().zip(y) {
        let mut p = *r;
        softmax_in_place(&mut p);
        total -= p[c].max(1e-300).ln();
    }
    total / y.len() as f64
}

/// Returns the model and the final training log-loss.
pub(crate) fn train_gradboost(x: &Matrix, y: &[usize], p: &GbdtParams) -> Result<(GbdtModel, f64), ModelError> {
    let (model, losses) = boost(x, y, p)?;
    Ok((model, *losses.last().unwrap_or(&f64::NAN)))
}

/// Boosts and records the training log-loss after every round.
pub(crate) fn boost(x: &Matrix, y: &[usize], p: &GbdtParams) -> Result<(GbdtModel, Vec<f64>), ModelError> {
    let n = x.rows();
    let order = presort(x);
    let mut raw = vec![[0.0; N_CLASSES]; n];
    let mut trees = Vec::with_capacity(p.rounds);
    let mut losses = Vec::with_capacity(p.rounds);
    let cfg = GrowConfig {
        max_depth: p.max_depth,
        min_samples_split: 2.0,
        min_samples_leaf: 1.0,
        mtry: x.cols(),
    };
    let mut rng = seeded_rng(p.seed, 0);
    for round in 0..p.rounds {
        let mut g = vec![vec![0.0; n]; N_CLASSES];
        let mut h = vec![vec![0.0; n]; N_CLASSES];
        for i in 0..n {
            let mut prob = raw[i];
            softmax_in_place(&mut prob);
            for c in 0..N_CLASSES {
                let target = if y[i] == c { 1.0 } else { 0.0 };
                g[c][i] = prob[c] - target;
                h[c][i] = (prob[c] * (1.0 - prob[c])).max(1e-16);
            }
        }
        if g.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteLoss {
                epoch: round,
                last_loss: losses.last().copied().unwrap_or(f64::NAN),
            });
        }
        let lists = if p.subsample < 1.0 {
            let m = ((n as f64 * p.subsample).round() as usize).clamp(1, n);
            let mut keep = vec![false; n];
            for i in sample(&mut rng, n, m) {
                keep[i] = true;
            }
            filter_lists(&order, &keep)
        } else {
            order.clone()
        };
        let round_trees: Vec<Tree> = (0..N_CLASSES)
            .into_par_iter()
            .map(|c| {
                let crit = SecondOrder {
                    g: &g[c],
                    h: &h[c],
                    lambda: p.lambda,
                    alpha: p.alpha,
                    gamma: p.gamma,
                    min_child_weight: p.min_child_weight,
                };
                grow_tree(x, lists.clone(), &crit, &cfg, None)
            })
            .collect();
        for (i, r) in raw.iter_mut().enumerate() {
            let row = x.row(i);
            for (c, t) in round_trees.iter().enumerate() {
                r[c] += p.learning_rate * t.leaf_value(row)[0];
            }
        }
        trees.push(round_trees);
        losses.push(mean_log_loss(&raw, y));
    }
    Ok((
        GbdtModel {
            learning_rate: p.learning_rate,
            trees,
        },
        losses,
    ))
}

impl GbdtModel {
    /// Mean log-loss on `(x, y)` after each boosting round.
    pub fn staged_log_loss(&self, x: &Matrix, y: &[usize]) -> Vec<f64> {
        let mut raw = vec![[0.0; N_CLASSES]; x.rows()];
        self.trees
            .iter()
            .map(|round| {
                for (i, r) in raw.iter_mut().enumerate() {
                    for (c, t) in round.iter().enumerate() {
                        r[c] += self.learning_rate * t.leaf_value(x.row(i))[0];
                    }
                }
                mean_log_loss(&raw, y)
            })
            .collect()
    }

    pub fn predict_into(&self, row: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for round in &self.trees {
            for (c, t) in round.iter().enumerate() {
                out[c] += self.learning_rate * t.leaf_value(row)[0];
            }
        }
        softmax_in_place(out);
    }

    /// Total split gain per feature over all trees.
    pub fn gain_importance(&self) -> Vec<f64> {
        let f = self.trees.first().and_then(|r| r.first()).map_or(0, |t| t.n_features);
        let mut acc = vec![0.0; f];
        for t in self.trees.iter().flatten() {
            for (a, v) in acc.iter_mut().zip(t.impurity_importance()) {
                *a += v;
            }
        }
        acc
    }
}
