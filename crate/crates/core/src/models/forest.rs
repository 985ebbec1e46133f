use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{filter_lists, grow_tree, presort, Gini, GrowConfig, Tree, TreeParams};
use super::argmax;
use crate::matrix::Matrix;
use crate::seeded_rng;

/// Features tried at each split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum MaxFeatures {
    All,
    Sqrt,
    Fraction(f64),
}

impl MaxFeatures {
    fn resolve(self, n_features: usize) -> usize {
        let m = match self {
            MaxFeatures::All => n_features,
            MaxFeatures::Sqrt => (n_features as f64).sqrt().round() as usize,
            MaxFeatures::Fraction(f) => (n_features as f64 * f).ceil() as usize,
        };
        m.clamp(1, n_features.max(1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub tree: TreeParams,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    /// Bootstrap draws as a fraction of the training rows.
    pub sample_fraction: f64,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 30,
            tree: TreeParams {
                max_depth: 14,
                ..TreeParams::default()
            },
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            sample_fraction: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
}

pub(crate) fn train_random_forest(x: &Matrix, y: &[usize], p: &ForestParams) -> ForestModel {
    let order = presort(x);
    let n = x.rows();
    let cfg = GrowConfig {
        max_depth: p.tree.max_depth,
        min_samples_split: p.tree.min_samples_split as f64,
        min_samples_leaf: p.tree.min_samples_leaf as f64,
        mtry: p.max_features.resolve(x.cols()),
    };
    let trees = (0..p.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seeded_rng(p.seed, t as u64);
            if p.bootstrap {
                let draws = ((n as f64 * p.sample_fraction).round() as usize).max(1);
                let mut w = vec![0.0; n];
                for _ in 0..draws {
                    w[rng.gen_range(0..n)] += 1.0;
                }
                let keep: Vec<bool> = w.iter().map(|&c| c > 0.0).collect();
                let lists = filter_lists(&order, &keep);
                let crit = Gini { y, weights: Some(&w) };
                grow_tree(x, lists, &crit, &cfg, Some(&mut rng))
            } else {
                let crit = Gini { y, weights: None };
                grow_tree(x, order.clone(), &crit, &cfg, Some(&mut rng))
            }
        })
        .collect();
    ForestModel { trees }
}

impl ForestModel {
    /// Vote fractions of the member trees.
    pub fn predict_into(&self, row: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for t in &self.trees {
            out[argmax(t.leaf_value(row))] += 1.0;
        }
        let n = self.trees.len() as f64;
        out.iter_mut().for_each(|v| *v /= n);
    }

    /// Mean over trees of each tree's normalized impurity decrease.
    pub fn feature_importance(&self) -> Vec<f64> {
        let f = self.trees.first().map_or(0, |t| t.n_features);
        let mut acc = vec![0.0; f];
        for t in &self.trees {
            let imp = t.impurity_importance();
            let s: f64 = imp.iter().sum();
            if s > 0.0 {
                for (a, v) in acc.iter_mut().zip(imp) {
                    *a += v / s;
                }
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::N_CLASSES;

    #[test]
    fn resolve_max_features() {
        assert_eq!(MaxFeatures::Sqrt.resolve(12), 3);
        assert_eq!(MaxFeatures::All.resolve(12), 12);
        assert_eq!(MaxFeatures::Fraction(0.01).resolve(12), 1);
    }

    #[test]
    fn votes_sum_to_one() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]);
        let m = train_random_forest(&x, &[0, 0, 1, 1], &ForestParams { n_trees: 7, ..Default::default() });
        let mut p = [0.0; N_CLASSES];
        m.predict_into(&[0.5], &mut p);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
