use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::{Dataset, FeatureRow, PipelineError};
use crate::canframe::ClassLabel;
use crate::seeded_rng;

/// Raises every class below `target` rows to exactly `target` with SMOTE.
///
/// A synthetic row is `x + u·(x_nn − x)` with `u ~ U(0, 1)` and `x_nn` drawn
/// from the `k` nearest same-class neighbors of `x` (Euclidean, on the active
/// feature columns). All twelve numeric fields are interpolated with the same
/// `u`. Classes at or above `target`, and absent classes, are left as is.
/// Synthetic rows are appended after the originals.
pub fn smote_oversample(
    dataset: &Dataset,
    k: usize,
    target: usize,
    seed: u64,
) -> Result<Dataset, PipelineError> {
    if k == 0 {
        return Err(PipelineError::InvalidParameter("k must be >= 1".into()));
    }
    let dims = if dataset.time_features_enabled { 12 } else { 10 };
    let mut rows = dataset.rows.clone();
    for class in ClassLabel::ALL {
        let members: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset.rows[i].label == class)
            .collect();
        let n = members.len();
        if n == 0 || n >= target {
            continue;
        }
        if n < 2 {
            return Err(PipelineError::ClassTooSmall {
                class,
                count: n,
                needed: 2,
            });
        }
        let k_eff = if k > n - 1 {
            log::warn!("smote: k = {k} clamped to {} for class {class}", n - 1);
            n - 1
        } else {
            k
        };
        let points: Vec<[f64; 12]> = members.iter().map(|&i| dataset.rows[i].full_vector()).collect();
        let needed = target - n;
        let mut rng = seeded_rng(seed, class.ordinal() as u64);

        // Base points cycle through a seeded permutation of the class.
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let bases: Vec<usize> = (0..needed).map(|j| perm[j % n]).collect();
        let mut distinct = bases.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let neighbors: HashMap<usize, Vec<usize>> = distinct
            .par_iter()
            .map(|&b| (b, nearest(&points, b, k_eff, dims)))
            .collect();

        for &b in &bases {
            let nn = &neighbors[&b];
            let other = nn[rng.gen_range(0..nn.len())];
            let u: f64 = rng.gen();
            let (x, y) = (&points[b], &points[other]);
            let mut v = [0.0; 12];
            for d in 0..12 {
                v[d] = x[d] + u * (y[d] - x[d]);
            }
            rows.push(FeatureRow::from_full_vector(&v, class, dataset.rows[members[b]].order));
        }
    }
    Ok(Dataset::from_rows(rows, dataset.time_features_enabled))
}

/// Indices of the `k` points nearest to `points[base]`, excluding itself.
/// Ties resolve to the lower index.
fn nearest(points: &[[f64; 12]], base: usize, k: usize, dims: usize) -> Vec<usize> {
    let p = &points[base];
    let mut dist: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != base)
        .map(|(i, q)| {
            let d: f64 = (0..dims).map(|d| (p[d] - q[d]).powi(2)).sum();
            (d, i)
        })
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < dist.len() {
        dist.select_nth_unstable_by(k - 1, cmp);
        dist.truncate(k);
    }
    dist.sort_by(cmp);
    dist.into_iter().map(|(_, i)| i).collect()
}
