use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::pipeline::{stratified_folds, PipelineError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvConfig {
    pub k: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            k: 3,
            repeats: 2,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    /// Ordered by (repeat, fold).
    pub fold_scores: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation of the fold scores.
    pub stddev: f64,
    pub config: CvConfig,
}

impl CvResult {
    pub fn from_scores(fold_scores: Vec<f64>, config: CvConfig) -> Self {
        let n = fold_scores.len().max(1) as f64;
        let mean = fold_scores.iter().sum::<f64>() / n;
        let var = fold_scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        CvResult {
            fold_scores,
            mean,
            stddev: var.sqrt(),
            config,
        }
    }
}

/// Seed of the fold partition for repeat `r`.
pub fn repeat_seed(seed: u64, r: usize) -> u64 {
    seed.wrapping_add((r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Repeated stratified k-fold. `score_fold(train_rows, test_rows)` fits
/// whatever it needs on the training rows and returns a score for the test
/// rows. Folds run in parallel; results keep (repeat, fold) order.
pub fn cross_validate<E, F>(labels: &[usize], config: CvConfig, score_fold: F) -> Result<CvResult, E>
where
    E: From<PipelineError> + Send,
    F: Fn(&[usize], &[usize]) -> Result<f64, E> + Sync,
{
    if config.repeats == 0 {
        return Err(PipelineError::InvalidParameter("repeats must be >= 1".into()).into());
    }
    let mut jobs = Vec::with_capacity(config.k * config.repeats);
    for r in 0..config.repeats {
        let fold = stratified_folds(labels, config.k, repeat_seed(config.seed, r))?;
        for f in 0..config.k {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| fold[i] == f);
            jobs.push((train, test));
        }
    }
    let scores = jobs
        .par_iter()
        .map(|(train, test)| score_fold(train, test))
        .collect::<Result<Vec<f64>, E>>()?;
    Ok(CvResult::from_scores(scores, config))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_scores_for_three_by_two() {
        let labels: Vec<usize> = (0..60).map(|i| i % 5).collect();
        let cfg = CvConfig { k: 3, repeats: 2, seed: 5 };
        let r = cross_validate::<PipelineError, _>(&labels, cfg, |tr, te| Ok(te.len() as f64 / (tr.len() + te.len()) as f64)).unwrap();
        assert_eq!(r.fold_scores.len(), 6);
        assert!((r.mean - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn small_class_rejected() {
        let labels = vec![0, 0, 0, 1, 1];
        let r = cross_validate::<PipelineError, _>(&labels, CvConfig::default(), |_, _| Ok(1.0));
        assert!(r.is_err());
    }
}
