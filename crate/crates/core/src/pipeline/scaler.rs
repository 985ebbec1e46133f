use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::matrix::Matrix;

/// Per-column standardization fitted on a training matrix.
///
/// Uses the population (divide-by-n) standard deviation. Columns with zero
/// spread are flagged constant and map to 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
    pub constant: Vec<bool>,
}

pub fn fit_scaler(train: &Matrix) -> Result<ScalerParams, PipelineError> {
    if train.is_empty() {
        return Err(PipelineError::Empty);
    }
    let n = train.rows() as f64;
    let cols = train.cols();
    let mut mean = vec![0.0; cols];
    for r in train.iter_rows() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    // One refinement pass removes most of the rounding in the first sum.
    let mut resid = vec![0.0; cols];
    for r in train.iter_rows() {
        for ((e, v), m) in resid.iter_mut().zip(r).zip(&mean) {
            *e += v - m;
        }
    }
    mean.iter_mut().zip(&resid).for_each(|(m, e)| *m += e / n);
    let mut var = vec![0.0; cols];
    for r in train.iter_rows() {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let stddev: Vec<f64> = var.iter().map(|s| (s / n).sqrt()).collect();
    let constant = stddev
        .iter()
        .zip(&mean)
        .map(|(s, m)| *s <= 1e-12 * m.abs().max(1.0))
        .collect();
    Ok(ScalerParams {
        mean,
        stddev,
        constant,
    })
}

impl ScalerParams {
    pub fn transform_row(&self, row: &[f64], out: &mut [f64]) {
        for j in 0..row.len() {
            out[j] = if self.constant[j] {
                0.0
            } else {
                (row[j] - self.mean[j]) / self.stddev[j]
            };
        }
    }

    pub fn arity(&self) -> usize {
        self.mean.len()
    }
}

pub fn apply_scaler(params: &ScalerParams, x: &Matrix) -> Result<Matrix, PipelineError> {
    if x.cols() != params.arity() {
        return Err(PipelineError::ArityMismatch {
            expected: params.arity(),
            got: x.cols(),
        });
    }
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        params.transform_row(x.row(i), out.row_mut(i));
    }
    Ok(out)
}
