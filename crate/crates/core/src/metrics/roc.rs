use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::canframe::ClassLabel;
use crate::matrix::Matrix;
use crate::N_CLASSES;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub label: ClassLabel,
    /// `(fpr, tpr)` from (0, 0) to (1, 1); empty when undefined.
    pub points: Vec<(f64, f64)>,
    /// `None` when the class has no positives or no negatives.
    pub auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocReport {
    pub curves: Vec<RocCurve>,
    pub macro_auc: Option<f64>,
}

/// Step ROC for one binary problem. Thresholds are +inf, every distinct
/// score (descending) and -inf; a row is positive when `score >= threshold`.
pub fn binary_roc(positive: &[bool], scores: &[f64]) -> Option<(Vec<(f64, f64)>, f64)> {
    let p = positive.iter().filter(|&&b| b).count();
    let n = positive.len() - p;
    if p == 0 || n == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let s = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == s {
            if positive[idx[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (x0, y0) = *points.last().expect("non-empty");
        let pt = (fp as f64 / n as f64, tp as f64 / p as f64);
        auc += (pt.0 - x0) * (pt.1 + y0) / 2.0;
        points.push(pt);
    }
    // The -inf threshold adds (1, 1), already reached by the last score.
    Some((points, auc))
}

/// One-vs-rest ROC per class on the columns of `proba`.
pub fn roc_auc_ovr(y_true: &[usize], proba: &Matrix) -> Result<RocReport, MetricsError> {
    if proba.cols() != N_CLASSES {
        return Err(MetricsError::ScoreArity(proba.cols()));
    }
    if proba.rows() != y_true.len() {
        return Err(MetricsError::LengthMismatch {
            truth: y_true.len(),
            pred: proba.rows(),
        });
    }
    if let Some(row) = (0..proba.rows()).find(|&i| proba.row(i).iter().any(|v| !v.is_finite())) {
        return Err(MetricsError::NonFiniteScore { row });
    }
    let curves: Vec<RocCurve> = ClassLabel::ALL
        .iter()
        .map(|&label| {
            let c = label.ordinal();
            let positive: Vec<bool> = y_true.iter().map(|&t| t == c).collect();
            let scores = proba.column(c);
            match binary_roc(&positive, &scores) {
                Some((points, auc)) => RocCurve {
                    label,
                    points,
                    auc: Some(auc),
                },
                None => RocCurve {
                    label,
                    points: Vec::new(),
                    auc: None,
                },
            }
        })
        .collect();
    let defined: Vec<f64> = curves.iter().filter_map(|c| c.auc).collect();
    let macro_auc = if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    };
    Ok(RocReport { curves, macro_auc })
}
