//! Confusion matrices, per-class scores, one-vs-rest ROC, cross-validation
//! and the evaluation report.
//!
//! A ratio whose denominator is zero is reported as 0.

mod cv;
mod report;
mod roc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canframe::ClassLabel;
use crate::N_CLASSES;

pub use cv::{cross_validate, CvConfig, CvResult};
pub use report::{
    build_report, confusion_csv, read_report, roc_csv, write_report, EvalReport, FeatureMode, ModelBlock, ModeResult,
    RunMetadata, REPORT_SCHEMA_VERSION,
};
pub use roc::{roc_auc_ovr, RocCurve, RocReport};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("y_true has {truth} entries, y_pred has {pred}")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("class ordinal {0} outside 0..5")]
    OrdinalOutOfRange(usize),
    #[error("confusion matrix is empty")]
    Empty,
    #[error("non-finite score at row {row}")]
    NonFiniteScore { row: usize },
    #[error("score matrix has {0} columns, expected 5")]
    ScoreArity(usize),
}

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; N_CLASSES]; N_CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn true_positives(&self, c: usize) -> u64 {
        self.counts[c][c]
    }

    pub fn false_positives(&self, c: usize) -> u64 {
        (0..N_CLASSES).filter(|&t| t != c).map(|t| self.counts[t][c]).sum()
    }

    pub fn false_negatives(&self, c: usize) -> u64 {
        (0..N_CLASSES).filter(|&p| p != c).map(|p| self.counts[c][p]).sum()
    }

    pub fn true_negatives(&self, c: usize) -> u64 {
        self.total() - self.true_positives(c) - self.false_positives(c) - self.false_negatives(c)
    }

    pub fn trace(&self) -> u64 {
        (0..N_CLASSES).map(|c| self.counts[c][c]).sum()
    }
}

pub fn confusion(y_true: &[usize], y_pred: &[usize]) -> Result<ConfusionMatrix, MetricsError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch {
            truth: y_true.len(),
            pred: y_pred.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= N_CLASSES || p >= N_CLASSES {
            return Err(MetricsError::OrdinalOutOfRange(t.max(p)));
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub label: ClassLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub per_class: Vec<ClassScore>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub accuracy: f64,
}

/// `num / den`, or 0 when `den` is 0.
pub fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn class_metrics(cm: &ConfusionMatrix) -> Result<ClassMetrics, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::Empty);
    }
    let per_class: Vec<ClassScore> = ClassLabel::ALL
        .iter()
        .map(|&label| {
            let c = label.ordinal();
            let tp = cm.true_positives(c);
            let precision = ratio(tp, tp + cm.false_positives(c));
            let recall = ratio(tp, tp + cm.false_negatives(c));
            ClassScore {
                label,
                precision,
                recall,
                f1: f1_score(precision, recall),
                support: tp + cm.false_negatives(c),
            }
        })
        .collect();
    let mean = |f: fn(&ClassScore) -> f64| per_class.iter().map(f).sum::<f64>() / N_CLASSES as f64;
    let tp: u64 = (0..N_CLASSES).map(|c| cm.true_positives(c)).sum();
    let fp: u64 = (0..N_CLASSES).map(|c| cm.false_positives(c)).sum();
    let fnn: u64 = (0..N_CLASSES).map(|c| cm.false_negatives(c)).sum();
    let micro_f1 = f1_score(ratio(tp, tp + fp), ratio(tp, tp + fnn));
    Ok(ClassMetrics {
        macro_precision: mean(|s| s.precision),
        macro_recall: mean(|s| s.recall),
        macro_f1: mean(|s| s.f1),
        micro_f1,
        accuracy: ratio(cm.trace(), total),
        per_class,
    })
}
