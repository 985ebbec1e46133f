use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{ClassMetrics, ConfusionMatrix, CvResult, RocReport};
use crate::canframe::ClassLabel;
use crate::models::ModelKind;

pub const REPORT_SCHEMA_VERSION: &str = "1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    WithTime,
    WithoutTime,
}

impl FeatureMode {
    pub const BOTH: [FeatureMode; 2] = [FeatureMode::WithTime, FeatureMode::WithoutTime];

    pub fn time_features(self) -> bool {
        self == FeatureMode::WithTime
    }

    pub fn slug(self) -> &'static str {
        match self {
            FeatureMode::WithTime => "with",
            FeatureMode::WithoutTime => "without",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub dataset_rows: usize,
    pub class_counts: [usize; ClassLabel::COUNT],
    /// Rows kept after optional subsampling.
    pub evaluated_rows: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub test_fraction: f64,
    pub smote: bool,
    /// What the accuracy numbers are computed on.
    pub evaluation: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ModeResult {
    Completed {
        accuracy: f64,
        metrics: ClassMetrics,
        confusion: ConfusionMatrix,
        roc: RocReport,
        cv: Option<CvResult>,
        final_train_loss: f64,
        feature_importance: Option<Vec<(String, f64)>>,
    },
    Skipped {
        reason: String,
    },
}

impl ModeResult {
    pub fn accuracy(&self) -> Option<f64> {
        match self {
            ModeResult::Completed { accuracy, .. } => Some(*accuracy),
            ModeResult::Skipped { .. } => None,
        }
    }

    pub fn macro_f1(&self) -> Option<f64> {
        match self {
            ModeResult::Completed { metrics, .. } => Some(metrics.macro_f1),
            ModeResult::Skipped { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelBlock {
    pub model: ModelKind,
    pub name: String,
    pub with_time: ModeResult,
    pub without_time: ModeResult,
}

impl ModelBlock {
    pub fn mode(&self, mode: FeatureMode) -> &ModeResult {
        match mode {
            FeatureMode::WithTime => &self.with_time,
            FeatureMode::WithoutTime => &self.without_time,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: String,
    pub metadata: RunMetadata,
    pub models: Vec<ModelBlock>,
}

impl EvalReport {
    pub fn block(&self, kind: ModelKind) -> Option<&ModelBlock> {
        self.models.iter().find(|b| b.model == kind)
    }
}

/// Lays out one block per headline model with both feature modes; any
/// (model, mode) cell missing from `results` is marked skipped.
pub fn build_report(metadata: RunMetadata, mut results: Vec<(ModelKind, FeatureMode, ModeResult)>) -> EvalReport {
    let mut take = |kind: ModelKind, mode: FeatureMode| {
        results
            .iter()
            .position(|(k, m, _)| *k == kind && *m == mode)
            .map(|i| results.swap_remove(i).2)
            .unwrap_or_else(|| ModeResult::Skipped {
                reason: "not run".into(),
            })
    };
    let models = ModelKind::HEADLINE
        .iter()
        .map(|&kind| ModelBlock {
            model: kind,
            name: kind.display_name().to_string(),
            with_time: take(kind, FeatureMode::WithTime),
            without_time: take(kind, FeatureMode::WithoutTime),
        })
        .collect();
    EvalReport {
        schema_version: REPORT_SCHEMA_VERSION.into(),
        metadata,
        models,
    }
}

pub fn write_report(report: &EvalReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn read_report(text: &str) -> Result<EvalReport, serde_json::Error> {
    serde_json::from_str(text)
}

/// `model,mode,class,fpr,tpr`, one block per class per completed cell.
pub fn roc_csv(report: &EvalReport) -> String {
    let mut out = String::from("model,mode,class,fpr,tpr\n");
    for b in &report.models {
        for mode in FeatureMode::BOTH {
            if let ModeResult::Completed { roc, .. } = b.mode(mode) {
                for curve in &roc.curves {
                    for (fpr, tpr) in &curve.points {
                        let _ = writeln!(out, "{},{},{},{fpr},{tpr}", b.model.slug(), mode.slug(), curve.label.name());
                    }
                }
            }
        }
    }
    out
}

/// `model,mode,true_class,<one count column per predicted class>`.
pub fn confusion_csv(report: &EvalReport) -> String {
    let mut out = String::from("model,mode,true_class");
    for l in ClassLabel::ALL {
        out.push(',');
        out.push_str(l.name());
    }
    out.push('\n');
    for b in &report.models {
        for mode in FeatureMode::BOTH {
            if let ModeResult::Completed { confusion, .. } = b.mode(mode) {
                for (t, row) in confusion.counts.iter().enumerate() {
                    let _ = write!(out, "{},{},{}", b.model.slug(), mode.slug(), ClassLabel::ALL[t].name());
                    for c in row {
                        let _ = write!(out, ",{c}");
                    }
                    out.push('\n');
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> RunMetadata {
        RunMetadata {
            seed: 1,
            dataset_rows: 10,
            class_counts: [2; 5],
            evaluated_rows: 10,
            train_rows: 8,
            test_rows: 2,
            test_fraction: 0.2,
            smote: false,
            evaluation: "held-out test split".into(),
        }
    }

    #[test]
    fn missing_cells_are_skipped() {
        let r = build_report(meta(), Vec::new());
        assert_eq!(r.models.len(), 6);
        assert!(r.models.iter().all(|b| matches!(b.with_time, ModeResult::Skipped { .. })));
        let text = write_report(&r);
        assert!(text.contains("\"status\": \"skipped\""));
        assert_eq!(read_report(&text).unwrap(), r);
    }
}
