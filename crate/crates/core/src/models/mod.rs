//! Classifiers written from scratch behind one train/predict interface.
//!
//! Every model outputs five class probabilities per row. Prediction is the
//! argmax with ties going to the lowest class ordinal.

mod forest;
mod gbdt;
mod logreg;
mod lstm;
mod mlp;
mod optim;
mod persist;
mod svm;
mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;
use crate::N_CLASSES;

pub use forest::{ForestModel, ForestParams, MaxFeatures};
pub use gbdt::{GbdtModel, GbdtParams};
pub use logreg::{LogRegModel, LogRegParams};
pub use lstm::{LstmModel, LstmParams};
pub use mlp::{Activation, MlpModel, MlpParams};
pub use persist::{load_model, save_model, SCHEMA_VERSION};
pub use svm::{SvmModel, SvmParams};
pub use tree::{Node, Tree, TreeParams};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("input has {got} columns, model expects {expected}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("training set is empty")]
    EmptyInput,
    #[error("labels ({labels}) and rows ({rows}) differ in length")]
    LabelMismatch { labels: usize, rows: usize },
    #[error("label {0} outside 0..5")]
    LabelOutOfRange(usize),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparams(String),
    #[error("non-finite loss at epoch {epoch} (last finite loss {last_loss})")]
    NonFiniteLoss { epoch: usize, last_loss: f64 },
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("feature importance is not defined for {0:?}")]
    Unsupported(ModelKind),
    #[error("model file schema version `{found}`, expected `{expected}`")]
    VersionMismatch { found: String, expected: String },
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    LogReg,
    LinearSvm,
    DecisionTree,
    RandomForest,
    GradBoost,
    FeedForward,
    Lstm,
}

impl ModelKind {
    /// The six headline models, in report order.
    pub const HEADLINE: [ModelKind; 6] = [
        ModelKind::LogReg,
        ModelKind::LinearSvm,
        ModelKind::RandomForest,
        ModelKind::GradBoost,
        ModelKind::FeedForward,
        ModelKind::Lstm,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            ModelKind::LogReg => "logreg",
            ModelKind::LinearSvm => "svm",
            ModelKind::DecisionTree => "tree",
            ModelKind::RandomForest => "rf",
            ModelKind::GradBoost => "gbdt",
            ModelKind::FeedForward => "ff",
            ModelKind::Lstm => "lstm",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::LogReg => "Logistic Regression",
            ModelKind::LinearSvm => "SVC",
            ModelKind::DecisionTree => "Decision Tree",
            ModelKind::RandomForest => "Random Forest",
            ModelKind::GradBoost => "Xgboost",
            ModelKind::FeedForward => "Feed Forward",
            ModelKind::Lstm => "LSTM",
        }
    }

    /// Sequence models consume rows as an ordered stream.
    pub fn is_sequential(self) -> bool {
        self == ModelKind::Lstm
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "logreg" | "lr" | "logistic" => Ok(ModelKind::LogReg),
            "svm" | "svc" | "linearsvm" => Ok(ModelKind::LinearSvm),
            "tree" | "dt" => Ok(ModelKind::DecisionTree),
            "rf" | "forest" | "randomforest" => Ok(ModelKind::RandomForest),
            "gbdt" | "xgb" | "xgboost" | "gradboost" => Ok(ModelKind::GradBoost),
            "ff" | "mlp" | "feedforward" => Ok(ModelKind::FeedForward),
            "lstm" => Ok(ModelKind::Lstm),
            other => Err(format!("unknown model `{other}`")),
        }
    }
}

/// Per-kind hyperparameter bundle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params")]
pub enum Hyperparams {
    LogReg(LogRegParams),
    LinearSvm(SvmParams),
    DecisionTree(TreeParams),
    RandomForest(ForestParams),
    GradBoost(GbdtParams),
    FeedForward(MlpParams),
    Lstm(LstmParams),
}

impl Hyperparams {
    pub fn default_for(kind: ModelKind, seed: u64) -> Self {
        match kind {
            ModelKind::LogReg => Hyperparams::LogReg(LogRegParams { seed, ..Default::default() }),
            ModelKind::LinearSvm => Hyperparams::LinearSvm(SvmParams { seed, ..Default::default() }),
            ModelKind::DecisionTree => Hyperparams::DecisionTree(TreeParams { seed, ..Default::default() }),
            ModelKind::RandomForest => Hyperparams::RandomForest(ForestParams { seed, ..Default::default() }),
            ModelKind::GradBoost => Hyperparams::GradBoost(GbdtParams { seed, ..Default::default() }),
            ModelKind::FeedForward => Hyperparams::FeedForward(MlpParams { seed, ..Default::default() }),
            ModelKind::Lstm => Hyperparams::Lstm(LstmParams { seed, ..Default::default() }),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Hyperparams::LogReg(_) => ModelKind::LogReg,
            Hyperparams::LinearSvm(_) => ModelKind::LinearSvm,
            Hyperparams::DecisionTree(_) => ModelKind::DecisionTree,
            Hyperparams::RandomForest(_) => ModelKind::RandomForest,
            Hyperparams::GradBoost(_) => ModelKind::GradBoost,
            Hyperparams::FeedForward(_) => ModelKind::FeedForward,
            Hyperparams::Lstm(_) => ModelKind::Lstm,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Hyperparams::LogReg(p) => p.seed,
            Hyperparams::LinearSvm(p) => p.seed,
            Hyperparams::DecisionTree(p) => p.seed,
            Hyperparams::RandomForest(p) => p.seed,
            Hyperparams::GradBoost(p) => p.seed,
            Hyperparams::FeedForward(p) => p.seed,
            Hyperparams::Lstm(p) => p.seed,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(ModelError::InvalidHyperparams(what.to_string()))
            }
        };
        match self {
            Hyperparams::LogReg(p) => {
                check(p.c > 0.0, "C must be > 0")?;
                check(p.learning_rate > 0.0, "learning rate must be > 0")?;
                check(p.epochs >= 1 && p.batch_size >= 1, "epochs and batch size must be >= 1")
            }
            Hyperparams::LinearSvm(p) => {
                check(p.c > 0.0, "C must be > 0")?;
                check(p.learning_rate > 0.0, "learning rate must be > 0")?;
                check(p.epochs >= 1, "epochs must be >= 1")
            }
            Hyperparams::DecisionTree(p) => p.validate(),
            Hyperparams::RandomForest(p) => {
                check(p.n_trees >= 1, "n_trees must be >= 1")?;
                check(
                    p.sample_fraction > 0.0 && p.sample_fraction <= 1.0,
                    "sample_fraction must be in (0, 1]",
                )?;
                p.tree.validate()
            }
            Hyperparams::GradBoost(p) => {
                check(p.learning_rate > 0.0, "learning rate must be > 0")?;
                check(p.rounds >= 1 && p.max_depth >= 1, "rounds and depth must be >= 1")?;
                check(p.lambda >= 0.0 && p.alpha >= 0.0 && p.gamma >= 0.0, "penalties must be >= 0")?;
                check(p.subsample > 0.0 && p.subsample <= 1.0, "subsample must be in (0, 1]")
            }
            Hyperparams::FeedForward(p) => {
                check(p.learning_rate > 0.0, "learning rate must be > 0")?;
                check(p.epochs >= 1 && p.batch_size >= 1, "epochs and batch size must be >= 1")?;
                check(p.hidden.iter().all(|&h| h >= 1), "layer widths must be >= 1")
            }
            Hyperparams::Lstm(p) => {
                check(p.learning_rate > 0.0, "learning rate must be > 0")?;
                check(p.sequence_length >= 1, "sequence length must be >= 1")?;
                check(p.hidden >= 1 && p.epochs >= 1 && p.batch_size >= 1, "sizes must be >= 1")
            }
        }
    }
}

/// Learned parameters, one variant per kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model")]
pub enum ModelParams {
    LogReg(LogRegModel),
    LinearSvm(SvmModel),
    DecisionTree(Tree),
    RandomForest(ForestModel),
    GradBoost(GbdtModel),
    FeedForward(MlpModel),
    Lstm(LstmModel),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs_run: usize,
    pub final_loss: f64,
    pub n_features: usize,
    pub n_train: usize,
    pub n_classes: usize,
}

/// A fitted classifier. Immutable after training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub hyperparams: Hyperparams,
    pub params: ModelParams,
    pub meta: TrainingMeta,
}

pub(crate) fn check_training_input(x: &Matrix, y: &[usize]) -> Result<(), ModelError> {
    if x.rows() == 0 {
        return Err(ModelError::EmptyInput);
    }
    if x.rows() != y.len() {
        return Err(ModelError::LabelMismatch {
            labels: y.len(),
            rows: x.rows(),
        });
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= N_CLASSES) {
        return Err(ModelError::LabelOutOfRange(bad));
    }
    Ok(())
}

/// Trains the model described by `hp` on scaled features `x` and ordinal
/// labels `y`. For [`ModelKind::Lstm`] the rows of `x` must be in stream order.
pub fn train(hp: &Hyperparams, x: &Matrix, y: &[usize]) -> Result<TrainedModel, ModelError> {
    hp.validate()?;
    check_training_input(x, y)?;
    let (params, epochs_run, final_loss) = match hp {
        Hyperparams::LogReg(p) => {
            let (m, e, l) = logreg::train_logreg(x, y, p)?;
            (ModelParams::LogReg(m), e, l)
        }
        Hyperparams::LinearSvm(p) => {
            let (m, e, l) = svm::train_linear_svm(x, y, p)?;
            (ModelParams::LinearSvm(m), e, l)
        }
        Hyperparams::DecisionTree(p) => {
            let t = tree::train_decision_tree(x, y, p);
            let l = log_loss_of(|r, out| t.predict_into(r, out), x, y);
            (ModelParams::DecisionTree(t), 1, l)
        }
        Hyperparams::RandomForest(p) => {
            let m = forest::train_random_forest(x, y, p);
            let l = log_loss_of(|r, out| m.predict_into(r, out), x, y);
            (ModelParams::RandomForest(m), p.n_trees, l)
        }
        Hyperparams::GradBoost(p) => {
            let (m, l) = gbdt::train_gradboost(x, y, p)?;
            (ModelParams::GradBoost(m), p.rounds, l)
        }
        Hyperparams::FeedForward(p) => {
            let (m, e, l) = mlp::train_feedforward(x, y, p)?;
            (ModelParams::FeedForward(m), e, l)
        }
        Hyperparams::Lstm(p) => {
            let (m, e, l) = lstm::train_lstm(x, y, p)?;
            (ModelParams::Lstm(m), e, l)
        }
    };
    Ok(TrainedModel {
        kind: hp.kind(),
        hyperparams: hp.clone(),
        params,
        meta: TrainingMeta {
            seed: hp.seed(),
            epochs_run,
            final_loss,
            n_features: x.cols(),
            n_train: x.rows(),
            n_classes: N_CLASSES,
        },
    })
}

fn log_loss_of<F: Fn(&[f64], &mut [f64])>(predict: F, x: &Matrix, y: &[usize]) -> f64 {
    let mut p = [0.0; N_CLASSES];
    let mut total = 0.0;
    for (r, &c) in x.iter_rows().zip(y) {
        predict(r, &mut p);
        total -= p[c].max(1e-15).ln();
    }
    total / x.rows().max(1) as f64
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for j in 1..v.len() {
        if v[j] > v[best] {
            best = j;
        }
    }
    best
}

/// In-place numerically stable softmax.
pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

impl TrainedModel {
    pub fn n_features(&self) -> usize {
        self.meta.n_features
    }

    fn check_arity(&self, x: &Matrix) -> Result<(), ModelError> {
        if x.cols() != self.meta.n_features {
            return Err(ModelError::ArityMismatch {
                expected: self.meta.n_features,
                got: x.cols(),
            });
        }
        Ok(())
    }

    /// Class probabilities, one row per input row. Rows sum to 1.
    ///
    /// For the LSTM, row `i` is scored on the window of up to
    /// `sequence_length` rows ending at `i`, so `x` must be in stream order.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix, ModelError> {
        self.check_arity(x)?;
        let mut out = Matrix::zeros(x.rows(), N_CLASSES);
        match &self.params {
            ModelParams::Lstm(m) => m.predict_stream(x, &mut out),
            _ => {
                for i in 0..x.rows() {
                    self.predict_row_into(x.row(i), out.row_mut(i));
                }
            }
        }
        Ok(out)
    }

    /// Probabilities for one row. For the LSTM, `window` supplies the rows
    /// (oldest first) ending with the row to score; other kinds use only the
    /// last row of `window`.
    pub fn predict_window(&self, window: &[&[f64]]) -> Result<[f64; N_CLASSES], ModelError> {
        let last = window.last().ok_or(ModelError::EmptyInput)?;
        if last.len() != self.meta.n_features {
            return Err(ModelError::ArityMismatch {
                expected: self.meta.n_features,
                got: last.len(),
            });
        }
        let mut p = [0.0; N_CLASSES];
        match &self.params {
            ModelParams::Lstm(m) => m.predict_sequence(window, &mut p),
            _ => self.predict_row_into(last, &mut p),
        }
        Ok(p)
    }

    fn predict_row_into(&self, row: &[f64], out: &mut [f64]) {
        match &self.params {
            ModelParams::LogReg(m) => m.predict_into(row, out),
            ModelParams::LinearSvm(m) => m.predict_into(row, out),
            ModelParams::DecisionTree(t) => t.predict_into(row, out),
            ModelParams::RandomForest(m) => m.predict_into(row, out),
            ModelParams::GradBoost(m) => m.predict_into(row, out),
            ModelParams::FeedForward(m) => m.predict_into(row, out),
            ModelParams::Lstm(m) => m.predict_sequence(&[row], out),
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>, ModelError> {
        let p = self.predict_proba(x)?;
        Ok(p.iter_rows().map(argmax).collect())
    }

    /// Non-negative per-column weights summing to 1, sorted descending.
    pub fn feature_importance(&self, column_names: &[String]) -> Result<Vec<(String, f64)>, ModelError> {
        let raw = match &self.params {
            ModelParams::LogReg(m) => m.coefficient_importance(),
            ModelParams::LinearSvm(m) => m.coefficient_importance(),
            ModelParams::DecisionTree(t) => t.impurity_importance(),
            ModelParams::RandomForest(m) => m.feature_importance(),
            ModelParams::GradBoost(m) => m.gain_importance(),
            ModelParams::FeedForward(_) | ModelParams::Lstm(_) => {
                return Err(ModelError::Unsupported(self.kind))
            }
        };
        let total: f64 = raw.iter().sum();
        let n = raw.len();
        let mut ranked: Vec<(String, f64)> = raw
            .into_iter()
            .enumerate()
            .map(|(j, w)| {
                let name = column_names.get(j).cloned().unwrap_or_else(|| format!("x{j}"));
                let w = if total > 0.0 { w / total } else { 1.0 / n as f64 };
                (name, w)
            })
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        Ok(ranked)
    }
}
