//! The with/without time-feature comparison.
//!
//! Rows are split once (stratified, stream order kept). Each feature mode
//! then fits its own scaler on the training rows, optionally oversamples the
//! training rows with SMOTE, and trains every requested model.
//!
//! The LSTM reads consecutive rows as a sequence. With time features it sees
//! rows in stream order. Without them the rows are presented in a seeded
//! random order, because arrival order is itself timing information.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::LocalClock;
use crate::matrix::Matrix;
use crate::metrics::{
    build_report, class_metrics, confusion, cross_validate, roc_auc_ovr, CvConfig, CvResult, EvalReport,
    FeatureMode, MetricsError, ModeResult, RunMetadata,
};
use crate::models::{argmax, train, Hyperparams, ModelError, ModelKind, TrainedModel};
use crate::pipeline::{
    apply_scaler, assemble_matrix, fit_scaler, smote_oversample, split_train_test, Dataset, PipelineError,
    ScalerParams,
};
use crate::traffic::{build_experiment_dataset, ExperimentConfig, TrafficError};
use crate::{seeded_rng, CanFrame, ClassLabel};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{kind:?}: {source}")]
    Model {
        kind: ModelKind,
        #[source]
        source: ModelError,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoteOptions {
    pub k: usize,
    /// Per-class target count; `None` raises every class to the largest one.
    pub target: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOptions {
    pub seed: u64,
    pub test_fraction: f64,
    /// Stratified subsample of the dataset before splitting.
    pub max_rows: Option<usize>,
    pub smote: Option<SmoteOptions>,
    pub models: Vec<ModelKind>,
    pub modes: Vec<FeatureMode>,
    /// Cross-validation settings and the models it runs for.
    pub cv: Option<CvConfig>,
    pub cv_models: Vec<ModelKind>,
    /// Replaces the default hyperparameters of matching kinds.
    pub overrides: Vec<Hyperparams>,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            seed: 7,
            test_fraction: 0.2,
            max_rows: Some(100_000),
            smote: None,
            models: ModelKind::HEADLINE.to_vec(),
            modes: FeatureMode::BOTH.to_vec(),
            cv: Some(CvConfig {
                k: 3,
                repeats: 2,
                seed: 7,
            }),
            cv_models: vec![ModelKind::GradBoost],
            overrides: Vec::new(),
        }
    }
}

impl ExperimentOptions {
    /// Hyperparameters for `kind`: an override if present, else defaults
    /// seeded from the run seed.
    pub fn hyperparams(&self, kind: ModelKind) -> Hyperparams {
        self.overrides
            .iter()
            .find(|h| h.kind() == kind)
            .cloned()
            .unwrap_or_else(|| Hyperparams::default_for(kind, self.seed.wrapping_add(kind as u64)))
    }
}

/// Frames to the full (12-column) dataset.
pub fn dataset_from_frames(frames: &[CanFrame], clock: &LocalClock) -> Result<Dataset, ExperimentError> {
    Ok(Dataset::from_frames(frames, clock, true)?)
}

/// Generates the synthetic experiment stream and decodes it.
pub fn synthetic_dataset(config: &ExperimentConfig) -> Result<Dataset, ExperimentError> {
    let frames = build_experiment_dataset(config)?;
    dataset_from_frames(&frames, &config.clock)
}

/// Stratified subsample of at most `max_rows` rows, stream order kept.
pub fn subsample(dataset: &Dataset, max_rows: usize, seed: u64) -> Result<Dataset, ExperimentError> {
    if dataset.len() <= max_rows {
        return Ok(dataset.clone());
    }
    let fraction = max_rows as f64 / dataset.len() as f64;
    let (_, kept) = split_train_test(dataset, fraction, seed ^ 0x5eed_5eed)?;
    Ok(kept)
}

/// Scaled train/test matrices for one feature mode.
#[derive(Clone, Debug)]
pub struct PreparedMode {
    pub mode: FeatureMode,
    pub scaler: ScalerParams,
    pub column_names: Vec<String>,
    pub x_train: Matrix,
    pub y_train: Vec<usize>,
    pub x_test: Matrix,
    pub y_test: Vec<usize>,
}

fn smote_target(ds: &Dataset, opts: &SmoteOptions) -> usize {
    opts.target.unwrap_or_else(|| ds.class_counts.iter().copied().max().unwrap_or(0))
}

/// Fits the scaler (and optional SMOTE) on `train` and transforms both splits.
pub fn prepare_mode(
    train: &Dataset,
    test: &Dataset,
    mode: FeatureMode,
    smote: Option<&SmoteOptions>,
    seed: u64,
) -> Result<PreparedMode, ExperimentError> {
    let time = mode.time_features();
    let train = train.clone().with_time_features(time);
    let train = match smote {
        Some(s) => smote_oversample(&train, s.k, smote_target(&train, s), seed)?,
        None => train,
    };
    let a_train = assemble_matrix(&train, time);
    let a_test = assemble_matrix(test, time);
    let scaler = fit_scaler(&a_train.x)?;
    Ok(PreparedMode {
        mode,
        x_train: apply_scaler(&scaler, &a_train.x)?,
        y_train: a_train.y,
        x_test: apply_scaler(&scaler, &a_test.x)?,
        y_test: a_test.y,
        column_names: a_train.column_names,
        scaler,
    })
}

/// Rows as the model should see them; only the time-free LSTM is reordered.
fn presentation(kind: ModelKind, mode: FeatureMode, x: &Matrix, y: &[usize], seed: u64) -> (Matrix, Vec<usize>) {
    if kind.is_sequential() && mode == FeatureMode::WithoutTime {
        let mut idx: Vec<usize> = (0..x.rows()).collect();
        idx.shuffle(&mut seeded_rng(seed, 0x0dd));
        (x.select_rows(&idx), idx.iter().map(|&i| y[i]).collect())
    } else {
        (x.clone(), y.to_vec())
    }
}

pub fn fit_model(
    hp: &Hyperparams,
    prepared: &PreparedMode,
    seed: u64,
) -> Result<TrainedModel, ExperimentError> {
    let kind = hp.kind();
    let (x, y) = presentation(kind, prepared.mode, &prepared.x_train, &prepared.y_train, seed);
    train(hp, &x, &y).map_err(|source| ExperimentError::Model { kind, source })
}

/// Scores a fitted model on the prepared test rows.
pub fn evaluate_model(
    model: &TrainedModel,
    prepared: &PreparedMode,
    seed: u64,
) -> Result<ModeResult, ExperimentError> {
    let kind = model.kind;
    let (x, y) = presentation(kind, prepared.mode, &prepared.x_test, &prepared.y_test, seed.wrapping_add(1));
    let proba = model
        .predict_proba(&x)
        .map_err(|source| ExperimentError::Model { kind, source })?;
    let pred: Vec<usize> = proba.iter_rows().map(argmax).collect();
    let cm = confusion(&y, &pred)?;
    let metrics = class_metrics(&cm)?;
    let roc = roc_auc_ovr(&y, &proba)?;
    let feature_importance = model.feature_importance(&prepared.column_names).ok();
    Ok(ModeResult::Completed {
        accuracy: metrics.accuracy,
        metrics,
        confusion: cm,
        roc,
        cv: None,
        final_train_loss: model.meta.final_loss,
        feature_importance,
    })
}

/// Repeated stratified k-fold accuracy, refitting scaler and SMOTE per fold.
pub fn cross_validate_model(
    hp: &Hyperparams,
    dataset: &Dataset,
    mode: FeatureMode,
    smote: Option<&SmoteOptions>,
    config: CvConfig,
) -> Result<CvResult, ExperimentError> {
    let labels: Vec<usize> = dataset.rows.iter().map(|r| r.label.ordinal()).collect();
    cross_validate(&labels, config, |train_idx, test_idx| {
        let train = dataset.subset(train_idx);
        let test = dataset.subset(test_idx);
        let smote = smote.filter(|_| !hp.kind().is_sequential());
        let prepared = prepare_mode(&train, &test, mode, smote, config.seed)?;
        let model = fit_model(hp, &prepared, config.seed)?;
        Ok(evaluate_model(&model, &prepared, config.seed)?.accuracy().unwrap_or(0.0))
    })
}

/// The evaluated rows, their split and the per-mode matrices.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub dataset_rows: usize,
    pub class_counts: [usize; ClassLabel::COUNT],
    /// Rows kept after subsampling; cross-validation folds are drawn from these.
    pub data: Dataset,
    pub train_rows: usize,
    pub test_rows: usize,
    modes: Vec<(FeatureMode, PreparedMode, Option<PreparedMode>)>,
}

impl Prepared {
    /// Matrices `kind` trains and is scored on. Sequence models never see
    /// SMOTE rows.
    pub fn for_model(&self, kind: ModelKind, mode: FeatureMode) -> Option<&PreparedMode> {
        self.modes.iter().find(|(m, _, _)| *m == mode).map(|(_, plain, smoted)| match smoted {
            Some(s) if !kind.is_sequential() => s,
            _ => plain,
        })
    }
}

/// Subsamples, splits and prepares every requested mode.
pub fn prepare(dataset: &Dataset, opts: &ExperimentOptions) -> Result<Prepared, ExperimentError> {
    let data = match opts.max_rows {
        Some(m) => subsample(dataset, m, opts.seed)?,
        None => dataset.clone(),
    };
    let (train, test) = split_train_test(&data, opts.test_fraction, opts.seed)?;
    let mut modes = Vec::new();
    for &mode in &opts.modes {
        let plain = prepare_mode(&train, &test, mode, None, opts.seed)?;
        let smoted = match &opts.smote {
            Some(s) => Some(prepare_mode(&train, &test, mode, Some(s), opts.seed)?),
            None => None,
        };
        modes.push((mode, plain, smoted));
    }
    Ok(Prepared {
        dataset_rows: dataset.len(),
        class_counts: dataset.class_counts,
        train_rows: train.len(),
        test_rows: test.len(),
        data,
        modes,
    })
}

fn missing_mode(mode: FeatureMode) -> ExperimentError {
    ExperimentError::Pipeline(PipelineError::InvalidParameter(format!("feature mode {} was not prepared", mode.slug())))
}

pub fn train_cell(
    prepared: &Prepared,
    opts: &ExperimentOptions,
    kind: ModelKind,
    mode: FeatureMode,
) -> Result<TrainedModel, ExperimentError> {
    let prep = prepared.for_model(kind, mode).ok_or_else(|| missing_mode(mode))?;
    fit_model(&opts.hyperparams(kind), prep, opts.seed)
}

/// Held-out scores for a trained model, plus cross-validation when the
/// options ask for it for this kind.
pub fn evaluate_cell(
    prepared: &Prepared,
    opts: &ExperimentOptions,
    model: &TrainedModel,
    mode: FeatureMode,
) -> Result<ModeResult, ExperimentError> {
    let kind = model.kind;
    let prep = prepared.for_model(kind, mode).ok_or_else(|| missing_mode(mode))?;
    let mut result = evaluate_model(model, prep, opts.seed)?;
    if let (Some(cfg), true) = (opts.cv, opts.cv_models.contains(&kind)) {
        let ds = prepared.data.clone().with_time_features(mode.time_features());
        let cv_res = cross_validate_model(&model.hyperparams, &ds, mode, opts.smote.as_ref(), cfg)?;
        if let ModeResult::Completed { cv, .. } = &mut result {
            *cv = Some(cv_res);
        }
    }
    log::info!("{} / {}: accuracy {:?}", kind.slug(), mode.slug(), result.accuracy());
    Ok(result)
}

/// Every requested (model, mode) pair in declaration order.
pub fn cells(opts: &ExperimentOptions) -> Vec<(ModelKind, FeatureMode)> {
    opts.models
        .iter()
        .flat_map(|&k| opts.modes.iter().map(move |&m| (k, m)))
        .collect()
}

pub fn assemble_report(
    prepared: &Prepared,
    opts: &ExperimentOptions,
    results: Vec<(ModelKind, FeatureMode, ModeResult)>,
) -> EvalReport {
    let metadata = RunMetadata {
        seed: opts.seed,
        dataset_rows: prepared.dataset_rows,
        class_counts: prepared.class_counts,
        evaluated_rows: prepared.data.len(),
        train_rows: prepared.train_rows,
        test_rows: prepared.test_rows,
        test_fraction: opts.test_fraction,
        smote: opts.smote.is_some(),
        evaluation: "held-out stratified test split; cv block is repeated stratified k-fold".into(),
    };
    build_report(metadata, results)
}

/// Trains and scores every (model, mode) cell and assembles the report.
pub fn run_experiment(dataset: &Dataset, opts: &ExperimentOptions) -> Result<EvalReport, ExperimentError> {
    let prepared = prepare(dataset, opts)?;
    let results = cells(opts)
        .par_iter()
        .map(|&(kind, mode)| {
            let model = train_cell(&prepared, opts, kind, mode)?;
            Ok((kind, mode, evaluate_cell(&prepared, opts, &model, mode)?))
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    Ok(assemble_report(&prepared, opts, results))
}
