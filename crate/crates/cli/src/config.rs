use std::fs;
use std::path::{Path, PathBuf};

use canids::clock::LocalClock;
use canids::experiment::{ExperimentOptions, SmoteOptions};
use canids::metrics::{CvConfig, FeatureMode};
use canids::models::{Hyperparams, ModelKind};
use canids::traffic::ExperimentConfig;
use serde::Deserialize;

use crate::args::{Features, GlobalArgs};
use crate::CliError;

pub const DEFAULT_SEED: u64 = 7;

/// Contents of `--config`. Every field is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub features: Option<Features>,
    pub models: Option<Vec<String>>,
    /// Generator scenario; `--seed` reseeds it.
    pub scenario: Option<ExperimentConfig>,
    pub utc_offset_hours: Option<i32>,
    pub test_fraction: Option<f64>,
    /// 0 keeps every row.
    pub max_rows: Option<usize>,
    pub smote: Option<SmoteOptions>,
    pub cv_folds: Option<usize>,
    pub cv_repeats: Option<usize>,
    pub cv_models: Option<Vec<String>>,
    pub hyperparams: Vec<Hyperparams>,
    pub threshold: Option<f64>,
}

/// Flags merged over the config file.
#[derive(Debug)]
pub struct Settings {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub scenario: Option<ExperimentConfig>,
    pub clock: LocalClock,
    pub experiment: ExperimentOptions,
    pub threshold: Option<f64>,
}

fn parse_models(names: &[String]) -> Result<Vec<ModelKind>, CliError> {
    names.iter().map(|n| n.parse().map_err(CliError::Usage)).collect()
}

fn read_config(path: &Path) -> Result<FileConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

impl Settings {
    pub fn resolve(global: &GlobalArgs) -> Result<Settings, CliError> {
        let file = match &global.config {
            Some(p) => read_config(p)?,
            None => FileConfig::default(),
        };
        let seed = global.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
        let features = global.features.or(file.features).unwrap_or(Features::Both);
        let modes = match features {
            Features::With => vec![FeatureMode::WithTime],
            Features::Without => vec![FeatureMode::WithoutTime],
            Features::Both => FeatureMode::BOTH.to_vec(),
        };
        let models = match (&global.models, &file.models) {
            (Some(m), _) => m.clone(),
            (None, Some(names)) => parse_models(names)?,
            (None, None) => ModelKind::HEADLINE.to_vec(),
        };
        if models.is_empty() {
            return Err(CliError::Usage("--models must name at least one model".into()));
        }
        let mut scenario = file.scenario;
        if let (Some(s), Some(seed)) = (scenario.as_mut(), global.seed) {
            s.reseed(seed);
        }
        let clock = match file.utc_offset_hours {
            Some(h) => LocalClock::with_offset_hours(h),
            None => scenario.as_ref().map(|s| s.clock).unwrap_or_default(),
        };

        let defaults = ExperimentOptions::default();
        let cv_models = match &file.cv_models {
            Some(names) => parse_models(names)?,
            None => defaults.cv_models.clone(),
        };
        let experiment = ExperimentOptions {
            seed,
            test_fraction: file.test_fraction.unwrap_or(defaults.test_fraction),
            max_rows: match file.max_rows {
                Some(0) => None,
                Some(n) => Some(n),
                None => defaults.max_rows,
            },
            smote: file.smote,
            models,
            modes,
            cv: Some(CvConfig {
                k: file.cv_folds.unwrap_or(3),
                repeats: file.cv_repeats.unwrap_or(2),
                seed,
            }),
            cv_models,
            overrides: file.hyperparams,
        };
        if !(experiment.test_fraction > 0.0 && experiment.test_fraction < 1.0) {
            return Err(CliError::Usage("test_fraction must lie in (0, 1)".into()));
        }
        for hp in &experiment.overrides {
            hp.validate().map_err(|e| CliError::Usage(format!("hyperparams: {e}")))?;
        }
        Ok(Settings {
            seed,
            out_dir: global
                .out_dir
                .clone()
                .or(file.out_dir)
                .unwrap_or_else(|| PathBuf::from("out")),
            scenario,
            clock,
            experiment,
            threshold: file.threshold,
        })
    }

    pub fn dataset_path(&self, explicit: Option<&PathBuf>) -> PathBuf {
        explicit.cloned().unwrap_or_else(|| self.out_dir.join("dataset.csv"))
    }

    pub fn models_dir(&self) -> PathBuf {
        self.out_dir.join("models")
    }
}
