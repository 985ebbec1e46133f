use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use canids::canframe::{read_frames, write_unified_csv, InputFormat};
use canids::clock::LocalClock;
use canids::experiment::{
    assemble_report, cells, dataset_from_frames, evaluate_cell, prepare, train_cell, ExperimentError, Prepared,
};
use canids::metrics::{confusion_csv, read_report, roc_csv, write_report, EvalReport, FeatureMode, ModeResult};
use canids::models::{load_model, save_model, ModelKind, TrainedModel};
use canids::monitor::{run_stream, DetectorState, DEFAULT_THRESHOLD};
use canids::pipeline::{Dataset, ScalerParams};
use canids::traffic::{build_experiment_dataset, ExperimentConfig};
use canids::{CanFrame, ClassLabel};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::args::{DetectArgs, EvaluateArgs, GenerateArgs, IngestArgs, ReportArgs, StreamFormat};
use crate::config::Settings;
use crate::CliError;

pub const SCALER_SCHEMA_VERSION: &str = "1";

/// Preprocessing saved next to each model so `detect` can rebuild its input.
#[derive(Debug, Serialize, Deserialize)]
pub struct ScalerFile {
    pub schema_version: String,
    pub model: ModelKind,
    pub feature_mode: FeatureMode,
    pub clock: LocalClock,
    pub column_names: Vec<String>,
    pub scaler: ScalerParams,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub model: ModelKind,
    pub mode: FeatureMode,
    pub status: String,
    pub seed: u64,
    pub epochs_run: Option<usize>,
    pub final_loss: Option<f64>,
    pub n_train: Option<usize>,
    pub train_secs: f64,
    pub error: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainLog {
    pub seed: u64,
    pub dataset: PathBuf,
    pub dataset_rows: usize,
    pub evaluated_rows: usize,
    pub train_rows: usize,
    pub entries: Vec<TrainLogEntry>,
}

pub fn model_path(dir: &Path, kind: ModelKind, mode: FeatureMode) -> PathBuf {
    dir.join(format!("{}-{}.json", kind.slug(), mode.slug()))
}

pub fn scaler_path_for(model: &Path) -> PathBuf {
    let stem = model.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    model.with_file_name(format!("{stem}.scaler.json"))
}

fn data_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn create_file(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| data_err(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| data_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut f = create_file(path)?;
    f.write_all(text.as_bytes())
        .and_then(|_| f.flush())
        .map_err(|e| data_err(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| data_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| data_err(path, e))
}

fn read_frame_file(path: &Path, format: InputFormat) -> Result<Vec<CanFrame>, CliError> {
    let file = File::open(path).map_err(|e| data_err(path, e))?;
    let outcome = read_frames(BufReader::new(file), format).map_err(|e| data_err(path, e))?;
    if !outcome.errors.is_empty() {
        log::warn!(
            "{}: {} unparseable lines (first: {})",
            path.display(),
            outcome.errors.len(),
            outcome.errors[0]
        );
    }
    if outcome.removed_incomplete > 0 {
        log::warn!("{}: {} incomplete records removed", path.display(), outcome.removed_incomplete);
    }
    Ok(outcome.frames)
}

fn print_class_counts(frames: &[CanFrame]) {
    let mut counts = [0usize; ClassLabel::COUNT];
    for f in frames {
        counts[f.label.ordinal()] += 1;
    }
    for label in ClassLabel::ALL {
        println!("{:<10} {:>8}", label.name(), counts[label.ordinal()]);
    }
    println!("{:<10} {:>8}", "total", frames.len());
}

pub fn generate(settings: &Settings, args: &GenerateArgs, explicit_seed: Option<u64>) -> Result<(), CliError> {
    let config = match &args.scenario {
        Some(p) => {
            let mut c: ExperimentConfig = read_json(p).map_err(|e| CliError::Usage(e.to_string()))?;
            if let Some(seed) = explicit_seed {
                c.reseed(seed);
            }
            c
        }
        None => settings
            .scenario
            .clone()
            .unwrap_or_else(|| ExperimentConfig::default_with_seed(settings.seed)),
    };
    let frames = build_experiment_dataset(&config).map_err(|e| CliError::Usage(format!("scenario: {e}")))?;
    let out = settings.dataset_path(args.output.as_ref());
    let mut w = create_file(&out)?;
    write_unified_csv(&mut w, &frames).map_err(|e| data_err(&out, e))?;
    println!("wrote {}", out.display());
    print_class_counts(&frames);
    Ok(())
}

pub fn ingest(settings: &Settings, args: &IngestArgs) -> Result<(), CliError> {
    let mut inputs: Vec<(&Path, InputFormat)> = Vec::new();
    inputs.extend(args.normal_logs.iter().map(|p| (p.as_path(), InputFormat::NormalLog)));
    inputs.extend(args.attacks.iter().map(|(c, p)| (p.as_path(), InputFormat::AttackCsv(*c))));
    inputs.extend(args.unified.iter().map(|p| (p.as_path(), InputFormat::Unified)));
    if inputs.is_empty() {
        return Err(CliError::Usage("ingest needs at least one --normal-log, --attack or --unified input".into()));
    }
    let mut frames = Vec::new();
    for (path, format) in inputs {
        let part = read_frame_file(path, format)?;
        println!("{}: {} frames", path.display(), part.len());
        frames.extend(part);
    }
    if frames.is_empty() {
        return Err(CliError::Data("no frames parsed from the inputs".into()));
    }
    frames.sort_by_key(|f| f.timestamp);
    let out = settings.dataset_path(args.output.as_ref());
    let mut w = create_file(&out)?;
    write_unified_csv(&mut w, &frames).map_err(|e| data_err(&out, e))?;
    println!("wrote {}", out.display());
    print_class_counts(&frames);
    Ok(())
}

fn load_dataset(path: &Path, clock: &LocalClock) -> Result<Dataset, CliError> {
    let frames = read_frame_file(path, InputFormat::Unified)?;
    if frames.is_empty() {
        return Err(data_err(path, "no frames"));
    }
    dataset_from_frames(&frames, clock).map_err(|e| data_err(path, e))
}

fn prepare_data(settings: &Settings, data: Option<&PathBuf>) -> Result<(PathBuf, Prepared), CliError> {
    let path = settings.dataset_path(data);
    let dataset = load_dataset(&path, &settings.clock)?;
    let prepared = prepare(&dataset, &settings.experiment).map_err(|e| data_err(&path, e))?;
    Ok((path, prepared))
}

pub fn train(settings: &Settings, data: Option<&PathBuf>) -> Result<(), CliError> {
    let (path, prepared) = prepare_data(settings, data)?;
    let opts = &settings.experiment;
    let outcomes: Vec<(ModelKind, FeatureMode, f64, Result<TrainedModel, ExperimentError>)> = cells(opts)
        .par_iter()
        .map(|&(kind, mode)| {
            let t = Instant::now();
            let r = train_cell(&prepared, opts, kind, mode);
            (kind, mode, t.elapsed().as_secs_f64(), r)
        })
        .collect();

    let dir = settings.models_dir();
    fs::create_dir_all(&dir).map_err(|e| data_err(&dir, e))?;
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for (kind, mode, secs, outcome) in outcomes {
        let seed = opts.hyperparams(kind).seed();
        let entry = match outcome {
            Ok(model) => {
                let prep = prepared.for_model(kind, mode).expect("mode was prepared");
                let mpath = model_path(&dir, kind, mode);
                save_model(&model, &mpath).map_err(|e| data_err(&mpath, e))?;
                let scaler = ScalerFile {
                    schema_version: SCALER_SCHEMA_VERSION.into(),
                    model: kind,
                    feature_mode: mode,
                    clock: settings.clock,
                    column_names: prep.column_names.clone(),
                    scaler: prep.scaler.clone(),
                };
                let text = serde_json::to_string_pretty(&scaler).expect("scaler serializes");
                write_text(&scaler_path_for(&mpath), &text)?;
                println!(
                    "{:<6} {:<7} loss {:.6} after {} epochs -> {}",
                    kind.slug(),
                    mode.slug(),
                    model.meta.final_loss,
                    model.meta.epochs_run,
                    mpath.display()
                );
                TrainLogEntry {
                    model: kind,
                    mode,
                    status: "ok".into(),
                    seed,
                    epochs_run: Some(model.meta.epochs_run),
                    final_loss: Some(model.meta.final_loss),
                    n_train: Some(model.meta.n_train),
                    train_secs: secs,
                    error: None,
                }
            }
            Err(e) => {
                eprintln!("{} / {}: training failed: {e}", kind.slug(), mode.slug());
                failures.push(format!("{}/{}", kind.slug(), mode.slug()));
                TrainLogEntry {
                    model: kind,
                    mode,
                    status: "failed".into(),
                    seed,
                    epochs_run: None,
                    final_loss: None,
                    n_train: None,
                    train_secs: secs,
                    error: Some(e.to_string()),
                }
            }
        };
        entries.push(entry);
    }
    let log = TrainLog {
        seed: settings.seed,
        dataset: path,
        dataset_rows: prepared.dataset_rows,
        evaluated_rows: prepared.data.len(),
        train_rows: prepared.train_rows,
        entries,
    };
    let log_path = settings.out_dir.join("train_log.json");
    write_text(&log_path, &(serde_json::to_string_pretty(&log).expect("log serializes") + "\n"))?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Training(format!("failed cells: {}", failures.join(", "))))
    }
}

pub fn evaluate(settings: &Settings, args: &EvaluateArgs) -> Result<EvalReport, CliError> {
    let dir = settings.models_dir();
    let wanted = cells(&settings.experiment);
    let missing: Vec<String> = wanted
        .iter()
        .map(|&(k, m)| model_path(&dir, k, m))
        .filter(|p| !p.exists())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Data(format!("missing model files (run `train` first): {}", missing.join(", "))));
    }
    let mut opts = settings.experiment.clone();
    if args.no_cv {
        opts.cv = None;
    }
    let (_, prepared) = prepare_data(settings, args.data.data.as_ref())?;
    let mut models = Vec::new();
    for &(kind, mode) in &wanted {
        let p = model_path(&dir, kind, mode);
        let model = load_model(&p).map_err(|e| data_err(&p, e))?;
        let expected = prepared.for_model(kind, mode).map(|m| m.x_test.cols());
        if model.kind != kind || Some(model.meta.n_features) != expected {
            return Err(data_err(&p, "model does not match the requested kind or feature mode"));
        }
        models.push((kind, mode, model));
    }
    let results = models
        .par_iter()
        .map(|(kind, mode, model)| {
            evaluate_cell(&prepared, &opts, model, *mode)
                .map(|r| (*kind, *mode, r))
                .map_err(|e| CliError::Data(format!("{} / {}: {e}", kind.slug(), mode.slug())))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let report = assemble_report(&prepared, &opts, results);
    write_text(&settings.out_dir.join("report.json"), &write_report(&report))?;
    write_text(&settings.out_dir.join("roc.csv"), &roc_csv(&report))?;
    write_text(&settings.out_dir.join("confusion.csv"), &confusion_csv(&report))?;
    print!("{}", render_table(&report));
    Ok(report)
}

pub fn detect(settings: &Settings, args: &DetectArgs) -> Result<(), CliError> {
    let threshold = args.threshold.or(settings.threshold).unwrap_or(DEFAULT_THRESHOLD);
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(CliError::Usage(format!("--threshold {threshold} outside (0, 1]")));
    }
    let model = load_model(&args.model).map_err(|e| data_err(&args.model, e))?;
    let scaler_path = args.scaler.clone().unwrap_or_else(|| scaler_path_for(&args.model));
    let scaler: ScalerFile = read_json(&scaler_path)?;
    if scaler.schema_version != SCALER_SCHEMA_VERSION {
        return Err(data_err(&scaler_path, format!("unsupported schema version {}", scaler.schema_version)));
    }
    let mut state = DetectorState::new(model, scaler.scaler, scaler.clock, threshold)
        .map_err(|e| data_err(&args.model, e))?;
    let input: Box<dyn io::BufRead> = if args.input.as_os_str() == "-" {
        Box::new(io::stdin().lock())
    } else {
        Box::new(BufReader::new(File::open(&args.input).map_err(|e| data_err(&args.input, e))?))
    };
    let format = match args.format {
        StreamFormat::Unified => InputFormat::Unified,
        StreamFormat::Candump => InputFormat::NormalLog,
    };
    let summary = match &args.alerts {
        Some(p) => {
            let mut sink = create_file(p)?;
            run_stream(&mut state, input, format, &mut sink)
        }
        None => run_stream(&mut state, input, format, &mut io::stdout().lock()),
    }
    .map_err(|e| data_err(&args.input, e))?;
    println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
    Ok(())
}

pub fn report(settings: &Settings, args: &ReportArgs) -> Result<(), CliError> {
    let path = args.report.clone().unwrap_or_else(|| settings.out_dir.join("report.json"));
    let text = fs::read_to_string(&path).map_err(|e| data_err(&path, e))?;
    let report = read_report(&text).map_err(|e| data_err(&path, e))?;
    print!("{}", render_table(&report));
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

/// Side-by-side accuracy and macro-F1 with and without time features.
pub fn render_table(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<22} {:>9} {:>9} {:>8} {:>9} {:>9}",
        "model", "acc+time", "acc-time", "gap", "f1+time", "f1-time"
    );
    for b in &report.models {
        let (aw, ao) = (b.with_time.accuracy(), b.without_time.accuracy());
        let gap = aw.zip(ao).map(|(w, o)| w - o);
        let _ = writeln!(
            out,
            "{:<22} {:>9} {:>9} {:>8} {:>9} {:>9}",
            b.name,
            fmt_opt(aw),
            fmt_opt(ao),
            fmt_opt(gap),
            fmt_opt(b.with_time.macro_f1()),
            fmt_opt(b.without_time.macro_f1()),
        );
    }
    for b in &report.models {
        for mode in FeatureMode::BOTH {
            if let ModeResult::Completed { cv: Some(cv), .. } = b.mode(mode) {
                let _ = writeln!(
                    out,
                    "cv {} / {}: mean {:.4} sd {:.4} over {} folds",
                    b.model.slug(),
                    mode.slug(),
                    cv.mean,
                    cv.stddev,
                    cv.fold_scores.len()
                );
            }
        }
    }
    if let Some(ModeResult::Completed {
        feature_importance: Some(fi),
        ..
    }) = report.block(ModelKind::RandomForest).map(|b| &b.with_time)
    {
        let top: Vec<String> = fi.iter().take(3).map(|(n, w)| format!("{n} {w:.3}")).collect();
        let _ = writeln!(out, "rf importance (with time): {}", top.join(", "));
    }
    out
}
