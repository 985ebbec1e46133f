use std::path::PathBuf;

use canids::models::ModelKind;
use canids::ClassLabel;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "canids", version, about = "CAN-bus intrusion detection with time-series features")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Seed for generation, splitting and training [default: 7].
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// JSON config file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Directory for datasets, models and reports [default: out].
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,

    /// Feature modes to train/evaluate [default: both].
    #[arg(long, global = true, value_enum)]
    pub features: Option<Features>,

    /// Comma-separated models, e.g. `logreg,rf,lstm` [default: all six].
    #[arg(long, global = true, value_delimiter = ',', value_parser = parse_model)]
    pub models: Option<Vec<ModelKind>>,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Features {
    With,
    Without,
    Both,
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse()
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize the labeled experiment stream as a unified CSV.
    Generate(GenerateArgs),
    /// Merge raw capture files into one time-sorted unified CSV.
    Ingest(IngestArgs),
    /// Train the selected models and save them with their scalers.
    Train(DataArgs),
    /// Score saved models on the held-out split and write the report.
    Evaluate(EvaluateArgs),
    /// Run a saved model over a frame stream and print alerts.
    Detect(DetectArgs),
    /// Print a saved report as a with/without comparison table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Scenario JSON (normal profile, attack windows, clock).
    #[arg(long, value_name = "PATH")]
    pub scenario: Option<PathBuf>,

    /// Output CSV [default: <out-dir>/dataset.csv].
    #[arg(long, short, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Candump-style log of normal traffic (repeatable).
    #[arg(long = "normal-log", value_name = "PATH")]
    pub normal_logs: Vec<PathBuf>,

    /// Attack CSV as `CLASS=PATH`, e.g. `DoS=dos.csv` (repeatable).
    #[arg(long = "attack", value_name = "CLASS=PATH", value_parser = parse_attack)]
    pub attacks: Vec<(ClassLabel, PathBuf)>,

    /// Unified CSV (repeatable).
    #[arg(long = "unified", value_name = "PATH")]
    pub unified: Vec<PathBuf>,

    /// Output CSV [default: <out-dir>/dataset.csv].
    #[arg(long, short, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

fn parse_attack(s: &str) -> Result<(ClassLabel, PathBuf), String> {
    let (class, path) = s.split_once('=').ok_or("expected CLASS=PATH")?;
    let class: ClassLabel = class.parse()?;
    if !class.is_attack() {
        return Err("attack class must not be Normal".into());
    }
    Ok((class, PathBuf::from(path)))
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Unified CSV [default: <out-dir>/dataset.csv].
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Skip cross-validation.
    #[arg(long)]
    pub no_cv: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StreamFormat {
    Unified,
    Candump,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Model file written by `train`.
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,

    /// Scaler file [default: the model path with `.scaler.json`].
    #[arg(long, value_name = "PATH")]
    pub scaler: Option<PathBuf>,

    /// Frame source; `-` reads standard input.
    #[arg(long, short, value_name = "PATH", default_value = "-")]
    pub input: PathBuf,

    #[arg(long, value_enum, default_value = "unified")]
    pub format: StreamFormat,

    /// Minimum winning-class probability for an alert [default: 0.5].
    #[arg(long)]
    pub threshold: Option<f64>,

    /// Alert file (NDJSON) instead of standard output.
    #[arg(long, value_name = "PATH")]
    pub alerts: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report JSON [default: <out-dir>/report.json].
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
}
