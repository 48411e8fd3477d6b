//! `chromaqt`: synthesize, prepare, run the experiment matrix, explain and
//! report.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
//! Failures print one line to stderr: `error[<kind>]: <message>`.

mod commands;
mod config;
mod provenance;

use std::path::PathBuf;
use std::process::ExitCode;

use chromaqt::error::ErrorClass;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use config::{one_line, RunConfig};

/// Invalid flags, config or stage order.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// A self-test whose oracle check did not hold.
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

#[derive(Debug, Parser)]
#[command(
    name = "chromaqt",
    version,
    about = "Pseudo-colored ECG images, few-shot QT risk classification and explanations"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output root for every stage.
    #[arg(
        long,
        global = true,
        env = "CHROMAQT_OUT",
        default_value = "chromaqt-out"
    )]
    pub out: PathBuf,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Boundary CSV with header hr_bpm,qt_ms.
    #[arg(long, global = true)]
    pub boundary: Option<PathBuf>,
    /// Print the resolved configuration as TOML and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic corpus: manifest.csv and records/.
    Synth(SynthArgs),
    /// Label records, render the four image representations, assign folds.
    Prepare(PrepareArgs),
    /// Train and evaluate across folds.
    Experiment(ExperimentArgs),
    /// Explain model predictions on individual images.
    Explain(ExplainArgs),
    /// Render result tables from stored experiment cells.
    Report(ReportArgs),
    /// Re-run every stage recorded in a run.json.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub positive_frac: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PrepareArgs {
    /// Manifest CSV; defaults to <out>/manifest.csv.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// by-record or by-subject.
    #[arg(long, default_value = "by-record")]
    pub grouping: String,
    #[arg(long)]
    pub folds: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ExperimentArgs {
    /// one-shot, few-shot or both.
    #[arg(long, default_value = "few-shot")]
    pub mode: String,
    /// One representation: single_color, rhythm_color, single_gray or rhythm_gray.
    #[arg(long, conflicts_with = "all", required_unless_present = "all")]
    pub representation: Option<String>,
    /// All four representations.
    #[arg(long)]
    pub all: bool,
    #[arg(long)]
    pub train_episodes: Option<usize>,
    #[arg(long)]
    pub eval_episodes: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ExplainArgs {
    /// Model artifact JSON written by `experiment`.
    #[arg(long, required_unless_present = "self_test")]
    pub model: Option<PathBuf>,
    /// Record ids to explain.
    pub records: Vec<String>,
    /// Explain this many seeded-random records instead of listing ids.
    #[arg(long, conflicts_with = "records")]
    pub sample: Option<usize>,
    /// Only sample at-risk records.
    #[arg(long)]
    pub at_risk: bool,
    /// Run an oracle check instead of a trained model: constant or planted.
    #[arg(long, conflicts_with_all = ["model", "records", "sample"])]
    pub self_test: Option<String>,
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReportArgs {
    /// one-shot, few-shot or both.
    #[arg(long, default_value = "both")]
    pub mode: String,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// Provenance file of a previous run.
    pub run_json: PathBuf,
}

/// Exit code and kind label for a failure.
fn classify(err: &anyhow::Error) -> (u8, &'static str) {
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<clap::Error>() {
            return (1, "usage");
        }
        if cause.is::<CheckFailed>() {
            return (3, "numeric");
        }
        if let Some(e) = cause.downcast_ref::<chromaqt::Error>() {
            return match e.class() {
                ErrorClass::Numeric => (3, "numeric"),
                ErrorClass::Data => (2, "data"),
            };
        }
    }
    (2, "data")
}

/// Error chain joined by `: `, skipping causes already quoted by their parent.
fn message(err: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in err.chain() {
        let part = cause.to_string();
        if !text.contains(&part) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&part);
        }
    }
    text
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            eprintln!("error[usage]: {}", one_line(first));
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, kind) = classify(&e);
            eprintln!("error[{kind}]: {}", one_line(&message(&e)));
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = RunConfig::load(cli.global.config.as_deref())?;
    if let Some(seed) = cli.global.seed {
        config.seed = seed;
    }
    if let Some(b) = &cli.global.boundary {
        config.boundary = Some(b.clone());
    }
    if let Some(cmd) = &cli.command {
        commands::apply_overrides(&mut config, cmd)?;
    }
    let config = config.resolve();
    if cli.global.print_config {
        print!("{}", config.to_toml());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(UsageError("no subcommand given (try --help)".into()).into());
    };
    commands::execute(&command, &config, &cli.global.out)
}
