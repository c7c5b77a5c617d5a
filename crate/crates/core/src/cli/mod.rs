//! The `temrob` command line.
//!
//! Every subcommand is a thin wrapper over the library: it reads its inputs,
//! calls one pipeline stage and writes outputs plus a run-config JSON that
//! records the fully resolved arguments. Exit codes: 0 on success, 1 when a
//! stage fails (with `{"error": {"kind", "message"}}` on stderr), 2 on a usage
//! error.

mod commands;
mod svg;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::evalclient::MockPolicy;
use crate::panodpo::{LossKind, TrainConfig};
use crate::perturb::Severity;
use crate::prefdata::VideoMode;

pub use svg::{histogram_svg, severity_bars_svg};

#[derive(Debug, Parser)]
#[command(name = "temrob", version, about = "Temporal-robustness benchmark and preference-training toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Annotations (JSONL manifest or COIN JSON) to clean + adversarial benchmark JSONL.
    BuildBench(BuildBenchArgs),
    /// Benchmark JSONL to a response log, via an endpoint or a mock policy.
    Evaluate(EvaluateArgs),
    /// Clean and adversarial logs to a metric report.
    Score(ScoreArgs),
    /// Base tuples to preference JSONL with rejected videos and perturbation clauses.
    MakePrefs(MakePrefsArgs),
    /// Preference JSONL to a toy-policy checkpoint and training history.
    TrainToy(TrainToyArgs),
    /// Checkpoint + benchmark to per-item likelihood gaps (CSV and SVG histogram).
    Gap(GapArgs),
    /// Metric report to a CSV table and an SVG bar chart.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbChoice {
    IntrinsicLight,
    IntrinsicSevere,
    ExtrinsicAbsolute,
    ExtrinsicRelative,
    All,
}

impl PerturbChoice {
    pub fn severities(self) -> Vec<Severity> {
        match self {
            Self::IntrinsicLight => vec![Severity::Light],
            Self::IntrinsicSevere => vec![Severity::Severe],
            Self::ExtrinsicAbsolute => vec![Severity::Absolute],
            Self::ExtrinsicRelative => vec![Severity::Relative],
            Self::All => Severity::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SettingChoice {
    Clean,
    Adversarial,
    Both,
}

#[derive(Debug, Args, Serialize)]
pub struct BuildBenchArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = PerturbChoice::All)]
    pub perturb: PerturbChoice,
}

#[derive(Debug, Args, Serialize)]
#[command(group(clap::ArgGroup::new("backend").required(true).args(["endpoint", "mock"])))]
pub struct EvaluateArgs {
    #[arg(long)]
    pub bench: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// OpenAI-compatible base URL; `/chat/completions` is appended.
    #[arg(long, requires = "model")]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// always-correct, always-shortcut, fixed-letter:L or seeded-uniform:SEED.
    #[arg(long)]
    pub mock: Option<MockPolicy>,
    #[arg(long, default_value_t = 1, value_parser = parse_rounds)]
    pub rounds: u8,
    #[arg(long, value_enum, default_value_t = SettingChoice::Both)]
    pub setting: SettingChoice,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_concurrency: u64,
    /// Environment variable holding the bearer token.
    #[arg(long)]
    pub auth_env: Option<String>,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 60.0)]
    pub timeout: f64,
    #[arg(long, default_value_t = 3)]
    pub max_attempts: u32,
    #[arg(long, default_value_t = 1.0)]
    pub backoff_base: f64,
    /// Intrinsic items attach images from `{frames-dir}/{video_id}/{setting}/`.
    #[arg(long)]
    pub frames_dir: Option<PathBuf>,
    /// Keys the retry jitter.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn parse_rounds(s: &str) -> Result<u8, String> {
    match s {
        "1" => Ok(1),
        "4" => Ok(4),
        _ => Err(format!("rounds must be 1 or 4, got {s:?}")),
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    #[arg(long)]
    pub clean: PathBuf,
    #[arg(long)]
    pub adv: PathBuf,
    /// Report JSON path.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the table to the same path with a `.csv` extension.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Args, Serialize)]
#[command(group(clap::ArgGroup::new("generator").required(true).args(["generator_endpoint", "stub"])))]
pub struct MakePrefsArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub video_mode: VideoMode,
    #[arg(long)]
    pub generator_endpoint: Option<String>,
    #[arg(long, default_value = "gpt-4o")]
    pub generator_model: String,
    #[arg(long)]
    pub auth_env: Option<String>,
    /// Deterministic offline generator.
    #[arg(long)]
    pub stub: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Unset options fall back to [`TrainConfig::default`].
#[derive(Debug, Args, Serialize)]
pub struct TrainToyArgs {
    #[arg(long)]
    pub prefs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub loss: Option<LossKind>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Held-out preference JSONL for the gap column; defaults to the training set.
    #[arg(long)]
    pub heldout: Option<PathBuf>,
    /// Prefer the clean question over the perturbed one in the question term.
    #[arg(long)]
    pub flip_dpo_t: bool,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    /// Redraw rejected videos every epoch from the source frames.
    #[arg(long)]
    pub reroll_rejected: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct GapArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub bench: PathBuf,
    /// CSV path; the histogram goes next to it with an `.svg` extension.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// Metric report JSON written by `score`.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// A failed run, printed to stderr as structured JSON.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
#[error("{kind}: {message}")]
pub struct CliError {
    pub kind: String,
    pub message: String,
}

impl CliError {
    pub fn new(kind: &str, message: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new("io", format!("{}: {e}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

macro_rules! cli_error_from {
    ($($ty:ty => $kind:literal),* $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                Self::new($kind, e.to_string())
            }
        })*
    };
}

cli_error_from! {
    crate::annotations::AnnotationError => "annotations",
    crate::evalclient::EvalError => "evaluation",
    crate::metrics::MetricError => "metrics",
    crate::prefdata::PrefError => "prefdata",
    crate::panodpo::PolicyError => "policy",
    serde_json::Error => "json",
    csv::Error => "csv",
}

/// Train-toy configuration after filling unset flags from the defaults.
pub fn resolve_train_config(args: &TrainToyArgs) -> TrainConfig {
    let d = TrainConfig::default();
    TrainConfig {
        beta: args.beta.unwrap_or(d.beta),
        epochs: args.epochs.unwrap_or(d.epochs),
        batch_size: args.batch.unwrap_or(d.batch_size),
        lr: args.lr.unwrap_or(d.lr),
        seed: args.seed.unwrap_or(d.seed),
        loss: args.loss.unwrap_or(d.loss),
        flip_dpo_t: args.flip_dpo_t,
        embed_dim: args.embed_dim.unwrap_or(d.embed_dim),
        hidden_dim: args.hidden_dim.unwrap_or(d.hidden_dim),
        ..d
    }
}

/// Parses a full argv (program name first) for `train-toy` and resolves its config.
pub fn train_config_from_argv<I, T>(argv: I) -> Result<TrainConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(argv) {
        Ok(Cli {
            command: Command::TrainToy(args),
        }) => Ok(resolve_train_config(&args)),
        Ok(_) => Err(CliError::new("usage", "not a train-toy invocation")),
        Err(e) => Err(CliError::new("usage", e.to_string())),
    }
}

/// Runs one invocation and returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match commands::run(&cli.command) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            1
        }
    }
}
