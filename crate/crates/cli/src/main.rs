//! `ledgerlens`: batch runs over assessment cards and parcel tables.
//!
//! Every command writes its artifacts and a `manifest.json` into `--out`.
//! Exit status is 0 on success, 1 when some documents or rows failed and
//! 2 on configuration errors.

mod cards;
mod config;
mod manifest;
mod tabular;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::Config;
use manifest::EventLog;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(ledgerlens::Error),
    Io(std::io::Error),
    Json(serde_json::Error),
    Csv(csv::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
            CliError::Json(e) => write!(f, "json error: {e}"),
            CliError::Csv(e) => write!(f, "csv error: {e}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Core(ledgerlens::Error::Parameter(_)) => 2,
            _ => 1,
        }
    }
}

impl From<ledgerlens::Error> for CliError {
    fn from(e: ledgerlens::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Json(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Csv(e)
    }
}

#[derive(Debug, Parser)]
#[command(name = "ledgerlens", version, about = "Digitize assessment cards and model historical building values")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Append one JSON event per document to this file.
    #[arg(long, global = true)]
    jsonl_log: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate ground-truthed fixtures.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Register scans to the template.
    Align(cards::AlignArgs),
    /// Cut cells out of scans.
    Segment(cards::SegmentArgs),
    /// Recognize cell images.
    Ocr(cards::OcrArgs),
    /// Align, segment, recognize, normalize and filter in one pass.
    Pipeline(cards::PipelineArgs),
    /// Clean, harmonize and encode parcel features.
    Ingest(tabular::IngestArgs),
    /// Fit a random forest.
    Train(tabular::TrainArgs),
    /// Cross-validated hyperparameter search.
    GridSearch(tabular::GridSearchArgs),
    /// Predict building values with a trained model.
    Predict(tabular::PredictArgs),
    /// Map predictions onto another county's value distribution.
    Adjust(tabular::AdjustArgs),
    /// Accuracy metrics of predictions against labels.
    Evaluate(tabular::EvaluateArgs),
    /// Correlate errors with census tract variables.
    AuditBias(tabular::AuditBiasArgs),
    /// Test whether missing labels depend on the features.
    AuditMar(tabular::AuditMarArgs),
    /// Digitization cost comparison.
    Cost(tabular::CostArgs),
}

#[derive(Debug, Subcommand)]
enum SynthCommand {
    /// Rendered cards with truth files, template and layout.
    Cards(cards::SynthCardsArgs),
    /// Parcel features, labels and census tracts.
    Parcels(tabular::SynthParcelsArgs),
}

/// Shared output flag.
#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Builtin,
    Remote,
}

/// State shared by every command.
pub struct Ctx {
    pub cfg: Config,
    pub log: EventLog,
}

impl Ctx {
    pub fn run(&self, command: &str, out: &std::path::Path) -> Result<manifest::Run, CliError> {
        manifest::Run::new(command, self.cfg.hash(), self.cfg.seed, rayon::current_num_threads(), out)
    }
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    let mut cfg = config::load(cli.config.as_deref(), std::env::vars())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build_global()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    let mut ctx = Ctx { cfg, log: EventLog::open(cli.jsonl_log.as_deref())? };
    let failed = match cli.command {
        Command::Synth(SynthCommand::Cards(a)) => cards::synth_cards(&mut ctx, a),
        Command::Synth(SynthCommand::Parcels(a)) => tabular::synth_parcels(&mut ctx, a),
        Command::Align(a) => cards::align(&mut ctx, a),
        Command::Segment(a) => cards::segment(&mut ctx, a),
        Command::Ocr(a) => cards::ocr(&mut ctx, a),
        Command::Pipeline(a) => cards::pipeline(&mut ctx, a),
        Command::Ingest(a) => tabular::ingest(&mut ctx, a),
        Command::Train(a) => tabular::train(&mut ctx, a),
        Command::GridSearch(a) => tabular::grid_search(&mut ctx, a),
        Command::Predict(a) => tabular::predict(&mut ctx, a),
        Command::Adjust(a) => tabular::adjust(&mut ctx, a),
        Command::Evaluate(a) => tabular::evaluate(&mut ctx, a),
        Command::AuditBias(a) => tabular::audit_bias(&mut ctx, a),
        Command::AuditMar(a) => tabular::audit_mar(&mut ctx, a),
        Command::Cost(a) => tabular::cost(&mut ctx, a),
    }?;
    ctx.log.flush()?;
    Ok(failed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match execute(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(e) => {
            eprintln!("ledgerlens: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
