//! Command-line interface behind the `labelqc` binary.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::class::OrganClass;
use crate::critic::{
    compute_thresholds, run_dataset, RunConfig, RunOptions, RunSummary, Workspace,
};
use crate::dsc::write_threshold_table;
use crate::gateway::{ChatBackend, TranscriptBackend};
use crate::report::{compute_accuracy_table, export_report, GroundTruth, ReportFormat};
use crate::review::{serve, ReviewService, ReviewStore};
use crate::verdict::{read_records, VerdictStore};
use crate::volume::{CaseManifest, RunMode};

#[derive(Debug, Parser)]
#[command(
    name = "labelqc",
    version,
    about = "Quality control for CT organ segmentation labels"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pick the better of two candidate labels per case.
    Compare(RunArgs),
    /// Judge one candidate label per case as correct or incorrect.
    Assess(RunArgs),
    /// Compute per-class Dice thresholds only.
    Thresholds(RunArgs),
    /// Serve the review queue of an output directory over HTTP.
    Serve(ServeArgs),
    /// Accuracy of verdicts against ground truth.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Answer prompts from a JSON-lines transcript instead of an endpoint.
    #[arg(long)]
    pub mock_transcript: Option<PathBuf>,
    #[arg(long)]
    pub class: Option<OrganClass>,
    /// Keep existing verdicts and only run the missing cases.
    #[arg(long)]
    pub resume: bool,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub threshold_table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub bind: Option<SocketAddr>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Markdown,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Verdict store or snapshot (JSON lines).
    #[arg(long)]
    pub verdicts: PathBuf,
    /// Ground truth CSV: case_id,class,truth.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, value_enum, default_value = "markdown")]
    pub format: FormatArg,
    /// Write here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

type Failure = Box<dyn std::error::Error>;

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    Ok(match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    })
}

fn print_summary(summary: &RunSummary) {
    for (class, counts) in &summary.counts {
        let parts: Vec<String> = counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("{class}: {}", parts.join(" "));
    }
    println!(
        "executed {}, resumed {}, incomplete {}",
        summary.executed,
        summary.resumed,
        summary.failures.len()
    );
    for w in &summary.warnings {
        eprintln!("warning: {w}");
    }
    for f in &summary.failures {
        eprintln!("incomplete: {}/{}: {}", f.case_id, f.class, f.message);
    }
}

fn run_pipeline(args: &RunArgs, mode: RunMode) -> Result<ExitCode, Failure> {
    let config = load_config(args.config.as_deref())?;
    let manifest = CaseManifest::load(&args.manifest)?;
    let workspace = Workspace::open(&args.out_dir)?;
    let backend: Arc<dyn ChatBackend> = match &args.mock_transcript {
        Some(path) => Arc::new(TranscriptBackend::load(path)?),
        None => Arc::new(config.endpoint.http_backend()?),
    };
    let critic = config.critic(backend, &workspace)?;
    let options = RunOptions {
        mode,
        workers: args.workers.unwrap_or(config.workers),
        resume: args.resume,
        threshold_table: args
            .threshold_table
            .clone()
            .or(config.threshold_table.clone()),
        class_filter: args.class,
        cancel: None,
    };
    let summary = run_dataset(&manifest, &critic, &workspace, &options)?;
    print_summary(&summary);
    Ok(if summary.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("some cases are incomplete; rerun with --resume");
        ExitCode::from(3)
    })
}

fn run_thresholds(args: &RunArgs) -> Result<ExitCode, Failure> {
    let config = load_config(args.config.as_deref())?;
    let manifest = CaseManifest::load(&args.manifest)?.filter_class(args.class);
    manifest.validate(RunMode::Compare)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let pass = compute_thresholds(
        &manifest,
        config.dice_space,
        args.workers.unwrap_or(config.workers),
    );
    let path = args.out_dir.join(crate::critic::run::THRESHOLDS_FILE);
    write_threshold_table(&path, &pass.stats)?;
    for s in &pass.stats {
        println!(
            "{}: mean {:.4} std {:.4} threshold {:.4}",
            s.class, s.mean, s.std, s.threshold
        );
    }
    for w in &pass.warnings {
        eprintln!("warning: {w}");
    }
    for f in &pass.failures {
        eprintln!("failed: {}/{}: {}", f.case_id, f.class, f.message);
    }
    println!("wrote {}", path.display());
    Ok(if pass.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}

fn run_serve(args: &ServeArgs) -> Result<ExitCode, Failure> {
    let config = load_config(args.config.as_deref())?;
    let verdicts = Arc::new(VerdictStore::open(
        &args.out_dir.join(crate::critic::run::VERDICTS_FILE),
    )?);
    let store = Arc::new(ReviewStore::open(
        &args.out_dir.join(crate::critic::run::REVIEW_DIR),
        verdicts,
    )?);
    let token = match &config.review.token_env {
        Some(var) => {
            Some(std::env::var(var).map_err(|_| format!("environment variable {var} is not set"))?)
        }
        None => None,
    };
    let addr: SocketAddr = match args.bind {
        Some(a) => a,
        None => config.review.bind.parse()?,
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(serve(addr, ReviewService { store, token }))?;
    Ok(ExitCode::SUCCESS)
}

fn run_report(args: &ReportArgs) -> Result<ExitCode, Failure> {
    let truth = GroundTruth::load_csv(&args.truth)?;
    let records = read_records(&args.verdicts)?;
    // Later records for the same (case, class) replace earlier ones.
    let mut latest = std::collections::BTreeMap::new();
    for r in records.into_iter().filter(|r| !r.verdict.is_override()) {
        let (case, class) = r.verdict.key();
        latest.insert((case.to_string(), class), r.verdict);
    }
    let table = compute_accuracy_table(latest.values(), &truth);
    let format = match args.format {
        FormatArg::Csv => ReportFormat::Csv,
        FormatArg::Markdown => ReportFormat::Markdown,
    };
    match &args.out {
        Some(path) => export_report(&table, format, path)?,
        None => print!("{}", table.render(format)),
    }
    if !table.uncovered.is_empty() {
        eprintln!(
            "{} decided verdicts have no ground truth",
            table.uncovered.len()
        );
    }
    Ok(ExitCode::SUCCESS)
}

pub fn run(cli: Cli) -> ExitCode {
    let result = match &cli.command {
        Command::Compare(a) => run_pipeline(a, RunMode::Compare),
        Command::Assess(a) => run_pipeline(a, RunMode::Assess),
        Command::Thresholds(a) => run_thresholds(a),
        Command::Serve(a) => run_serve(a),
        Command::Report(a) => run_report(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::FAILURE
    })
}

/// Entry point for the binary: logging from `RUST_LOG`, then [`run`].
pub fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    run(Cli::parse())
}
