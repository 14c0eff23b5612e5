//! `proxylab`: experiment driver for the workbench.

mod commands;
mod code_commands;
mod config;
mod output;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(name = "proxylab", version, about = "Train, simplify and audit small transformers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
pub struct CommonArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured global seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; also settable through PROXYLAB_OUT.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; also settable through PROXYLAB_THREADS.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample the Dyck split bundle.
    GenData(CommonArgs),
    /// Train a model on the Dyck bundle or the ingested code corpus.
    Train(CommonArgs),
    /// Fit the configured simplifiers on training sequences.
    FitSimplifier(CommonArgs),
    /// Score fitted simplifiers on every evaluation split.
    Evaluate(CommonArgs),
    /// fit-simplifier followed by evaluate.
    Sweep(CommonArgs),
    /// Render SVG charts from the evaluation outputs.
    Report(CommonArgs),
    /// Export attention heatmaps and head scores for chosen texts.
    InspectHead(CommonArgs),
    /// Route a code NDJSON file into training and generalization splits.
    CodeIngest(CommonArgs),
}

/// Resolved settings shared by every subcommand.
pub struct Ctx {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
}

fn resolve(args: &CommonArgs) -> Result<Ctx> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = args
        .out
        .clone()
        .or_else(|| std::env::var_os("PROXYLAB_OUT").map(PathBuf::from))
        .or_else(|| cfg.out_dir.clone())
        .context("no output directory: pass --out, set PROXYLAB_OUT or configure out_dir")?;
    cfg.out_dir = Some(out.clone());
    let threads = match args.threads {
        Some(t) => Some(t),
        None => match std::env::var("PROXYLAB_THREADS") {
            Ok(v) => Some(v.parse().with_context(|| format!("PROXYLAB_THREADS={v} is not a count"))?),
            Err(_) => None,
        },
    };
    if let Some(t) = threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    output::write_resolved_config(&out, &cfg)?;
    Ok(Ctx { cfg, out })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => commands::gen_data(&resolve(&a)?),
        Command::Train(a) => commands::train(&resolve(&a)?),
        Command::FitSimplifier(a) => commands::fit_simplifier(&resolve(&a)?),
        Command::Evaluate(a) => commands::evaluate(&resolve(&a)?),
        Command::Sweep(a) => {
            let ctx = resolve(&a)?;
            commands::fit_simplifier(&ctx)?;
            commands::evaluate(&ctx)
        }
        Command::Report(a) => commands::report(&resolve(&a)?),
        Command::InspectHead(a) => commands::inspect_head(&resolve(&a)?),
        Command::CodeIngest(a) => commands::code_ingest(&resolve(&a)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
