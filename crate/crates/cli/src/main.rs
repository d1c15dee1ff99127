//! CLI front-end over the pipeline stages.
//!
//! Exit codes: 0 success, 2 configuration error, 3 missing upstream
//! artifact, 4 malformed or invalid data.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use homestate::pipeline::{self, PipelineConfig, Stage};
use homestate::Error;

#[derive(Parser)]
#[command(name = "homestate", version, about = "Latent-state activity fingerprints from in-home event logs")]
struct Cli {
    /// Pipeline config JSON; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for artifacts (overrides config).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Master seed (overrides config).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort (events, profiles, ground truth).
    Synth,
    /// Window event logs into per-day token strings.
    Preprocess,
    /// Embed day strings (hash baseline, or an external TSV via config).
    Embed,
    /// Sample and validate self-supervision triplets.
    Triplets,
    /// Project embeddings to 2D.
    Tsne,
    /// Cluster projected points into latent states.
    Cluster,
    /// Build transition matrices and PageRank fingerprints.
    Fingerprint,
    /// Rank most/least similar participants per query.
    Similar,
    /// Group comparisons and participant-level clustering.
    Cohort,
    /// Render SVG figures.
    Report,
    /// Run every stage in order.
    Pipeline,
}

impl Command {
    fn stages(&self) -> &'static [Stage] {
        match self {
            Command::Synth => &[Stage::Synth],
            Command::Preprocess => &[Stage::Preprocess],
            Command::Embed => &[Stage::Embed],
            Command::Triplets => &[Stage::Triplets],
            Command::Tsne => &[Stage::Tsne],
            Command::Cluster => &[Stage::Cluster],
            Command::Fingerprint => &[Stage::Fingerprint],
            Command::Similar => &[Stage::Similar],
            Command::Cohort => &[Stage::Cohort],
            Command::Report => &[Stage::Report],
            Command::Pipeline => &pipeline::ALL_STAGES,
        }
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config { .. } | Error::InvalidArgument(_) => 2,
        Error::MissingArtifact { .. } => 3,
        _ => 4,
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(out_dir) = &cli.out_dir {
        config.out_dir = out_dir.clone();
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    for &stage in cli.command.stages() {
        pipeline::run_stage(&config, stage)?;
        eprintln!("stage {} done", stage.name());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
