mod config;
mod error;
mod manifest;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::{CliError, CliResult};
use crate::manifest::StageIo;

/// Mapper-based anomaly detection and segmentation of transaction data.
///
/// Stages read and write flat files in the output directory, so each can be
/// rerun on its own. Every stage writes `manifest_<stage>.json`, which can be
/// passed back as `--config` to reproduce the run.
#[derive(Debug, Parser)]
#[command(name = "topoguard", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run config, or a stage manifest from an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Generate a synthetic transaction file and its ground truth.
    Synth,
    /// Build the per-customer feature table from the transactions.
    Features,
    /// Grid-search Mapper parameters for stability.
    Stability,
    /// Flag anomalous customers with an ensemble of stable graphs.
    Detect,
    /// Segment the remaining customers and test the segments.
    Segment,
    /// Rerun the pairwise significance tests on an existing segmentation.
    Validate,
    /// Print the default config as TOML.
    Defaults,
}

impl Command {
    fn stage(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Features => "features",
            Command::Stability => "stability",
            Command::Detect => "detect",
            Command::Segment => "segment",
            Command::Validate => "validate",
            Command::Defaults => "defaults",
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    let loaded = config::load(cli.config.as_deref(), cli.seed)?;
    if let Command::Defaults = cli.command {
        print!("{}", loaded.toml);
        return Ok(());
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let cfg = &loaded.cfg;
    let mut io = StageIo::new(&cli.out_dir)?;
    let deferred = match cli.command {
        Command::Synth => stages::synth(cfg, &mut io).map(|_| None),
        Command::Features => stages::features(cfg, &mut io).map(|_| None),
        Command::Stability => stages::stability(cfg, &mut io),
        Command::Detect => stages::detect(cfg, &mut io).map(|_| None),
        Command::Segment => stages::segment(cfg, &mut io).map(|_| None),
        Command::Validate => stages::validate(cfg, &mut io).map(|_| None),
        Command::Defaults => unreachable!(),
    }?;
    io.finish(cli.command.stage(), cfg, &loaded.toml)?;
    deferred.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
