//! `pgnerf`: train, evaluate and render sparse-view radiance fields.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration; exit code 2.
    Usage(String),
    /// Failure while running; exit code 1.
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<pgnerf::Error> for CliError {
    fn from(e: pgnerf::Error) -> Self {
        match e {
            pgnerf::Error::Config(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.into()),
        }
    }
}

#[derive(Parser)]
#[command(name = "pgnerf", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Train a field; writes metrics.csv, checkpoints, final.ckpt and report.json.
    Train {
        /// JSON run configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset directory in NeRF-synthetic layout.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Overrides the configured iteration count.
        #[arg(long)]
        iterations: Option<u64>,
    },
    /// Generate the procedural toy dataset.
    GenToy {
        /// JSON toy-scene spec; built-in defaults when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render one view of a checkpoint to PNG.
    Render {
        #[arg(long)]
        ckpt: PathBuf,
        /// Dataset supplying intrinsics and indexed poses.
        #[arg(long)]
        data: PathBuf,
        /// Test-view index, or 16 comma-separated camera-to-world entries.
        #[arg(long)]
        pose: String,
        #[arg(long)]
        out: PathBuf,
        /// Also write expected depth as PFM.
        #[arg(long)]
        depth: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Report train/test PSNR and their gap as JSON.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Both)]
        split: SplitArg,
        /// Write the report here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the five cumulative constraint configurations and append them to
    /// <out>/ablation.csv.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train {
            config,
            data,
            out,
            resume,
            iterations,
        } => commands::train(config, data, out, resume, iterations),
        Command::GenToy { spec, out } => commands::gen_toy(spec, &out),
        Command::Render {
            ckpt,
            data,
            pose,
            out,
            depth,
            seed,
        } => commands::render(&ckpt, &data, &pose, &out, depth.as_deref(), seed),
        Command::Eval {
            ckpt,
            data,
            split,
            out,
        } => commands::eval(&ckpt, &data, split, out.as_deref()),
        Command::Ablate { config, data, out } => commands::ablate(config, data, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
