use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use reslab::commands::{run, Command, RunSettings};
use reslab::config::ExperimentConfig;
use reslab::error::{HarnessError, HarnessResult};
use reslab::output::OutputDir;

#[derive(Debug, Parser)]
#[command(name = "reslab", version, about = "Resonance, quasimode and resolvent-bound experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed of the property-suite function families.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Decay, weight and grid-resolution checks.
    Validate,
    /// Resonance tables per h.
    Scan,
    /// Quasimode clusters per h.
    Quasimode,
    /// Quasimode cluster, accuracy gate and resonance strip count per h.
    TheoremCheck,
    /// Resonance widths across the ℓ list.
    AdsSweep,
    /// Bound-verification suites.
    Bounds,
}

impl Sub {
    fn command(&self) -> Command {
        match self {
            Sub::Validate => Command::Validate,
            Sub::Scan => Command::Scan,
            Sub::Quasimode => Command::Quasimode,
            Sub::TheoremCheck => Command::TheoremCheck,
            Sub::AdsSweep => Command::AdsSweep,
            Sub::Bounds => Command::Bounds,
        }
    }
}

fn execute(cli: &Cli) -> HarnessResult<bool> {
    let path = cli.config.as_ref().ok_or_else(|| HarnessError::Config("missing --config PATH".into()))?;
    let cfg = ExperimentConfig::load(path)?;
    let command = cli.command.command();
    let out_dir = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("reslab-out").join(command.name()));
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(HarnessError::Config("--threads must be positive".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| HarnessError::Internal(e.to_string()))?;
    let threads = pool.current_num_threads();
    let out = OutputDir::create(&out_dir)?;
    let settings = RunSettings { seed: cli.seed, threads };
    let pass = pool.install(|| run(command, &cfg, &out, settings))?;
    log::info!("{} finished, pass = {pass}, files in {}", command.name(), out_dir.display());
    Ok(pass)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("reslab {}: suite failure, see the report files", cli.command.command().name());
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("reslab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
