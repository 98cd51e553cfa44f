use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spincut_cli::reproduce::reproduce;
use spincut_cli::{run, CliError, Mode, Overrides, RunConfig, RunOutput};

#[derive(Parser)]
#[command(name = "spincut", version, about = "Optimized cutting and stitching of Heisenberg spin chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML), or a manifest.json from an earlier run
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Args)]
struct Flags {
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Time steps for smooth schedules
    #[arg(long)]
    steps: Option<usize>,
    /// Master seed for noise realizations
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate one schedule and record the trajectory
    Evolve(Common),
    /// Maximize the final fidelity over the schedule parameters
    Optimize(Common),
    /// Baseline and optimized fidelity over a list of process times
    Sweep(Common),
    /// Fidelity on a grid over two schedule parameters
    Landscape(Common),
    /// Mean and spread of the fidelity under seeded control noise
    Noise(Common),
    /// Detach a two-spin block with a pulse train
    TwoSpin(Common),
    /// Regenerate a table or figure
    Reproduce {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(spincut_cli::reproduce::TARGETS))]
        target: String,
        #[command(flatten)]
        flags: Flags,
    },
}

fn init_workers(workers: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = workers {
        if n == 0 {
            return Err(CliError::config("workers", "need at least one worker"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config("workers", e.to_string()))?;
    }
    Ok(())
}

fn experiment(mode: Mode, common: Common) -> Result<RunOutput, CliError> {
    let Flags { out, steps, seed, workers, format: Format::Csv } = common.flags;
    init_workers(workers)?;
    let mut config = RunConfig::load(&common.config)?;
    config.apply(&Overrides { mode: Some(mode), output: out, n_steps: steps, seed })?;
    run(&config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Evolve(c) => experiment(Mode::Evolve, c),
        Command::Optimize(c) => experiment(Mode::Optimize, c),
        Command::Sweep(c) => experiment(Mode::Sweep, c),
        Command::Landscape(c) => experiment(Mode::Landscape, c),
        Command::Noise(c) => experiment(Mode::Noise, c),
        Command::TwoSpin(c) => experiment(Mode::TwoSpin, c),
        Command::Reproduce { target, flags } => init_workers(flags.workers).and_then(|()| {
            let root = flags.out.unwrap_or_else(|| PathBuf::from("out"));
            reproduce(
                &target,
                &root,
                flags.steps.unwrap_or(spincut_core::dynamics::DEFAULT_STEPS),
                flags.seed.unwrap_or(0),
            )
        }),
    };
    match result {
        Ok(output) => {
            for line in &output.summary {
                println!("{line}");
            }
            println!("wrote {} ({} files)", output.dir.display(), output.manifest.outputs.len());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("spincut: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
