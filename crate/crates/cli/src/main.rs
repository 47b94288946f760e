use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ladderlab_cli::{commands, CliError, Flags, RunConfig};

/// Biased random walk on the conditioned ladder percolation cluster.
#[derive(Debug, Parser)]
#[command(name = "ladderlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Print the critical bias over a grid of densities, or at --p
    LambdaC,
    /// Sample and save an environment window of --cycles cycles
    SampleEnv,
    /// Run walks and save positions; one replica also saves its path
    Simulate,
    /// Speed by both estimators over --lambda-grid
    SpeedSweep,
    /// Normality below lambda_c/2, variance growth above
    Clt,
    /// Derivative of the speed against finite differences
    Derivative,
    /// Trap excursion formulas, bounds and sojourn moments
    TrapStats,
    /// Hill estimate of the regeneration-time tail index
    TailIndex,
    /// Scaled fluctuations at exponent --exponent
    MzCheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::LambdaC => "lambda-c",
            Command::SampleEnv => "sample-env",
            Command::Simulate => "simulate",
            Command::SpeedSweep => "speed-sweep",
            Command::Clt => "clt",
            Command::Derivative => "derivative",
            Command::TrapStats => "trap-stats",
            Command::TailIndex => "tail-index",
            Command::MzCheck => "mz-check",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = RunConfig::resolve(cli.command.name(), &cli.flags)
        .and_then(|cfg| commands::run(&cfg, cli.flags.overwrite, &mut std::io::stdout().lock()));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        // A closed pipe (e.g. `| head`) is not a failure of the run.
        Err(CliError::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ladderlab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
