use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wmr_sim::cli::{self, CliError, RunOptions};

#[derive(Parser)]
#[command(
    name = "wmr-sim",
    version,
    about = "Wheeled mobile robot tracking simulator"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Overrides both the simulation and network seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress the summary on stdout.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its log as CSV.
    Run {
        config: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        /// Write the trained network weights here.
        #[arg(long)]
        save_weights: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run with and without the network and compare.
    Compare {
        config: PathBuf,
        /// Output directory.
        #[arg(long, short)]
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Compare runs over a list of values of one parameter.
    Sweep {
        config: PathBuf,
        /// Dotted parameter name, e.g. uncertainty.mass_factor.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
        /// Output directory.
        #[arg(long, short)]
        output: PathBuf,
        /// Number of worker threads.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        parallel: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Print the fully resolved configuration.
    EchoConfig {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    match cmd {
        Command::Run {
            config,
            output,
            save_weights,
            common,
        } => {
            let opts = RunOptions {
                seed: common.seed,
                quiet: common.quiet,
                save_weights,
            };
            cli::cmd_run(&config, &output, &opts, &mut out)
        }
        Command::Compare {
            config,
            output,
            common,
        } => {
            let opts = RunOptions {
                seed: common.seed,
                quiet: common.quiet,
                save_weights: None,
            };
            cli::cmd_compare(&config, &output, &opts, &mut out)
        }
        Command::Sweep {
            config,
            param,
            values,
            output,
            parallel,
            common,
        } => {
            let opts = RunOptions {
                seed: common.seed,
                quiet: common.quiet,
                save_weights: None,
            };
            let values = cli::parse_values(&values)?;
            cli::cmd_sweep(
                &config,
                &param,
                &values,
                &output,
                parallel as usize,
                &opts,
                &mut out,
            )
        }
        Command::EchoConfig { config, seed } => cli::cmd_echo_config(&config, seed, &mut out),
    }
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(args.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
