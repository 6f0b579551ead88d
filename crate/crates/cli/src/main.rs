use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use hjhomog::error::{CliError, EXIT_USAGE};
use hjhomog::verify::Suite;

#[derive(Parser)]
#[command(name = "hjhomog", version, about = "Effective Hamiltonians of random Hamilton-Jacobi equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Override a config value, e.g. `--set sweep.seeds=[1,2]`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Worker threads (1 runs sequentially).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run a built-in verification suite.
    Verify {
        suite: Suite,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Render a CSV output as SVG.
    Plot {
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run { config, set, jobs } => {
            let exec = hjhomog::configure_jobs(jobs)?;
            hjhomog::run(&config, &set, exec).map(|_| ())
        }
        Command::Verify { suite, set, jobs } => {
            let exec = hjhomog::configure_jobs(jobs)?;
            hjhomog::verify(suite, &set, exec).map(|_| ())
        }
        Command::Plot { csv, out } => hjhomog::plot(&csv, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hjhomog: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
