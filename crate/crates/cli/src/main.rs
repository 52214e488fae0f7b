mod error;
mod hes;
mod learn;
mod output;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use error::{CliError, Result};
use output::{prepare_out, read_json, RunRecord};

#[derive(Debug, Parser)]
#[command(name = "safepol", version, about = "Risk-budgeted policy learning from observational data")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the simulation study and write per-replication rows.
    Simulate(simulate::SimulateArgs),
    /// Learn a policy from a data file.
    Learn(learn::LearnArgs),
    /// Hierarchical expert scoring pipelines.
    #[command(subcommand)]
    Hes(hes::HesCommand),
    /// Replay a recorded run.json into a new output directory.
    Rerun {
        record: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Simulate(a) => simulate::command(a),
        Command::Learn(a) => learn::command(a),
        Command::Hes(c) => hes::command(c),
        Command::Rerun { record, out } => {
            let rec: RunRecord = read_json(&record)?;
            rec.job.run(&prepare_out(out)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
