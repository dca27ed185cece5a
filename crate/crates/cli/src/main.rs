//! `orbbuf`: generate sequences, simulate buffered streaming and run the
//! evaluation studies.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use commands::StudyKind;
use config::{effective_values, ConfigFlags, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("simulation error: {0}")]
    Sim(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Sim(_) => 3,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "orbbuf", version, about = "Similarity-aware send buffering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Directory receiving every output file.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[command(flatten)]
    flags: ConfigFlags,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic drifting sequence as numbered PGM files.
    Gen(Common),
    /// Simulate one policy and write its report, events and plots.
    Run(Common),
    /// Simulate several policies on the same sequence, trace and seed.
    Compare(Common),
    /// Run the distance, loss or buffer-size study.
    Study {
        #[arg(value_enum)]
        kind: StudyKind,
        #[command(flatten)]
        common: Common,
    },
}

fn execute(command: Command) -> Result<(), CliError> {
    let common = match &command {
        Command::Gen(c) | Command::Run(c) | Command::Compare(c) => c,
        Command::Study { common, .. } => common,
    };
    let values = effective_values(&common.flags)?;
    let cfg = RunConfig::from_values(&values)?;
    let out = &common.out;
    match &command {
        Command::Gen(_) => commands::gen(&cfg, &values, out),
        Command::Run(_) => commands::run(&cfg, &values, out),
        Command::Compare(_) => commands::compare(&cfg, &values, out),
        Command::Study { kind, .. } => commands::study(*kind, &cfg, &values, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("orbbuf: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_kinds_map_to_exit_codes() {
        assert_eq!(CliError::Usage(String::new()).exit_code(), 1);
        assert_eq!(CliError::Data(String::new()).exit_code(), 2);
        assert_eq!(CliError::Sim(String::new()).exit_code(), 3);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
