//! Command-line front end: argument parsing, thread-pool setup, and
//! report emission with stable exit codes (0 ok, 1 bad input, 2 runtime).

pub mod commands;
pub mod report;

use clap::Parser;
use commands::{
    cmd_diagnose, cmd_simulate, cmd_sweep, CliError, DiagnoseArgs, Format, SimulateArgs, SweepArgs,
};
use report::Report;
use std::ffi::OsString;
use std::path::Path;

#[derive(Parser, Debug)]
#[command(
    name = "topospec",
    version,
    about = "Pre-inference spectral diagnostics for multi-agent communication graphs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(clap::Subcommand, Debug)]
pub enum Command {
    /// Closed-form spectral diagnostics of a communication graph
    Diagnose(DiagnoseArgs),
    /// Monte-Carlo drift measurement plus rank-consistency statistics
    Simulate(SimulateArgs),
    /// One-parameter grid sweep emitted as CSV
    Sweep(SweepArgs),
}

fn configure_thread_pool() -> Result<(), CliError> {
    let raw = match std::env::var("TOPOSPEC_THREADS") {
        Ok(v) => v,
        Err(std::env::VarError::NotPresent) => return Ok(()),
        Err(e) => return Err(CliError::Validation(format!("TOPOSPEC_THREADS: {e}"))),
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| {
            CliError::Validation(format!(
                "TOPOSPEC_THREADS must be a positive integer, got '{raw}'"
            ))
        })?;
    // A second initialization in the same process is harmless: the pool is
    // already sized and results do not depend on thread count.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

fn write_output(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display()))),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| CliError::Runtime(format!("stdout: {e}")))
        }
    }
}

fn emit_report(report: &Report, format: Format, out: Option<&Path>) -> Result<(), CliError> {
    let text = match format {
        Format::Json => report::to_json(report),
        Format::Text => report::to_text(report),
    };
    write_output(&text, out)
}

fn dispatch(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Diagnose(args) => {
            let report = cmd_diagnose(args)?;
            emit_report(&report, args.format, args.out.as_deref())
        }
        Command::Simulate(args) => {
            let report = cmd_simulate(args)?;
            emit_report(&report, args.format, args.out.as_deref())
        }
        Command::Sweep(args) => {
            let output = cmd_sweep(args)?;
            for warning in &output.warnings {
                eprintln!("warning: {warning}");
            }
            write_output(&output.csv, args.out.as_deref())
        }
    }
}

/// Runs the CLI against an explicit argument list and returns the exit code.
pub fn run_from<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    if let Err(e) = configure_thread_pool() {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run() -> u8 {
    run_from(std::env::args_os())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn help_and_version_exit_zero() {
        assert_eq!(run_from(["topospec", "--help"]), 0);
        assert_eq!(run_from(["topospec", "--version"]), 0);
    }

    #[test]
    fn unknown_flags_exit_one() {
        assert_eq!(run_from(["topospec", "diagnose", "--bogus"]), 1);
        assert_eq!(run_from(["topospec", "frobnicate"]), 1);
    }

    #[test]
    fn cli_is_well_formed() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
