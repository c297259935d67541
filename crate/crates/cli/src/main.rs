// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod output;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;
use thiserror::Error;

#[derive(Parser, Debug)]
#[command(
    name = "cqed",
    version,
    about = "Quantize circuits coupled to transmission lines and lossless impedances"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Mode table of an end-coupled line with running completeness sums.
    Modes(commands::ModesArgs),
    /// Mode frequencies and coupling constants of a circuit.
    Quantize(commands::QuantizeArgs),
    /// Foster stage tables.
    Foster(commands::FosterArgs),
    /// Two charge qubits on the ends of an open line.
    Example3(commands::Example3Args),
    /// Spectral densities and their fitted asymptotic exponents.
    Spectral(commands::SpectralArgs),
    /// Zero-mode diagnosis of the capacitance and inductance matrices.
    CheckInvertibility(commands::CheckArgs),
    /// Run the self-check suites.
    Validate(commands::ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Emit {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Single charge qubit on a 4.7 mm line.
    DeviceA,
    /// Two charge qubits on a 9.4 mm open line.
    Fig9,
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// Write here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Emit::Csv)]
    pub emit: Emit,
}

#[derive(Args, Debug, Clone)]
pub struct SourceArgs {
    /// Circuit description (JSON).
    #[arg(long, conflicts_with = "preset")]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
}

#[derive(Args, Debug, Clone)]
pub struct ThreadArgs {
    /// Worker threads for parallel kernels.
    #[arg(long, env = "CQED_THREADS")]
    pub threads: Option<usize>,
}

impl ThreadArgs {
    pub fn resolve(&self) -> usize {
        self.threads
            .filter(|&t| t > 0)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Computation(String),
    #[error("{failed} of {total} suites failed")]
    ValidationFailed { failed: usize, total: usize },
    #[error("cannot write output: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Input(_) => "input",
            CliError::Computation(_) => "computation",
            CliError::ValidationFailed { .. } => "validation",
            CliError::Output(_) => "output",
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            _ => 1,
        }
    }
}

fn report(kind: &str, message: &str, code: u8) -> ExitCode {
    let doc =
        serde_json::json!({ "error": { "kind": kind, "message": message, "exit_code": code } });
    eprintln!("{doc}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return report("input", e.to_string().trim(), 2),
    };
    let result = match cli.command {
        Command::Modes(a) => commands::modes(&a),
        Command::Quantize(a) => commands::quantize(&a),
        Command::Foster(a) => commands::foster(&a),
        Command::Example3(a) => commands::example3(&a),
        Command::Spectral(a) => commands::spectral(&a),
        Command::CheckInvertibility(a) => commands::check_invertibility(&a),
        Command::Validate(a) => commands::validate(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(e.kind(), &e.to_string(), e.exit_code()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_role() {
        assert_eq!(CliError::Input("x".into()).exit_code(), 2);
        assert_eq!(
            CliError::ValidationFailed {
                failed: 1,
                total: 11
            }
            .exit_code(),
            1
        );
        assert_eq!(CliError::Computation("x".into()).exit_code(), 1);
    }
}
