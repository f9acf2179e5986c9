use std::ops::RangeInclusive;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod scenario;
mod svg;

use scenario::Scenario;

/// Predator-prey model of tax revenue and formal/informal firms.
#[derive(Parser)]
#[command(name = "fiscalprey", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a scenario and certify boundedness.
    Simulate {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Locate and classify equilibria.
    Equilibria {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Seed for the perturbation probes.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Solve the optimal penalty problem.
    Control {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Impute and summarise a tax-head series.
    Data {
        csv: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Inclusive year range, e.g. `1974..2021`.
        #[arg(long, value_parser = parse_years)]
        years: Option<RangeInclusive<i32>>,
    },
}

fn parse_years(s: &str) -> Result<RangeInclusive<i32>, String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected <first>..<last>, got `{s}`"))?;
    let a: i32 = a.trim().parse().map_err(|_| format!("invalid year `{a}`"))?;
    let b: i32 = b.trim().parse().map_err(|_| format!("invalid year `{b}`"))?;
    if a > b {
        return Err(format!("empty year range {a}..{b}"));
    }
    Ok(a..=b)
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }
}

impl From<fiscalprey::Error> for CliError {
    fn from(e: fiscalprey::Error) -> Self {
        CliError { code: if e.is_numeric() { 3 } else { 2 }, message: e.to_string() }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { scenario, out } => commands::simulate(&Scenario::load(&scenario)?, &out),
        Command::Equilibria { scenario, out, seed } => commands::equilibria(&Scenario::load(&scenario)?, &out, seed),
        Command::Control { scenario, out } => commands::control(&Scenario::load(&scenario)?, &out),
        Command::Data { csv, out, k, years } => commands::data(&csv, k, years, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string();
            let line = first.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("error: {line}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message.replace('\n', " "));
            ExitCode::from(e.code)
        }
    }
}
