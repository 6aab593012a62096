use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pinbridge::{GridMode, Method};
use pinbridge_cli::config::{DEFAULT_CSV_PATHS, DEFAULT_PATHS};
use pinbridge_cli::reproduce::{self, DEFAULT_SEED};
use pinbridge_cli::{execute, list_families, parse_family, CliError, CommandKind, RunConfig};

#[derive(Parser)]
#[command(
    name = "pinbridge",
    version,
    about = "Simulate and analyse one-dimensional pinned diffusions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample paths and report per-node moments and the pinning statistic.
    Simulate(RunArgs),
    /// Check the pinning conditions (A1), (A2) and (A2').
    CheckPinning(RunArgs),
    /// Decide whether the family is the bridge family of a Gaussian Markov process.
    Identify(RunArgs),
    /// Reciprocal characteristics of the pinned drift.
    Characteristics(RunArgs),
    /// List the built-in families.
    ListFamilies {
        #[arg(long)]
        json: bool,
    },
    /// Run the acceptance suite and print a PASS/FAIL table.
    Reproduce {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Comma-separated criterion numbers (default: all).
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
        /// Directory receiving `reproduce.txt`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Inline JSON (`{"name": ..., "params": {...}}`), `@file`, or a family name.
    #[arg(long)]
    family: String,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    x: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    y: f64,
    /// Grid steps.
    #[arg(long, default_value_t = pinbridge::sim::DEFAULT_STEPS)]
    n: usize,
    /// `geometric` or `uniform`.
    #[arg(long, default_value = "geometric")]
    grid_mode: GridMode,
    #[arg(long, default_value_t = pinbridge::sim::DEFAULT_T_END)]
    t_end: f64,
    /// Path count N.
    #[arg(long, default_value_t = DEFAULT_PATHS)]
    paths: usize,
    /// Paths written to `paths.csv`.
    #[arg(long, default_value_t = DEFAULT_CSV_PATHS)]
    csv_paths: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `exact` or `euler`.
    #[arg(long, default_value = "exact")]
    method: Method,
    /// Output directory; the JSON report goes to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = pinbridge::IdentConfig::default().tol_ident)]
    tol_ident: f64,
}

impl RunArgs {
    fn into_config(self, command: CommandKind) -> Result<RunConfig, CliError> {
        let mut c = RunConfig::new(command, parse_family(&self.family)?);
        c.x = self.x;
        c.y = self.y;
        c.n = self.n;
        c.grid_mode = self.grid_mode;
        c.t_end = self.t_end;
        c.paths = self.paths;
        c.csv_paths = self.csv_paths;
        c.seed = self.seed;
        c.method = self.method;
        c.out = self.out;
        c.tol_ident = self.tol_ident;
        Ok(c)
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn run_command(args: RunArgs, command: CommandKind) -> Result<(), CliError> {
    let config = args.into_config(command)?;
    let artifacts = execute(&config)?;
    match &config.out {
        Some(dir) => {
            write(dir, "report.json", &artifacts.report)?;
            if let Some(csv) = &artifacts.csv {
                write(dir, "paths.csv", csv)?;
            }
        }
        None => print!("{}", artifacts.report),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => run_command(a, CommandKind::Simulate),
        Command::CheckPinning(a) => run_command(a, CommandKind::CheckPinning),
        Command::Identify(a) => run_command(a, CommandKind::Identify),
        Command::Characteristics(a) => run_command(a, CommandKind::Characteristics),
        Command::ListFamilies { json } => {
            print!("{}", list_families(json));
            Ok(())
        }
        Command::Reproduce { seed, only, out } => {
            let ids: Vec<u8> = if only.is_empty() {
                (1..=9).collect()
            } else {
                only
            };
            if let Some(bad) = ids.iter().find(|id| !(1..=9).contains(*id)) {
                return Err(CliError::config(
                    "only",
                    format!("criteria are numbered 1 to 9, got {bad}"),
                ));
            }
            let outcomes = reproduce::run_all(&ids, seed);
            let table = reproduce::render(&outcomes, seed);
            print!("{table}");
            if let Some(dir) = out {
                write(&dir, "reproduce.txt", &table)?;
            }
            let failed: Vec<String> = outcomes
                .iter()
                .filter(|o| !o.pass)
                .map(|o| format!("C{}", o.id))
                .collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::Acceptance(failed.join(", ")))
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
