use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use qtm_cli::{execute, Command, Format, Overrides, RunConfig, EXIT_VALIDATION};

/// Low-temperature QTM NLIE solver for the massless XXZ chain.
#[derive(Parser, Debug)]
#[command(name = "qtm-nlie", version)]
struct Cli {
    /// Computation to run.
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    trotter_n: Option<i64>,
    #[arg(long)]
    quad_order: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Output file; stdout when absent. Diagnostics go to `<out>.log`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(path) => match std::fs::read_to_string(path).map_err(|e| e.to_string()).and_then(|s| RunConfig::parse(&s).map_err(|e| e.to_string())) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("{}: {e}", path.display());
                return ExitCode::from(EXIT_VALIDATION);
            }
        },
        None => RunConfig::default(),
    };
    cfg.command = Some(cli.command);
    cfg.apply(&Overrides {
        temperature: cli.temperature,
        trotter_n: cli.trotter_n,
        quad_order: cli.quad_order,
        tol: cli.tol,
        out: cli.out,
        format: cli.format,
    });
    if cli.print_config {
        return match cfg.emit() {
            Ok(s) => {
                print!("{s}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(EXIT_VALIDATION)
            }
        };
    }
    ExitCode::from(execute(&cfg))
}
