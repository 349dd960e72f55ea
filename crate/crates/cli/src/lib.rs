//! Batch front end of the solver: configuration, dispatch and serialisation.

pub mod commands;
pub mod config;
pub mod output;

use std::fmt;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use qtm_core::QtmError;

pub use config::{Command, Format, Overrides, RunConfig};
pub use output::CommandOutput;

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Validation(String),
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Solver(_) => EXIT_SOLVER,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Solver(m) => write!(f, "solver failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<QtmError> for CliError {
    fn from(e: QtmError) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Solver(e.to_string())
        }
    }
}

/// Line-oriented diagnostics sink shared by sweep workers.
pub struct Log {
    sink: Mutex<Box<dyn Write + Send>>,
}

impl Log {
    pub fn to_file(path: &Path) -> io::Result<Self> {
        Ok(Log { sink: Mutex::new(Box::new(File::create(path)?)) })
    }

    pub fn to_stderr() -> Self {
        Log { sink: Mutex::new(Box::new(io::stderr())) }
    }

    pub fn discard() -> Self {
        Log { sink: Mutex::new(Box::new(io::sink())) }
    }

    pub fn line(&self, msg: impl AsRef<str>) {
        if let Ok(mut w) = self.sink.lock() {
            let _ = writeln!(w, "{}", msg.as_ref());
        }
    }
}

/// Sidecar log path next to the primary output.
pub fn log_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".log");
    PathBuf::from(s)
}

/// Runs the configured command and renders the primary output.
pub fn run(cfg: &RunConfig, log: &Log) -> Result<String, CliError> {
    cfg.validate()?;
    let command = cfg.command.ok_or_else(|| CliError::Validation("no command given".into()))?;
    for w in cfg.params()?.warnings() {
        log.line(format!("warning: {w}"));
    }
    let out = commands::dispatch(command, cfg, log)?;
    Ok(match cfg.output.format {
        Format::Json => out.to_json_lines(),
        Format::Csv => out.table.to_csv(),
    })
}

/// Full CLI step: run, then write to the configured path or stdout. Returns the exit code.
pub fn execute(cfg: &RunConfig) -> u8 {
    let log = match &cfg.output.path {
        Some(p) => match Log::to_file(&log_path(p)) {
            Ok(l) => l,
            Err(e) => {
                eprintln!("cannot open log next to {}: {e}", p.display());
                return EXIT_VALIDATION;
            }
        },
        None => Log::to_stderr(),
    };
    match run(cfg, &log) {
        Ok(text) => {
            let written = match &cfg.output.path {
                Some(p) => std::fs::write(p, text),
                None => io::stdout().write_all(text.as_bytes()),
            };
            if let Err(e) = written {
                eprintln!("cannot write output: {e}");
                return EXIT_VALIDATION;
            }
            log.line("status: ok");
            0
        }
        Err(e) => {
            log.line(format!("status: {e}"));
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
