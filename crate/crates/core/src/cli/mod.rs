//! Batch front end: `parcon <command> --config FILE [--out DIR] [--dump] [--quiet]`.
//!
//! Exit codes: 0 when every verdict passes, 1 when a verdict fails, 2 on any
//! usage, configuration, I/O or solver error. Errors go to standard error
//! as a single line starting with `ERROR <code>:`.

mod commands;
pub mod config;
mod report;
mod selftest;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use commands::{run_concentrate, run_diagnose, run_optimize, run_perturb, run_state};
pub use config::{load_config, parse_config, RunConfig};
pub use report::{write_report, RunReport, Verdict};
pub use selftest::run_selftest;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("config: line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config: {key}: {message}")]
    Key { key: String, message: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("io: {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("computation: {0}")]
    Compute(#[from] crate::Error),
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    pub fn exit_code(&self) -> i32 {
        2
    }
}

#[derive(Debug, Parser)]
#[command(name = "parcon", version, about = "Optimal control experiments for semilinear parabolic equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Configuration file (`section.key = value` lines).
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Output directory [default: output.dir from the config, else ./out].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the space-time fields as field_*.csv.
    #[arg(long)]
    dump: bool,
    /// Print nothing on success.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the state equation for the starting control.
    State(Common),
    /// Run the ascent and write its trace.
    Optimize(Common),
    /// First- and second-order optimality diagnostics.
    Diagnose(Common),
    /// Energy concentration sweep over K.
    Concentrate(Common),
    /// Time-localized perturbations against the linearized Cauchy problem.
    Perturb(Common),
    /// Built-in consistency checks.
    Selftest {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
}

/// Parses `argv` (including the program name), runs the command and returns
/// the exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            return fail(&CliError::Usage(first.to_string()));
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => fail(&e),
    }
}

fn fail(e: &CliError) -> i32 {
    let code = e.exit_code();
    eprintln!("ERROR {code}: {e}");
    code
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    let started = Instant::now();
    type Runner = fn(&RunConfig, bool) -> Result<RunReport, CliError>;
    let (runner, common): (Runner, Common) = match cli.command {
        Command::State(c) => (run_state, c),
        Command::Optimize(c) => (run_optimize, c),
        Command::Diagnose(c) => (run_diagnose, c),
        Command::Concentrate(c) => (run_concentrate, c),
        Command::Perturb(c) => (run_perturb, c),
        Command::Selftest { config, output } => {
            let cfg = config.as_deref().map(load_config).transpose()?;
            let report = run_selftest(cfg.as_ref());
            return finish(&report, output, cfg.as_ref(), started);
        }
    };
    let cfg = load_config(&common.config)?;
    let report = runner(&cfg, common.output.dump || cfg.dump)?;
    finish(&report, common.output, Some(&cfg), started)
}

fn finish(report: &RunReport, output: OutputArgs, cfg: Option<&RunConfig>, started: Instant) -> Result<i32, CliError> {
    let dir = output.out.or_else(|| cfg.and_then(|c| c.output_dir.clone())).unwrap_or_else(|| PathBuf::from("out"));
    write_report(report, &dir, started.elapsed().as_secs_f64())?;
    if !output.quiet {
        print!("{}", report.summary());
    }
    Ok(if report.all_pass() { 0 } else { 1 })
}
