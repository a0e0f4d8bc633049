//! `tagmap`: build tag maps from posed RGB-D frames, localize tags, evaluate
//! proposals against labeled scenes, and serve the grounding chat API.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O, 3 internal error.

mod commands;
mod config;
mod error;
mod logging;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};
use tracing::Level;

use crate::config::{CliConfig, Overrides};
use crate::error::{usage, CliResult, Kind};

#[derive(Debug, Parser)]
#[command(name = "tagmap", version, about = "Text-based tag maps for semantic navigation", allow_negative_numbers = true)]
struct Cli {
    /// JSON config file; flags take precedence over its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the effective configuration as JSON and exit.
    #[arg(long, global = true)]
    show_config: bool,
    /// Log JSON lines instead of text.
    #[arg(long, global = true)]
    log_json: bool,
    /// More log output (repeatable).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    /// Only log warnings and errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,
    /// Worker threads for build and eval (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a tag map from a dataset manifest.
    Build(commands::BuildArgs),
    /// Print the proposals of a tag (or of every tag) as JSON.
    Localize(commands::LocalizeArgs),
    /// Evaluate proposals against labeled scenes; writes report.json and report.csv.
    Eval(commands::EvalArgs),
    /// Serve the chat API over HTTP.
    Serve(commands::ServeArgs),
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = CliConfig::resolve(cli.config.as_deref(), &cli.overrides, cli.jobs)?;
    if cli.show_config {
        return commands::write_output(None, &format!("{}\n", cfg.to_json_pretty()));
    }
    match &cli.command {
        Some(Command::Build(args)) => commands::build(args, &cfg),
        Some(Command::Localize(args)) => commands::localize(args, &cfg),
        Some(Command::Eval(args)) => commands::eval(args, &cfg),
        Some(Command::Serve(args)) => commands::serve(args, &cfg),
        None => Err(usage("no subcommand given; see `tagmap --help`")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { Kind::Usage.exit_code() } else { ExitCode::SUCCESS };
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => Level::WARN,
        (false, 0) => Level::INFO,
        (false, 1) => Level::DEBUG,
        _ => Level::TRACE,
    };
    logging::init(cli.log_json, level);

    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            tracing::error!("{e}");
            e.kind.exit_code()
        }
        Err(_) => {
            tracing::error!("internal error (panic)");
            Kind::Internal.exit_code()
        }
    }
}
