//! `wikicite`: extract, classify and augment citations from MediaWiki dumps.

mod commands;
mod failure;
mod manifest;
mod settings;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use commands::Finish;
use failure::{CliResult, Failure};
use manifest::RunManifest;
use settings::Settings;

#[derive(Debug, Parser)]
#[command(name = "wikicite", version, about = "Citation extraction and classification for MediaWiki XML dumps")]
struct Cli {
    /// JSON file with default settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(flatten)]
    settings: Settings,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract citations from a pages-articles dump (.xml or .xml.bz2).
    Extract {
        dump: PathBuf,
        /// Output directory for the dataset and manifest.
        #[arg(long)]
        out: PathBuf,
        /// Also classify, compute metrics and, with --endpoint, look up identifiers.
        #[arg(long)]
        all: bool,
    },
    /// Relabel a dataset and report its scores.
    Classify {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Look up identifiers for book and journal citations that have none.
    Lookup {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score datasets or metrics files; two inputs are compared.
    Stats {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Snapshot label per input, in order.
        #[arg(long = "label")]
        labels: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Extract { all: true, .. } => "extract --all",
            Command::Extract { .. } => "extract",
            Command::Classify { .. } => "classify",
            Command::Lookup { .. } => "lookup",
            Command::Stats { .. } => "stats",
        }
    }

    fn out_dir(&self) -> Option<&Path> {
        match self {
            Command::Extract { out, .. } | Command::Classify { out, .. } | Command::Lookup { out, .. } => Some(out),
            Command::Stats { out, .. } => out.as_deref(),
        }
    }
}

fn effective_settings(cli: &Cli) -> CliResult<Settings> {
    let file = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    Ok(cli.settings.clone().over(file))
}

fn dispatch(command: &Command, settings: &Settings, manifest: &mut RunManifest) -> CliResult<Finish> {
    match command {
        Command::Extract { dump, out, all } => commands::extract(dump, out, *all, settings, manifest),
        Command::Classify { input, out } => commands::classify(input, out, settings, manifest),
        Command::Lookup { input, out } => commands::lookup(input, out, settings, manifest),
        Command::Stats {
            inputs,
            labels,
            out,
            json,
        } => commands::stats(inputs, labels, out.as_deref(), *json, settings, manifest),
    }
}

fn report(failure: &Failure) -> ExitCode {
    eprintln!("error: {failure}");
    ExitCode::from(failure.code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let settings = match effective_settings(&cli) {
        Ok(s) => s,
        Err(failure) => return report(&failure),
    };
    let mut manifest = RunManifest::new(cli.command.name(), &settings, cli.config.as_deref());
    let result = dispatch(&cli.command, &settings, &mut manifest);
    manifest.status = match &result {
        Ok(Finish::Complete) => "complete",
        Ok(Finish::Incomplete) => "incomplete",
        Err(f) if f.code == failure::EXIT_BUDGET => "budget_exceeded",
        Err(_) => "failed",
    }
    .to_string();
    manifest.error = result.as_ref().err().map(|f| f.to_string());
    if let Some(dir) = cli.command.out_dir() {
        if let Err(e) = manifest.write(dir) {
            eprintln!("error: cannot write manifest in {}: {e}", dir.display());
            if result.is_ok() {
                return ExitCode::from(failure::EXIT_OTHER);
            }
        }
    }
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(failure) => report(&failure),
    }
}
