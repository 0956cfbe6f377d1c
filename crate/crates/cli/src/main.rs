//! Command-line front end: configure, run, diagnose and export.

mod config;
mod run;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use config::{parse_override, RawConfig, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "tracelab", version, about = "Blow-up laboratory for the trace system")]
struct Cli {
    /// Mode to run; overrides `run.mode` from the config.
    #[arg(value_name = "MODE")]
    mode: Option<String>,
    /// Flat `section.key = value` configuration file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override a single key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "tracelab-out")]
    out: PathBuf,
    /// Suppress the summary on standard output.
    #[arg(long)]
    quiet: bool,
}

fn load(cli: &Cli) -> Result<RawConfig, String> {
    let mut raw = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            RawConfig::parse(&text).map_err(|e| format!("{}: {e}", p.display()))?
        }
        None => RawConfig::default(),
    };
    for o in &cli.overrides {
        let (k, v) = parse_override(o).map_err(|e| e.to_string())?;
        raw.set(&k, &v).map_err(|e| e.to_string())?;
    }
    if let Some(m) = &cli.mode {
        raw.set("run.mode", m).map_err(|e| e.to_string())?;
    }
    Ok(raw)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let raw = match load(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("tracelab: {e}");
            return ExitCode::from(2);
        }
    };
    let cfg = match RunConfig::resolve(&raw) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("tracelab: {e}");
            return ExitCode::from(2);
        }
    };
    match run::execute(&cfg, &raw, &cli.out, cli.quiet) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tracelab: {e}");
            ExitCode::from(e.code())
        }
    }
}
